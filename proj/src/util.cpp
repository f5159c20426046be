#include "xsalign/util.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <thread>

namespace xsalign {

static constexpr uint64_t kFnvBasis = 1469598103934665603ULL;
static constexpr uint64_t kFnvPrime = 1099511628211ULL;

uint64_t fnv1a64(const void* data, size_t n, uint64_t h) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (size_t i = 0; i < n; ++i) h = (h ^ p[i]) * kFnvPrime;
  return h;
}

uint64_t fnv1a64(std::string_view s) { return fnv1a64(s.data(), s.size(), kFnvBasis); }

std::string format_double(double v, int significant) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v, std::chars_format::general,
                           significant);
  return std::string(buf, res.ptr);
}

std::string format_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

double parse_double(std::string_view s, const std::string& what) {
  double v = 0.0;
  auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size())
    fail(what + ": bad number '" + std::string(s) + "'");
  if (!std::isfinite(v)) fail(what + ": non-finite value '" + std::string(s) + "'");
  return v;
}

long long parse_int(std::string_view s, const std::string& what) {
  long long v = 0;
  auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size())
    fail(what + ": bad integer '" + std::string(s) + "'");
  return v;
}

std::vector<std::string_view> split_char(std::string_view s, char sep) {
  std::vector<std::string_view> out;
  size_t start = 0;
  for (size_t i = 0; i <= s.size(); ++i) {
    if (i == s.size() || s[i] == sep) {
      out.push_back(s.substr(start, i - start));
      start = i + 1;
    }
  }
  return out;
}

std::vector<std::string_view> split_spaces(std::string_view s) {
  std::vector<std::string_view> out;
  size_t i = 0;
  while (i < s.size()) {
    while (i < s.size() && (s[i] == ' ' || s[i] == '\t')) ++i;
    size_t start = i;
    while (i < s.size() && s[i] != ' ' && s[i] != '\t') ++i;
    if (i > start) out.push_back(s.substr(start, i - start));
  }
  return out;
}

std::vector<std::string> utf8_codepoints(std::string_view word) {
  std::vector<std::string> out;
  size_t i = 0;
  while (i < word.size()) {
    unsigned char c = word[i];
    size_t len = 1;
    if ((c & 0x80u) == 0)
      len = 1;
    else if ((c & 0xE0u) == 0xC0u)
      len = 2;
    else if ((c & 0xF0u) == 0xE0u)
      len = 3;
    else if ((c & 0xF8u) == 0xF0u)
      len = 4;
    if (i + len > word.size()) len = 1;
    // continuation bytes must match or we fall back to a single byte
    for (size_t k = 1; k < len; ++k) {
      if ((static_cast<unsigned char>(word[i + k]) & 0xC0u) != 0x80u) {
        len = 1;
        break;
      }
    }
    out.emplace_back(word.substr(i, len));
    i += len;
  }
  return out;
}

std::vector<std::string> read_lines(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail("cannot open file: " + path);
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(line);
  }
  if (in.bad()) fail("read error: " + path);
  return lines;
}

void write_file(const std::string& path, std::string_view content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail("cannot open for writing: " + path);
  out.write(content.data(), static_cast<std::streamsize>(content.size()));
  if (!out) fail("write failed: " + path);
}

uint64_t file_fnv(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail("cannot open file: " + path);
  uint64_t h = kFnvBasis;
  char buf[1 << 14];
  while (in.read(buf, sizeof(buf)) || in.gcount() > 0)
    h = fnv1a64(buf, static_cast<size_t>(in.gcount()), h);
  return h;
}

void parallel_for(int64_t n, int threads,
                  const std::function<void(int64_t, int64_t)>& body) {
  if (n <= 0) return;
  int t = std::max(1, threads);
  t = static_cast<int>(std::min<int64_t>(t, n));
  if (t == 1) {
    body(0, n);
    return;
  }
  std::vector<std::thread> workers;
  workers.reserve(static_cast<size_t>(t));
  int64_t chunk = (n + t - 1) / t;
  for (int i = 0; i < t; ++i) {
    int64_t begin = i * chunk;
    int64_t end = std::min<int64_t>(n, begin + chunk);
    if (begin >= end) break;
    workers.emplace_back([&body, begin, end] { body(begin, end); });
  }
  for (auto& w : workers) w.join();
}

bool KvMap::has(std::string_view key) const { return find(key) != nullptr; }

const std::string* KvMap::find(std::string_view key) const {
  for (const auto& [k, v] : items)
    if (k == key) return &v;
  return nullptr;
}

std::string KvMap::get(std::string_view key, std::string def) const {
  const std::string* v = find(key);
  return v ? *v : std::move(def);
}

std::string KvMap::require(std::string_view key) const {
  const std::string* v = find(key);
  if (!v) fail("missing config key: " + std::string(key));
  return *v;
}

long long KvMap::get_int(std::string_view key, long long def) const {
  const std::string* v = find(key);
  return v ? parse_int(*v, "key '" + std::string(key) + "'") : def;
}

double KvMap::get_double(std::string_view key, double def) const {
  const std::string* v = find(key);
  return v ? parse_double(*v, "key '" + std::string(key) + "'") : def;
}

bool KvMap::get_bool(std::string_view key, bool def) const {
  const std::string* v = find(key);
  if (!v) return def;
  if (*v == "true" || *v == "1" || *v == "yes") return true;
  if (*v == "false" || *v == "0" || *v == "no") return false;
  fail("key '" + std::string(key) + "': expected boolean, got '" + *v + "'");
}

void KvMap::set(std::string_view key, std::string value) {
  for (auto& [k, v] : items) {
    if (k == key) {
      v = std::move(value);
      return;
    }
  }
  items.emplace_back(std::string(key), std::move(value));
}

void KvMap::set_int(std::string_view key, long long v) { set(key, std::to_string(v)); }
void KvMap::set_double(std::string_view key, double v) { set(key, format_double(v)); }

static std::string_view trim(std::string_view s) {
  size_t b = 0, e = s.size();
  while (b < e && (s[b] == ' ' || s[b] == '\t')) ++b;
  while (e > b && (s[e - 1] == ' ' || s[e - 1] == '\t')) --e;
  return s.substr(b, e - b);
}

KvMap KvMap::parse_text(std::string_view text, const std::string& origin) {
  KvMap kv;
  size_t lineno = 0;
  for (std::string_view raw : split_char(text, '\n')) {
    ++lineno;
    if (!raw.empty() && raw.back() == '\r') raw.remove_suffix(1);
    std::string_view line = trim(raw);
    if (line.empty() || line[0] == '#') continue;
    size_t eq = line.find('=');
    if (eq == std::string_view::npos)
      fail(origin + ": line " + std::to_string(lineno) + ": expected key = value");
    std::string_view key = trim(line.substr(0, eq));
    std::string_view val = trim(line.substr(eq + 1));
    if (key.empty())
      fail(origin + ": line " + std::to_string(lineno) + ": empty key");
    if (kv.has(key))
      fail(origin + ": line " + std::to_string(lineno) + ": duplicate key '" +
           std::string(key) + "'");
    kv.set(key, std::string(val));
  }
  return kv;
}

KvMap KvMap::parse_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail("cannot open config file: " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_text(ss.str(), path);
}

std::string KvMap::serialize(const char* sep) const {
  std::string out;
  for (const auto& [k, v] : items) {
    out += k;
    out += sep;
    out += v;
    out += '\n';
  }
  return out;
}

std::string KvMap::canonical() const {
  auto sorted = items;
  std::sort(sorted.begin(), sorted.end());
  std::string out;
  for (const auto& [k, v] : sorted) {
    out += k;
    out += '=';
    out += v;
    out += '\n';
  }
  return out;
}

uint64_t KvMap::hash() const { return fnv1a64(canonical()); }

void KvMap::write(const std::string& path, const char* sep) const {
  write_file(path, serialize(sep));
}

}  // namespace xsalign
