#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "xsalign/common.hpp"

namespace xsalign {

uint64_t fnv1a64(std::string_view s);
uint64_t fnv1a64(const void* data, size_t n, uint64_t h);

// Locale-independent number formatting/parsing (std::to_chars / from_chars).
std::string format_double(double v, int significant);  // %.<sig>g style
std::string format_double(double v);                   // shortest round-trip
double parse_double(std::string_view s, const std::string& what);  // finite or throws
long long parse_int(std::string_view s, const std::string& what);

std::vector<std::string_view> split_char(std::string_view s, char sep);
std::vector<std::string_view> split_spaces(std::string_view s);  // runs of blanks
// Splits a word into UTF-8 code point substrings; invalid bytes become
// single-byte units rather than an error.
std::vector<std::string> utf8_codepoints(std::string_view word);

std::vector<std::string> read_lines(const std::string& path);  // throws if unreadable
void write_file(const std::string& path, std::string_view content);
uint64_t file_fnv(const std::string& path);

// Chunked [begin, end) ranges over [0, n); results must go to disjoint slots
// so the outcome is identical for any thread count.
void parallel_for(int64_t n, int threads,
                  const std::function<void(int64_t, int64_t)>& body);

// Flat key/value text, insertion-ordered. Config files use "key = value",
// reports and meta files "key=value"; both forms parse.
struct KvMap {
  std::vector<std::pair<std::string, std::string>> items;

  bool has(std::string_view key) const;
  const std::string* find(std::string_view key) const;
  std::string get(std::string_view key, std::string def = "") const;
  std::string require(std::string_view key) const;
  long long get_int(std::string_view key, long long def) const;
  double get_double(std::string_view key, double def) const;
  bool get_bool(std::string_view key, bool def) const;
  void set(std::string_view key, std::string value);
  void set_int(std::string_view key, long long v);
  void set_double(std::string_view key, double v);

  static KvMap parse_text(std::string_view text, const std::string& origin);
  static KvMap parse_file(const std::string& path);

  std::string serialize(const char* sep = "=") const;
  // Sorted-by-key form used for config hashing.
  std::string canonical() const;
  uint64_t hash() const;
  void write(const std::string& path, const char* sep = "=") const;
};

}  // namespace xsalign
