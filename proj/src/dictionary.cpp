#include "xsalign/dictionary.hpp"

#include <set>

#include "xsalign/util.hpp"

namespace xsalign {

Dictionary read_dictionary(const std::string& path) {
  std::vector<std::string> lines = read_lines(path);
  // tolerate blank lines only at end of file
  while (!lines.empty() && lines.back().empty()) lines.pop_back();

  Dictionary dict;
  dict.pairs.reserve(lines.size());
  std::set<std::pair<std::string, std::string>> seen;
  for (size_t i = 0; i < lines.size(); ++i) {
    const std::string& line = lines[i];
    std::string where = path + ": line " + std::to_string(i + 1);
    if (line.empty()) fail(where + ": empty line");
    size_t sep = line.find_first_of(" \t");
    if (sep == std::string::npos) fail(where + ": expected two fields");
    std::string src = line.substr(0, sep);
    std::string tgt = line.substr(sep + 1);
    if (src.empty() || tgt.empty() || tgt.find_first_of(" \t") != std::string::npos)
      fail(where + ": expected exactly two fields");
    auto pair = std::make_pair(std::move(src), std::move(tgt));
    if (!seen.insert(pair).second)
      fail(where + ": duplicate pair '" + pair.first + " " + pair.second + "'");
    dict.pairs.push_back(std::move(pair));
  }
  return dict;
}

void write_dictionary(const Dictionary& dict, const std::string& path) {
  std::string out;
  for (const auto& [src, tgt] : dict.pairs) {
    out += src;
    out += ' ';
    out += tgt;
    out += '\n';
  }
  write_file(path, out);
}

}  // namespace xsalign
