#pragma once

#include <string>
#include <utility>
#include <vector>

#include "xsalign/common.hpp"

namespace xsalign {

// Ordered (source, target) word pairs. A source word may repeat with
// different targets (multi-translation gold sets); exact duplicates are
// rejected on read.
struct Dictionary {
  std::vector<std::pair<std::string, std::string>> pairs;

  size_t size() const { return pairs.size(); }
  bool empty() const { return pairs.empty(); }
};

// One pair per line, source and target separated by a single tab or space.
Dictionary read_dictionary(const std::string& path);
void write_dictionary(const Dictionary& dict, const std::string& path);

}  // namespace xsalign
