#pragma once

#include <string>
#include <unordered_map>
#include <vector>

#include "xsalign/common.hpp"

namespace xsalign {

// Vocabulary plus one dense row per word. Immutable after construction;
// the transforms below return new spaces.
struct EmbeddingSpace {
  std::vector<std::string> words;
  Matrix matrix;  // |words| x dim
  std::unordered_map<std::string, int> index;

  int dim() const { return static_cast<int>(matrix.cols()); }
  int size() const { return static_cast<int>(words.size()); }
  // row index of word, -1 if absent
  int find(const std::string& word) const {
    auto it = index.find(word);
    return it == index.end() ? -1 : it->second;
  }

  // Validates: unique words, row count match, dim > 0, finite entries.
  static EmbeddingSpace create(std::vector<std::string> words, Matrix matrix);
};

// Text format: first line "<count> <dim>", then one "<word> <floats...>" line
// per word, single-space separated, UTF-8, floats with 6 significant digits.
// Parsing is locale-independent; errors carry line numbers.
EmbeddingSpace read_space(const std::string& path);
void write_space(const EmbeddingSpace& space, const std::string& path);

EmbeddingSpace unit_normalize(const EmbeddingSpace& space);
EmbeddingSpace mean_center(const EmbeddingSpace& space);

}  // namespace xsalign
