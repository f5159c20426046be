#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "xsalign/common.hpp"
#include "xsalign/rng.hpp"

namespace xsalign {

using Sentence = std::vector<std::string>;
using Paragraph = std::vector<Sentence>;

// Filtered sentences grouped in paragraphs. Retained sentences have at least
// min_tokens words and retained paragraphs at least two sentences; freq covers
// retained text only.
struct Corpus {
  std::vector<Paragraph> paragraphs;
  std::unordered_map<std::string, uint64_t> freq;
  uint64_t total_tokens = 0;
  int min_tokens = 7;

  size_t sentence_count() const;
  // paragraphs flattened in order
  std::vector<const Sentence*> sentences() const;
};

// File format: UTF-8, one sentence per line, blank line separates paragraphs,
// tokens separated by spaces (pre-tokenized input).
Corpus load_corpus(const std::string& path, int min_tokens = 7);
Corpus corpus_from_paragraphs(std::vector<Paragraph> paragraphs, int min_tokens = 7);
void write_corpus(const Corpus& corpus, const std::string& path);

// Vocabulary = words with freq >= min_count, ordered by descending frequency
// then lexicographically.
std::vector<std::string> build_vocab(const Corpus& corpus, int min_count = 5);

// Sampling distribution P(w) proportional to freq(w)^exponent.
struct NegativeTable {
  std::vector<std::string> words;
  std::vector<double> cdf;  // non-decreasing, last entry exactly 1

  int sample(Rng& rng) const;  // index into words
};

NegativeTable build_negative_table(const std::unordered_map<std::string, uint64_t>& freq,
                                   const std::vector<std::string>& vocab,
                                   double exponent = 0.75);

// k i.i.d. draws, resampling any draw equal to forbidden.
std::vector<int> sample_negatives(const NegativeTable& table, int k,
                                  const std::string& forbidden, Rng& rng);

}  // namespace xsalign
