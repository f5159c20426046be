#pragma once

#include <string>
#include <tuple>
#include <vector>

#include "xsalign/common.hpp"
#include "xsalign/dictionary.hpp"
#include "xsalign/embedding.hpp"
#include "xsalign/encoder.hpp"

namespace xsalign {

enum class BliMethod { Nn, Csls };

struct BliResult {
  double p_at_1 = 0.0;   // over covered source words only
  double coverage = 0.0; // gold source words usable in both vocabularies
  int n_covered = 0;
  int n_gold_sources = 0;
  std::vector<std::pair<std::string, std::string>> predictions;  // (source, top-1)
};

// Top-1 retrieval against the gold dictionary, multi-translation aware:
// a prediction is correct if it appears among the source word's gold targets.
// Spaces are unit-normalized internally; CSLS hub penalties use the full
// vocabularies. Ties resolve to the lowest index.
BliResult eval_bli(const EmbeddingSpace& src, const EmbeddingSpace& tgt,
                   const Dictionary& gold, BliMethod method = BliMethod::Csls,
                   int k = 10, int threads = 1);

struct SimilarityResult {
  double spearman = 0.0;
  int n_scored = 0;
  int n_skipped = 0;  // OOV pairs
};

using SimilarityGold = std::vector<std::tuple<std::string, std::string, double>>;

// Cosine vs. gold scores, Spearman with average-rank ties. Monolingual when
// space2 is null, cross-lingual otherwise (word1 in space, word2 in space2).
SimilarityResult eval_similarity(const EmbeddingSpace& space,
                                 const EmbeddingSpace* space2,
                                 const SimilarityGold& gold);

// "word1<TAB>word2<TAB>score" per line.
SimilarityGold read_similarity_file(const std::string& path);

// Spearman rank correlation with average ranks for ties.
double spearman_rho(const std::vector<double>& x, const std::vector<double>& y);

struct RetrievalResult {
  double acc_src2tgt = 0.0;
  double acc_tgt2src = 0.0;
  int layer = 0;
  int n = 0;
};

// Position i on each side is the gold pair. Sentences are encoded, the given
// layer mean-pooled over non-special positions, and retrieval is argmax
// cosine in the other side.
RetrievalResult eval_retrieval(const EncoderModel& model, const SubwordTokenizer& tokenizer,
                               const std::vector<Sentence>& src,
                               const std::vector<Sentence>& tgt, int layer,
                               int threads = 1);

// One sentence per line, space-separated tokens.
std::vector<Sentence> read_sentence_file(const std::string& path);

}  // namespace xsalign
