#pragma once

#include <string>
#include <vector>

#include "xsalign/common.hpp"
#include "xsalign/dictionary.hpp"
#include "xsalign/embedding.hpp"
#include "xsalign/rng.hpp"

namespace xsalign {

enum class NormStep { Unit, Center };

struct MappingConfig {
  std::vector<NormStep> normalize = {NormStep::Unit, NormStep::Center, NormStep::Unit};
  bool whiten = false;
  double reweight = 0.5;  // singular-value exponent when whitening
  int csls_k = 10;
  int cutoff = 2000;  // self-learning vocabulary cutoff
  double keep_prob_start = 0.1;
  double keep_prob_mult = 2.0;
  double threshold = 1e-6;
  int max_iterations = 500;
  int stagnation_patience = 10;  // iterations without improvement before growing keep_prob
  uint64_t seed = 1;
  int threads = 1;

  void validate() const;
};

struct MappedPair {
  EmbeddingSpace src;  // mapped into the common space
  EmbeddingSpace tgt;
  Matrix transform;  // source-side map; orthogonal when whitening is off
  double objective = 0.0;  // mean cosine over the final dictionary
  bool orthogonal = true;
  bool converged = true;
  int iterations = 0;
  std::vector<double> objective_trace;  // self-learning only
  int dropped_pairs = 0;                // dictionary entries missing from a vocabulary
};

EmbeddingSpace apply_normalization(const EmbeddingSpace& space,
                                   const std::vector<NormStep>& steps);

// W maximizing sum_i (X_i W) . Y_i over orthogonal matrices: W = U V^T from
// the SVD of X^T Y. Rows of X and Y are paired.
Matrix procrustes(const Matrix& x, const Matrix& y);

// Documented floating-point order for the CSLS family: similarities are
// sequential dot products over dimensions; top-k selection sorts by
// (value desc, index asc) and sums in that order. Brute-force oracles can
// therefore match these results exactly.

// r_i = mean similarity of queries[i] to its k nearest rows of cands.
Vector knn_mean_similarity(const Matrix& queries, const Matrix& cands, int k,
                           int threads = 1);

// CSLS(q, c_j) = 2 q.c_j - r_query - r_cands[j]. Inputs unit-normalized.
Vector csls_scores(const Vector& query, const Matrix& cands, double r_query,
                   const Vector& r_cands);

// Full score matrix between row sets (queries x cands), hub penalties
// computed within the two sets.
Matrix csls_matrix(const Matrix& queries, const Matrix& cands, int k, int threads = 1);

// Unsupervised seed induction by similarity-distribution matching: each
// word's signature is its sorted, unit-normalized row of the intra-space
// similarity matrix over the top-cutoff words; signatures are matched across
// spaces by nearest neighbor. Rotation-invariant by construction.
// match_scores, when given, receives each pair's signature similarity so
// callers can apply a confidence threshold.
Dictionary induce_seed_unsupervised(const EmbeddingSpace& src, const EmbeddingSpace& tgt,
                                    int cutoff, int threads = 1,
                                    std::vector<double>* match_scores = nullptr);

// Normalization + orthogonal Procrustes over the dictionary pairs; optional
// whitening / singular-value re-weighting / de-whitening chain behind
// config.whiten. Dictionary entries missing from either vocabulary are
// dropped (at least one pair must remain).
MappedPair map_supervised(const EmbeddingSpace& src, const EmbeddingSpace& tgt,
                          const Dictionary& dict, const MappingConfig& config);

// Robust self-learning: alternate Procrustes on the current dictionary with
// CSLS re-induction over the top-cutoff words (union of both directions),
// dropping score entries with probability 1 - keep_prob; keep_prob grows on
// stagnation. Best objective is kept; converged=false if the iteration cap
// was hit first.
MappedPair self_learn(const EmbeddingSpace& src, const EmbeddingSpace& tgt,
                      const Dictionary& seed, const MappingConfig& config);

struct SelectionReport {
  double aligned_p1 = 0.0;
  double unaligned_p1 = 0.0;
  bool chose_aligned = true;
};

// Picks the candidate with the higher BLI P@1 against the pivot over the
// validation dictionary; ties go to the aligned candidate.
SelectionReport select_aligned(const EmbeddingSpace& aligned,
                               const EmbeddingSpace& unaligned,
                               const Dictionary& validation,
                               const EmbeddingSpace& pivot,
                               const MappingConfig& config);

}  // namespace xsalign
