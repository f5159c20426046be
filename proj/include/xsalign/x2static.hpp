#pragma once

#include <optional>
#include <vector>

#include "xsalign/common.hpp"
#include "xsalign/corpus.hpp"
#include "xsalign/embedding.hpp"
#include "xsalign/encoder.hpp"

namespace xsalign {

// Distills one static vector per vocabulary word from the encoder's mid-layer
// states: each in-vocabulary occurrence is predicted from the rest of its
// sentence via logistic negative sampling. The encoder stays frozen.
struct ExtractionConfig {
  int layer = 0;  // 0 = encoder's extract layer (middle by default)
  int negatives = 10;
  double lr = 0.05;
  int epochs = 4;
  int dim = 0;  // 0 = d_model; must match d_model (dot-product objective)
  long long max_sentences = 0;  // 0 = all
  bool sample_random = false;   // cap takes a seeded shuffle instead of the head
  int min_count = 5;
  double neg_exponent = 0.75;
  bool cosine = false;    // similarity: dot product (default) or cosine
  bool lr_decay = true;   // linear decay to zero over the update budget
  uint64_t seed = 1;

  void validate() const;
};

// Mean of the layer rows at non-special positions outside the target word's
// span; empty (nullopt) for effectively single-word sentences.
std::optional<Vector> context_vector(const MatrixT<float>& states,
                                     std::pair<int, int> target_span,
                                     const std::vector<int>& tokens);

// L = -log s(c.v_w) - sum_n log s(-c.v_n); gradients for the static vectors
// only, the context is a constant input.
double pair_loss(const Vector& context, const Vector& target, const Matrix& negatives,
                 Vector* grad_target, Matrix* grad_negatives, bool cosine = false);

// loss_trace, when given, receives the per-update pair losses in order.
EmbeddingSpace extract_static(const Corpus& corpus, const EncoderModel& model,
                              const SubwordTokenizer& tokenizer,
                              const ExtractionConfig& config,
                              std::vector<double>* loss_trace = nullptr);

}  // namespace xsalign
