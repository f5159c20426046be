#pragma once

#include <string>
#include <vector>

#include "xsalign/common.hpp"
#include "xsalign/embedding.hpp"
#include "xsalign/encoder.hpp"
#include "xsalign/rng.hpp"

namespace xsalign {

struct DccaConfig {
  double r1 = 1e-3;  // covariance diagonal regularizers
  double r2 = 1e-3;
  int k_cca = 0;  // components; 0 = all = min(d1, d2)
  double eig_clamp = 1e-12;

  void validate() const;
};

// Mean over batch and dimensions of (H1 - H2)^2; gradient w.r.t. H1 only
// (the static side stays frozen). Requires d1 == d2.
double mse_loss(const Matrix& h1, const Matrix& h2, Matrix* grad_h1);

// Negated sum of the top k_cca singular values of
// T = S11^{-1/2} S12 S22^{-1/2} over the centered views, with regularized
// covariances. Gradient w.r.t. H1 only.
double dcca_loss(const Matrix& h1, const Matrix& h2, const DccaConfig& config,
                 Matrix* grad_h1);

struct AlignBatch {
  Matrix h1;  // m x d_model, mean-pooled contextual word states
  Matrix h2;  // m x D, static vectors, frozen
  std::vector<std::string> words;
  std::vector<int> word_rows;  // rows into the static space
};

// m words from the static vocabulary, uniform without replacement within the
// batch (frequency-weighted behind the flag); each encoded as BOS word EOS
// and mean-pooled at `layer`. Untokenizable words are resampled.
AlignBatch sample_align_batch(const EmbeddingSpace& statics, const EncoderModel& model,
                              const SubwordTokenizer& tokenizer, int m, int layer,
                              Rng& rng, bool frequency_weighted = false,
                              const std::vector<double>* word_weights = nullptr);

// Deterministic word-id deck used by the training loop: cycles the
// vocabulary without replacement, reshuffling after each pass.
class AlignDeck {
 public:
  AlignDeck(int vocab_size, Rng rng);
  int next();

 private:
  std::vector<int> order_;
  size_t at_ = 0;
  Rng rng_;
  void reshuffle();
};

// Pooled encoder representation of one word (BOS word EOS, layer `layer`),
// with the forward cache and span retained for backprop.
struct WordForward {
  std::vector<int> tokens;
  std::pair<int, int> span;
  EncoderCache<float> cache;
  bool ok = false;
};

bool word_forward(const EncoderModel& model, const SubwordTokenizer& tokenizer,
                  const std::string& word, int layer, WordForward& out,
                  VectorT<float>* pooled);

}  // namespace xsalign
