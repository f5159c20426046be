#pragma once

#include <string>
#include <vector>

#include "xsalign/common.hpp"
#include "xsalign/rng.hpp"
#include "xsalign/tokenizer.hpp"
#include "xsalign/util.hpp"

namespace xsalign {

// Post-layer-norm transformer encoder with GELU FFN and an MLM head tied to
// the input embeddings by default. Single precision for training; the double
// instantiation exists for finite-difference gradient tests.
struct EncoderConfig {
  int n_layers = 2;
  int n_heads = 4;
  int d_model = 32;
  int d_ff = 64;
  int max_positions = 64;
  int vocab_size = 0;  // set from the tokenizer
  double p_mask = 0.15;
  double mask_mask = 0.8;    // replace by <mask>
  double mask_random = 0.1;  // replace by random subword
  double mask_keep = 0.1;    // keep original
  int extract_layer = 0;     // 0 = ceil(L/2)
  int retrieval_layer = 0;   // 0 = min(L, ceil(L/2)+1)
  bool tied_head = true;
  double init_std = 0.02;
  double ln_eps = 1e-12;  // variance floor; keeps normalized rows exactly unit variance

  int effective_extract_layer() const;
  int effective_retrieval_layer() const;
  void validate() const;

  KvMap to_kv() const;
  static EncoderConfig from_kv(const KvMap& kv);
};

template <typename S>
struct EncoderParams {
  using Mat = MatrixT<S>;
  using Vec = VectorT<S>;

  Mat tok_emb;  // V x d
  Mat pos_emb;  // max_positions x d
  struct Layer {
    Mat wq, wk, wv, wo;  // d x d, applied as x * W
    Vec bq, bk, bv, bo;
    Vec ln1_g, ln1_b;
    Mat w1;  // d x d_ff
    Vec b1;
    Mat w2;  // d_ff x d
    Vec b2;
    Vec ln2_g, ln2_b;
  };
  std::vector<Layer> layers;
  Mat head_w;  // V x d, only when untied
  Vec head_b;  // V

  struct View {
    std::string name;
    S* data;
    Eigen::Index size;
  };
  struct ConstView {
    std::string name;
    const S* data;
    Eigen::Index size;
  };

  // Flat access to every tensor in declared order (the checkpoint layout).
  std::vector<View> views();
  std::vector<ConstView> views() const;
  Eigen::Index total_size() const;

  void init(const EncoderConfig& cfg, Rng& rng);
  void set_zero();
  static EncoderParams zeros_like(const EncoderParams& other);

  template <typename T>
  EncoderParams<T> cast() const {
    EncoderParams<T> out;
    out.tok_emb = tok_emb.template cast<T>();
    out.pos_emb = pos_emb.template cast<T>();
    out.layers.resize(layers.size());
    for (size_t l = 0; l < layers.size(); ++l) {
      const Layer& a = layers[l];
      auto& b = out.layers[l];
      b.wq = a.wq.template cast<T>();
      b.wk = a.wk.template cast<T>();
      b.wv = a.wv.template cast<T>();
      b.wo = a.wo.template cast<T>();
      b.bq = a.bq.template cast<T>();
      b.bk = a.bk.template cast<T>();
      b.bv = a.bv.template cast<T>();
      b.bo = a.bo.template cast<T>();
      b.ln1_g = a.ln1_g.template cast<T>();
      b.ln1_b = a.ln1_b.template cast<T>();
      b.w1 = a.w1.template cast<T>();
      b.b1 = a.b1.template cast<T>();
      b.w2 = a.w2.template cast<T>();
      b.b2 = a.b2.template cast<T>();
      b.ln2_g = a.ln2_g.template cast<T>();
      b.ln2_b = a.ln2_b.template cast<T>();
    }
    out.head_w = head_w.template cast<T>();
    out.head_b = head_b.template cast<T>();
    return out;
  }
};

template <typename S>
struct EncoderCache {
  using Mat = MatrixT<S>;
  using Vec = VectorT<S>;

  std::vector<int> tokens;
  std::vector<Mat> h;  // L+1 states, h[0] = token + positional embeddings
  struct LayerCache {
    Mat q, k, v;
    std::vector<Mat> attn;  // per head, row-stochastic n x n
    Mat o_cat;
    Mat xhat1;
    Vec inv_std1;
    Mat y;  // LN1 output / FFN input
    Mat z1;
    Mat gelu_z1;
    Mat xhat2;
    Vec inv_std2;
  };
  std::vector<LayerCache> layers;
};

template <typename S>
struct EncoderModelT {
  using Mat = MatrixT<S>;
  using Vec = VectorT<S>;

  EncoderConfig cfg;
  EncoderParams<S> params;

  static EncoderModelT init(const EncoderConfig& cfg, Rng& rng);

  // Pre: tokens wrapped in BOS ... EOS, length <= max_positions.
  void forward(const std::vector<int>& tokens, EncoderCache<S>& cache) const;
  // All L+1 hidden-state matrices; deterministic in (params, tokens).
  std::vector<Mat> encode(const std::vector<int>& tokens) const;

  // Mean cross-entropy over target positions, computed from a forward cache.
  // When grads is set, accumulates head gradients (scaled) and writes the
  // scaled gradient w.r.t. the final hidden states into dfinal.
  double mlm_head_loss(const EncoderCache<S>& cache, const std::vector<int>& positions,
                       const std::vector<int>& target_ids, Mat* dfinal,
                       EncoderParams<S>* grads, double scale = 1.0) const;

  // Full forward + loss + backward convenience; gradients for all parameters.
  double mlm_loss(const std::vector<int>& corrupted, const std::vector<int>& positions,
                  const std::vector<int>& target_ids, EncoderParams<S>* grads) const;

  // Backpropagates injected gradients w.r.t. the per-layer outputs.
  // dstates[l] may be empty (zero); dstates.size() == L+1.
  void backward(const EncoderCache<S>& cache, const std::vector<Mat>& dstates,
                EncoderParams<S>& grads) const;

  template <typename T>
  EncoderModelT<T> cast() const {
    EncoderModelT<T> out;
    out.cfg = cfg;
    out.params = params.template cast<T>();
    return out;
  }
};

using EncoderModel = EncoderModelT<float>;
using EncoderModelD = EncoderModelT<double>;

// Mean of the rows in [begin, end); rows holding BOS/EOS/PAD/MASK are
// excluded when exclude_specials is set. Throws if nothing remains.
template <typename S>
VectorT<S> mean_pool(const MatrixT<S>& states, int begin, int end,
                     const std::vector<int>& tokens, bool exclude_specials = true);

struct MlmExample {
  std::vector<int> corrupted;
  std::vector<int> positions;  // target positions, ascending
  std::vector<int> targets;    // original ids at those positions
};

// 15% / 80-10-10 masking with specials excluded. A draw that selects nothing
// is re-rolled once, then one maskable position is forced.
MlmExample mask_for_mlm(const std::vector<int>& tokens, Rng& rng,
                        const EncoderConfig& cfg);

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

template <typename S>
struct AdamState {
  AdamConfig cfg;
  long long t = 0;
  std::vector<std::vector<S>> m, v;  // aligned with EncoderParams views

  void init_like(const EncoderParams<S>& params);
};

// One Adam update; throws naming the parameter on a non-finite gradient.
template <typename S>
void adam_step(EncoderParams<S>& params, const EncoderParams<S>& grads,
               AdamState<S>& state);

// Checkpoint: text header (config, tokenizer, meta) + raw little-endian
// parameter bytes in view order. See README for the exact layout.
void save_checkpoint(const EncoderModel& model, const SubwordTokenizer& tokenizer,
                     const std::string& path, const KvMap& meta = {});

struct Checkpoint {
  EncoderModel model;
  SubwordTokenizer tokenizer;
  KvMap meta;
};

Checkpoint load_checkpoint(const std::string& path);

extern template struct EncoderParams<float>;
extern template struct EncoderParams<double>;
extern template struct EncoderModelT<float>;
extern template struct EncoderModelT<double>;
extern template struct AdamState<float>;
extern template struct AdamState<double>;

}  // namespace xsalign
