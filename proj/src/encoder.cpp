#include "xsalign/encoder.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

namespace xsalign {

int EncoderConfig::effective_extract_layer() const {
  return extract_layer > 0 ? extract_layer : (n_layers + 1) / 2;
}

int EncoderConfig::effective_retrieval_layer() const {
  return retrieval_layer > 0 ? retrieval_layer
                             : std::min(n_layers, (n_layers + 1) / 2 + 1);
}

void EncoderConfig::validate() const {
  if (n_layers < 1) fail("encoder config: n_layers must be >= 1");
  if (n_heads < 1 || d_model % n_heads != 0)
    fail("encoder config: d_model must be divisible by n_heads");
  if (d_ff < 1) fail("encoder config: d_ff must be >= 1");
  if (max_positions < 3) fail("encoder config: max_positions must be >= 3");
  if (vocab_size <= SubwordTokenizer::kNumSpecials)
    fail("encoder config: vocab_size must exceed the special-token count");
  if (!(p_mask > 0.0 && p_mask < 1.0) && p_mask != 0.0)
    fail("encoder config: p_mask must lie in [0, 1)");
  if (std::abs(mask_mask + mask_random + mask_keep - 1.0) > 1e-9)
    fail("encoder config: mask/random/keep split must sum to 1");
  int ext = effective_extract_layer(), ret = effective_retrieval_layer();
  if (ext < 1 || ext > n_layers) fail("encoder config: extract_layer out of range");
  if (ret < 1 || ret > n_layers) fail("encoder config: retrieval_layer out of range");
}

KvMap EncoderConfig::to_kv() const {
  KvMap kv;
  kv.set_int("n_layers", n_layers);
  kv.set_int("n_heads", n_heads);
  kv.set_int("d_model", d_model);
  kv.set_int("d_ff", d_ff);
  kv.set_int("max_positions", max_positions);
  kv.set_int("vocab_size", vocab_size);
  kv.set_double("p_mask", p_mask);
  kv.set_double("mask_mask", mask_mask);
  kv.set_double("mask_random", mask_random);
  kv.set_double("mask_keep", mask_keep);
  kv.set_int("extract_layer", extract_layer);
  kv.set_int("retrieval_layer", retrieval_layer);
  kv.set("tied_head", tied_head ? "true" : "false");
  kv.set_double("init_std", init_std);
  kv.set_double("ln_eps", ln_eps);
  return kv;
}

EncoderConfig EncoderConfig::from_kv(const KvMap& kv) {
  EncoderConfig c;
  c.n_layers = static_cast<int>(kv.get_int("n_layers", c.n_layers));
  c.n_heads = static_cast<int>(kv.get_int("n_heads", c.n_heads));
  c.d_model = static_cast<int>(kv.get_int("d_model", c.d_model));
  c.d_ff = static_cast<int>(kv.get_int("d_ff", c.d_ff));
  c.max_positions = static_cast<int>(kv.get_int("max_positions", c.max_positions));
  c.vocab_size = static_cast<int>(kv.get_int("vocab_size", c.vocab_size));
  c.p_mask = kv.get_double("p_mask", c.p_mask);
  c.mask_mask = kv.get_double("mask_mask", c.mask_mask);
  c.mask_random = kv.get_double("mask_random", c.mask_random);
  c.mask_keep = kv.get_double("mask_keep", c.mask_keep);
  c.extract_layer = static_cast<int>(kv.get_int("extract_layer", c.extract_layer));
  c.retrieval_layer = static_cast<int>(kv.get_int("retrieval_layer", c.retrieval_layer));
  c.tied_head = kv.get_bool("tied_head", c.tied_head);
  c.init_std = kv.get_double("init_std", c.init_std);
  c.ln_eps = kv.get_double("ln_eps", c.ln_eps);
  return c;
}

template <typename S>
std::vector<typename EncoderParams<S>::View> EncoderParams<S>::views() {
  std::vector<View> out;
  auto add_m = [&out](const std::string& name, Mat& m) {
    out.push_back({name, m.data(), m.size()});
  };
  auto add_v = [&out](const std::string& name, Vec& v) {
    out.push_back({name, v.data(), v.size()});
  };
  add_m("tok_emb", tok_emb);
  add_m("pos_emb", pos_emb);
  for (size_t l = 0; l < layers.size(); ++l) {
    std::string p = "layer" + std::to_string(l) + ".";
    Layer& L = layers[l];
    add_m(p + "wq", L.wq);
    add_v(p + "bq", L.bq);
    add_m(p + "wk", L.wk);
    add_v(p + "bk", L.bk);
    add_m(p + "wv", L.wv);
    add_v(p + "bv", L.bv);
    add_m(p + "wo", L.wo);
    add_v(p + "bo", L.bo);
    add_v(p + "ln1_g", L.ln1_g);
    add_v(p + "ln1_b", L.ln1_b);
    add_m(p + "w1", L.w1);
    add_v(p + "b1", L.b1);
    add_m(p + "w2", L.w2);
    add_v(p + "b2", L.b2);
    add_v(p + "ln2_g", L.ln2_g);
    add_v(p + "ln2_b", L.ln2_b);
  }
  if (head_w.size() > 0) add_m("head_w", head_w);
  add_v("head_b", head_b);
  return out;
}

template <typename S>
std::vector<typename EncoderParams<S>::ConstView> EncoderParams<S>::views() const {
  auto mut = const_cast<EncoderParams<S>*>(this)->views();
  std::vector<ConstView> out;
  out.reserve(mut.size());
  for (auto& v : mut) out.push_back({std::move(v.name), v.data, v.size});
  return out;
}

template <typename S>
Eigen::Index EncoderParams<S>::total_size() const {
  Eigen::Index n = 0;
  for (const auto& v : views()) n += v.size;
  return n;
}

template <typename S>
void EncoderParams<S>::init(const EncoderConfig& cfg, Rng& rng) {
  cfg.validate();
  const int d = cfg.d_model;
  auto gauss = [&rng, &cfg](Mat& m, Eigen::Index r, Eigen::Index c) {
    m.resize(r, c);
    for (Eigen::Index i = 0; i < r; ++i)
      for (Eigen::Index j = 0; j < c; ++j)
        m(i, j) = static_cast<S>(rng.gaussian() * cfg.init_std);
  };
  gauss(tok_emb, cfg.vocab_size, d);
  gauss(pos_emb, cfg.max_positions, d);
  layers.assign(static_cast<size_t>(cfg.n_layers), Layer{});
  for (auto& L : layers) {
    gauss(L.wq, d, d);
    gauss(L.wk, d, d);
    gauss(L.wv, d, d);
    gauss(L.wo, d, d);
    L.bq = Vec::Zero(d);
    L.bk = Vec::Zero(d);
    L.bv = Vec::Zero(d);
    L.bo = Vec::Zero(d);
    L.ln1_g = Vec::Ones(d);
    L.ln1_b = Vec::Zero(d);
    gauss(L.w1, d, cfg.d_ff);
    L.b1 = Vec::Zero(cfg.d_ff);
    gauss(L.w2, cfg.d_ff, d);
    L.b2 = Vec::Zero(d);
    L.ln2_g = Vec::Ones(d);
    L.ln2_b = Vec::Zero(d);
  }
  if (!cfg.tied_head) gauss(head_w, cfg.vocab_size, d);
  head_b = Vec::Zero(cfg.vocab_size);
}

template <typename S>
void EncoderParams<S>::set_zero() {
  for (auto& v : views()) std::fill(v.data, v.data + v.size, S(0));
}

template <typename S>
EncoderParams<S> EncoderParams<S>::zeros_like(const EncoderParams& other) {
  EncoderParams out = other;
  out.set_zero();
  return out;
}

template <typename S>
EncoderModelT<S> EncoderModelT<S>::init(const EncoderConfig& cfg, Rng& rng) {
  EncoderModelT model;
  model.cfg = cfg;
  model.params.init(cfg, rng);
  return model;
}

namespace {

template <typename S>
S gelu(S x) {
  return S(0.5) * x * (S(1) + std::erf(x * S(M_SQRT1_2)));
}

template <typename S>
S gelu_grad(S x) {
  S phi = std::exp(S(-0.5) * x * x) * S(0.3989422804014326779);  // 1/sqrt(2*pi)
  S Phi = S(0.5) * (S(1) + std::erf(x * S(M_SQRT1_2)));
  return Phi + x * phi;
}

// y = g .* (x - mu)/sigma + b, per row; returns xhat and 1/sigma for backward
template <typename S>
void layer_norm(const MatrixT<S>& x, const VectorT<S>& g, const VectorT<S>& b, S eps,
                MatrixT<S>& y, MatrixT<S>& xhat, VectorT<S>& inv_std) {
  const Eigen::Index n = x.rows(), d = x.cols();
  y.resize(n, d);
  xhat.resize(n, d);
  inv_std.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    S mu = x.row(i).mean();
    S var = (x.row(i).array() - mu).square().mean();
    S is = S(1) / std::sqrt(std::max(var, eps));
    inv_std(i) = is;
    xhat.row(i) = ((x.row(i).array() - mu) * is).matrix();
    y.row(i) = xhat.row(i).cwiseProduct(g.transpose()) + b.transpose();
  }
}

// dx from dy; accumulates dg, db
template <typename S>
void layer_norm_backward(const MatrixT<S>& dy, const MatrixT<S>& xhat,
                         const VectorT<S>& inv_std, const VectorT<S>& g,
                         MatrixT<S>& dx, VectorT<S>& dg, VectorT<S>& db) {
  const Eigen::Index n = dy.rows(), d = dy.cols();
  dx.resize(n, d);
  for (Eigen::Index i = 0; i < n; ++i) {
    dg += dy.row(i).cwiseProduct(xhat.row(i)).transpose();
    db += dy.row(i).transpose();
    Eigen::Array<S, 1, Eigen::Dynamic> dxhat =
        dy.row(i).cwiseProduct(g.transpose()).array();
    S mean_dxhat = dxhat.mean();
    S mean_dxhat_xhat = (dxhat * xhat.row(i).array()).mean();
    dx.row(i) =
        ((dxhat - mean_dxhat - xhat.row(i).array() * mean_dxhat_xhat) * inv_std(i))
            .matrix();
  }
  (void)d;
}

}  // namespace

template <typename S>
void EncoderModelT<S>::forward(const std::vector<int>& tokens,
                               EncoderCache<S>& cache) const {
  const int n = static_cast<int>(tokens.size());
  if (n < 2) fail("encode: sequence must contain BOS and EOS");
  if (n > cfg.max_positions)
    fail("encode: sequence length " + std::to_string(n) + " exceeds max positions " +
         std::to_string(cfg.max_positions));
  if (tokens.front() != SubwordTokenizer::kBos || tokens.back() != SubwordTokenizer::kEos)
    fail("encode: sequence must be wrapped in BOS ... EOS");
  for (int id : tokens)
    if (id < 0 || id >= cfg.vocab_size) fail("encode: token id out of range");

  const int d = cfg.d_model;
  const int heads = cfg.n_heads;
  const int dh = d / heads;
  const S scale = S(1) / std::sqrt(static_cast<S>(dh));

  cache.tokens = tokens;
  cache.h.assign(static_cast<size_t>(cfg.n_layers) + 1, Mat());
  cache.layers.assign(static_cast<size_t>(cfg.n_layers),
                      typename EncoderCache<S>::LayerCache{});

  Mat x(n, d);
  for (int i = 0; i < n; ++i)
    x.row(i) = params.tok_emb.row(tokens[static_cast<size_t>(i)]) + params.pos_emb.row(i);
  cache.h[0] = x;

  for (int l = 0; l < cfg.n_layers; ++l) {
    const auto& L = params.layers[static_cast<size_t>(l)];
    auto& lc = cache.layers[static_cast<size_t>(l)];
    const Mat& in = cache.h[static_cast<size_t>(l)];

    lc.q = in * L.wq;
    lc.q.rowwise() += L.bq.transpose();
    lc.k = in * L.wk;
    lc.k.rowwise() += L.bk.transpose();
    lc.v = in * L.wv;
    lc.v.rowwise() += L.bv.transpose();

    lc.o_cat.resize(n, d);
    lc.attn.assign(static_cast<size_t>(heads), Mat());
    for (int h = 0; h < heads; ++h) {
      auto qh = lc.q.middleCols(h * dh, dh);
      auto kh = lc.k.middleCols(h * dh, dh);
      auto vh = lc.v.middleCols(h * dh, dh);
      Mat scores = qh * kh.transpose() * scale;
      Mat& probs = lc.attn[static_cast<size_t>(h)];
      probs.resize(n, n);
      for (int i = 0; i < n; ++i) {
        S mx = scores.row(i).maxCoeff();
        probs.row(i) = (scores.row(i).array() - mx).exp().matrix();
        probs.row(i) /= probs.row(i).sum();
      }
      lc.o_cat.middleCols(h * dh, dh) = probs * vh;
    }

    Mat attn_out = lc.o_cat * L.wo;
    attn_out.rowwise() += L.bo.transpose();
    Mat a = in + attn_out;
    layer_norm<S>(a, L.ln1_g, L.ln1_b, static_cast<S>(cfg.ln_eps), lc.y, lc.xhat1,
                  lc.inv_std1);

    lc.z1 = lc.y * L.w1;
    lc.z1.rowwise() += L.b1.transpose();
    lc.gelu_z1 = lc.z1.unaryExpr([](S v) { return gelu(v); });
    Mat f = lc.gelu_z1 * L.w2;
    f.rowwise() += L.b2.transpose();
    Mat b = lc.y + f;
    Mat out;
    layer_norm<S>(b, L.ln2_g, L.ln2_b, static_cast<S>(cfg.ln_eps), out, lc.xhat2,
                  lc.inv_std2);
    cache.h[static_cast<size_t>(l) + 1] = std::move(out);
  }
}

template <typename S>
std::vector<typename EncoderModelT<S>::Mat> EncoderModelT<S>::encode(
    const std::vector<int>& tokens) const {
  EncoderCache<S> cache;
  forward(tokens, cache);
  return std::move(cache.h);
}

template <typename S>
double EncoderModelT<S>::mlm_head_loss(const EncoderCache<S>& cache,
                                       const std::vector<int>& positions,
                                       const std::vector<int>& target_ids, Mat* dfinal,
                                       EncoderParams<S>* grads, double scale) const {
  if (positions.empty()) fail("mlm loss: no target positions");
  if (positions.size() != target_ids.size())
    fail("mlm loss: positions/targets size mismatch");
  const Mat& final_h = cache.h.back();
  const int t = static_cast<int>(positions.size());
  const Mat& w = cfg.tied_head ? params.tok_emb : params.head_w;

  Mat rows(t, cfg.d_model);
  for (int i = 0; i < t; ++i) {
    int p = positions[static_cast<size_t>(i)];
    if (p < 0 || p >= final_h.rows()) fail("mlm loss: position out of range");
    rows.row(i) = final_h.row(p);
  }
  Mat logits = rows * w.transpose();
  logits.rowwise() += params.head_b.transpose();

  double loss = 0.0;
  Mat dlogits;
  if (grads) dlogits.resize(t, cfg.vocab_size);
  for (int i = 0; i < t; ++i) {
    S mx = logits.row(i).maxCoeff();
    Eigen::Array<S, 1, Eigen::Dynamic> ex = (logits.row(i).array() - mx).exp();
    S sum = ex.sum();
    int y = target_ids[static_cast<size_t>(i)];
    if (y < 0 || y >= cfg.vocab_size) fail("mlm loss: target id out of range");
    loss += -static_cast<double>(logits(i, y) - mx) + std::log(static_cast<double>(sum));
    if (grads) {
      dlogits.row(i) = (ex / sum).matrix();
      dlogits(i, y) -= S(1);
    }
  }
  loss /= t;

  if (grads) {
    dlogits *= static_cast<S>(scale / t);
    Mat& dw = cfg.tied_head ? grads->tok_emb : grads->head_w;
    dw.noalias() += dlogits.transpose() * rows;
    grads->head_b += dlogits.colwise().sum().transpose();
    Mat drows = dlogits * w;
    if (dfinal) {
      if (dfinal->rows() != final_h.rows() || dfinal->cols() != final_h.cols())
        dfinal->setZero(final_h.rows(), final_h.cols());
      for (int i = 0; i < t; ++i) dfinal->row(positions[static_cast<size_t>(i)]) += drows.row(i);
    }
  }
  return loss;
}

template <typename S>
double EncoderModelT<S>::mlm_loss(const std::vector<int>& corrupted,
                                  const std::vector<int>& positions,
                                  const std::vector<int>& target_ids,
                                  EncoderParams<S>* grads) const {
  EncoderCache<S> cache;
  forward(corrupted, cache);
  if (!grads) return mlm_head_loss(cache, positions, target_ids, nullptr, nullptr);
  Mat dfinal = Mat::Zero(cache.h.back().rows(), cache.h.back().cols());
  double loss = mlm_head_loss(cache, positions, target_ids, &dfinal, grads);
  std::vector<Mat> dstates(static_cast<size_t>(cfg.n_layers) + 1);
  dstates.back() = std::move(dfinal);
  backward(cache, dstates, *grads);
  return loss;
}

template <typename S>
void EncoderModelT<S>::backward(const EncoderCache<S>& cache,
                                const std::vector<Mat>& dstates,
                                EncoderParams<S>& grads) const {
  const int n = static_cast<int>(cache.tokens.size());
  const int d = cfg.d_model;
  const int heads = cfg.n_heads;
  const int dh = d / heads;
  const S scale = S(1) / std::sqrt(static_cast<S>(dh));
  if (dstates.size() != cache.h.size()) fail("backward: dstates size mismatch");

  Mat dx = Mat::Zero(n, d);
  if (dstates.back().size() > 0) dx = dstates.back();

  for (int l = cfg.n_layers - 1; l >= 0; --l) {
    const auto& L = params.layers[static_cast<size_t>(l)];
    auto& G = grads.layers[static_cast<size_t>(l)];
    const auto& lc = cache.layers[static_cast<size_t>(l)];
    const Mat& in = cache.h[static_cast<size_t>(l)];

    // LN2
    Mat db_pre;
    layer_norm_backward<S>(dx, lc.xhat2, lc.inv_std2, L.ln2_g, db_pre, G.ln2_g, G.ln2_b);

    // b = y + f, f = gelu(z1) w2 + b2
    Mat df = db_pre;
    Mat dy = db_pre;
    G.w2.noalias() += lc.gelu_z1.transpose() * df;
    G.b2 += df.colwise().sum().transpose();
    Mat dgelu = df * L.w2.transpose();
    Mat dz1 = dgelu.cwiseProduct(lc.z1.unaryExpr([](S v) { return gelu_grad(v); }));
    G.w1.noalias() += lc.y.transpose() * dz1;
    G.b1 += dz1.colwise().sum().transpose();
    dy.noalias() += dz1 * L.w1.transpose();

    // LN1
    Mat da;
    layer_norm_backward<S>(dy, lc.xhat1, lc.inv_std1, L.ln1_g, da, G.ln1_g, G.ln1_b);

    // a = in + o_cat wo + bo
    Mat dprev = da;
    G.wo.noalias() += lc.o_cat.transpose() * da;
    G.bo += da.colwise().sum().transpose();
    Mat do_cat = da * L.wo.transpose();

    Mat dq(n, d), dk(n, d), dv(n, d);
    for (int h = 0; h < heads; ++h) {
      const Mat& probs = lc.attn[static_cast<size_t>(h)];
      auto kh = lc.k.middleCols(h * dh, dh);
      auto qh = lc.q.middleCols(h * dh, dh);
      auto vh = lc.v.middleCols(h * dh, dh);
      auto doh = do_cat.middleCols(h * dh, dh);

      Mat dprobs = doh * vh.transpose();
      dv.middleCols(h * dh, dh) = probs.transpose() * doh;

      // softmax backward, rows
      Mat dscores(n, n);
      for (int i = 0; i < n; ++i) {
        S dot = dprobs.row(i).cwiseProduct(probs.row(i)).sum();
        dscores.row(i) = probs.row(i).cwiseProduct((dprobs.row(i).array() - dot).matrix());
      }
      dq.middleCols(h * dh, dh) = dscores * kh * scale;
      dk.middleCols(h * dh, dh) = dscores.transpose() * qh * scale;
    }

    G.wq.noalias() += in.transpose() * dq;
    G.bq += dq.colwise().sum().transpose();
    G.wk.noalias() += in.transpose() * dk;
    G.bk += dk.colwise().sum().transpose();
    G.wv.noalias() += in.transpose() * dv;
    G.bv += dv.colwise().sum().transpose();

    dprev.noalias() += dq * L.wq.transpose();
    dprev.noalias() += dk * L.wk.transpose();
    dprev.noalias() += dv * L.wv.transpose();

    dx = std::move(dprev);
    if (dstates[static_cast<size_t>(l)].size() > 0) dx += dstates[static_cast<size_t>(l)];
  }

  for (int i = 0; i < n; ++i) {
    grads.tok_emb.row(cache.tokens[static_cast<size_t>(i)]) += dx.row(i);
    grads.pos_emb.row(i) += dx.row(i);
  }
}

template <typename S>
VectorT<S> mean_pool(const MatrixT<S>& states, int begin, int end,
                     const std::vector<int>& tokens, bool exclude_specials) {
  if (begin < 0 || end > static_cast<int>(tokens.size()) || begin >= end)
    fail("mean_pool: empty or invalid span");
  VectorT<S> sum = VectorT<S>::Zero(states.cols());
  int count = 0;
  for (int i = begin; i < end; ++i) {
    if (exclude_specials && SubwordTokenizer::is_special(tokens[static_cast<size_t>(i)]))
      continue;
    sum += states.row(i).transpose();
    ++count;
  }
  if (count == 0) fail("mean_pool: span empty after excluding specials");
  return sum / static_cast<S>(count);
}

MlmExample mask_for_mlm(const std::vector<int>& tokens, Rng& rng,
                        const EncoderConfig& cfg) {
  std::vector<int> maskable;
  for (size_t i = 0; i < tokens.size(); ++i)
    if (!SubwordTokenizer::is_special(tokens[i])) maskable.push_back(static_cast<int>(i));
  if (maskable.empty()) fail("mask_for_mlm: no maskable position");

  std::vector<int> selected;
  for (int attempt = 0; attempt < 2 && selected.empty(); ++attempt)
    for (int p : maskable)
      if (rng.uniform() < cfg.p_mask) selected.push_back(p);
  if (selected.empty())
    selected.push_back(maskable[rng.uniform_int(maskable.size())]);

  MlmExample ex;
  ex.corrupted = tokens;
  const int n_random = cfg.vocab_size - SubwordTokenizer::kNumSpecials;
  for (int p : selected) {
    ex.positions.push_back(p);
    ex.targets.push_back(tokens[static_cast<size_t>(p)]);
    double u = rng.uniform();
    if (u < cfg.mask_mask) {
      ex.corrupted[static_cast<size_t>(p)] = SubwordTokenizer::kMask;
    } else if (u < cfg.mask_mask + cfg.mask_random) {
      ex.corrupted[static_cast<size_t>(p)] =
          SubwordTokenizer::kNumSpecials + static_cast<int>(rng.uniform_int(n_random));
    }  // else keep
  }
  return ex;
}

template <typename S>
void AdamState<S>::init_like(const EncoderParams<S>& params) {
  auto vs = params.views();
  m.assign(vs.size(), {});
  v.assign(vs.size(), {});
  for (size_t i = 0; i < vs.size(); ++i) {
    m[i].assign(static_cast<size_t>(vs[i].size), S(0));
    v[i].assign(static_cast<size_t>(vs[i].size), S(0));
  }
  t = 0;
}

template <typename S>
void adam_step(EncoderParams<S>& params, const EncoderParams<S>& grads,
               AdamState<S>& state) {
  auto pv = params.views();
  auto gv = grads.views();
  if (pv.size() != gv.size()) fail("adam: parameter/gradient layout mismatch");
  if (state.m.size() != pv.size()) fail("adam: state not initialised");
  state.t += 1;
  const double b1 = state.cfg.beta1, b2 = state.cfg.beta2;
  const double bc1 = 1.0 - std::pow(b1, static_cast<double>(state.t));
  const double bc2 = 1.0 - std::pow(b2, static_cast<double>(state.t));
  const double step = state.cfg.lr * std::sqrt(bc2) / bc1;
  for (size_t i = 0; i < pv.size(); ++i) {
    if (pv[i].size != gv[i].size) fail("adam: shape mismatch at " + pv[i].name);
    S* p = pv[i].data;
    const S* g = gv[i].data;
    S* em = state.m[i].data();
    S* ev = state.v[i].data();
    for (Eigen::Index j = 0; j < pv[i].size; ++j) {
      if (!std::isfinite(static_cast<double>(g[j])))
        fail("adam: non-finite gradient in " + pv[i].name);
      em[j] = static_cast<S>(b1 * em[j] + (1.0 - b1) * g[j]);
      ev[j] = static_cast<S>(b2 * ev[j] + (1.0 - b2) * g[j] * g[j]);
      p[j] -= static_cast<S>(step * em[j] /
                             (std::sqrt(static_cast<double>(ev[j])) + state.cfg.eps));
    }
  }
}

// ---- checkpoint io ----

void save_checkpoint(const EncoderModel& model, const SubwordTokenizer& tokenizer,
                     const std::string& path, const KvMap& meta) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail("cannot open for writing: " + path);
  out << "xsalign-ckpt 1\n";
  for (const auto& [k, v] : meta.items) out << "meta." << k << " " << v << "\n";
  for (const auto& [k, v] : model.cfg.to_kv().items) out << "cfg." << k << " " << v << "\n";
  out << "tokenizer\n";
  out << "vocab " << tokenizer.vocab().size() << "\n";
  for (const auto& p : tokenizer.vocab()) out << p << "\n";
  out << "merges " << tokenizer.merges().size() << "\n";
  for (const auto& [a, b] : tokenizer.merges()) out << a << " " << b << "\n";
  auto views = model.params.views();
  Eigen::Index total = 0;
  for (const auto& v : views) total += v.size;
  out << "params " << total << " f32\n";
  for (const auto& v : views)
    out.write(reinterpret_cast<const char*>(v.data),
              static_cast<std::streamsize>(v.size * static_cast<Eigen::Index>(sizeof(float))));
  if (!out) fail("write failed: " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail("cannot open checkpoint: " + path);
  std::string line;
  auto next_line = [&]() -> std::string& {
    if (!std::getline(in, line)) fail(path + ": truncated checkpoint");
    return line;
  };
  if (next_line() != "xsalign-ckpt 1") fail(path + ": not a checkpoint file");

  KvMap meta, cfg_kv;
  for (;;) {
    next_line();
    if (line == "tokenizer") break;
    size_t sp = line.find(' ');
    if (sp == std::string::npos) fail(path + ": bad header line '" + line + "'");
    std::string key = line.substr(0, sp), value = line.substr(sp + 1);
    if (key.rfind("meta.", 0) == 0)
      meta.set(key.substr(5), value);
    else if (key.rfind("cfg.", 0) == 0)
      cfg_kv.set(key.substr(4), value);
    else
      fail(path + ": unexpected header key '" + key + "'");
  }

  auto vocab_hdr = split_char(next_line(), ' ');
  if (vocab_hdr.size() != 2 || vocab_hdr[0] != "vocab") fail(path + ": bad vocab header");
  long long nv = parse_int(vocab_hdr[1], path + " vocab count");
  std::vector<std::string> vocab;
  vocab.reserve(static_cast<size_t>(nv));
  for (long long i = 0; i < nv; ++i) vocab.push_back(next_line());
  auto merge_hdr = split_char(next_line(), ' ');
  if (merge_hdr.size() != 2 || merge_hdr[0] != "merges") fail(path + ": bad merges header");
  long long nm = parse_int(merge_hdr[1], path + " merge count");
  std::vector<std::pair<std::string, std::string>> merges;
  merges.reserve(static_cast<size_t>(nm));
  for (long long i = 0; i < nm; ++i) {
    auto f = split_char(next_line(), ' ');
    if (f.size() != 2) fail(path + ": bad merge line");
    merges.emplace_back(std::string(f[0]), std::string(f[1]));
  }

  auto params_hdr = split_char(next_line(), ' ');
  if (params_hdr.size() != 3 || params_hdr[0] != "params")
    fail(path + ": bad params header");
  long long count = parse_int(params_hdr[1], path + " param count");
  std::string precision(params_hdr[2]);
  if (precision != "f32" && precision != "f64") fail(path + ": unknown precision");

  Checkpoint ckpt;
  ckpt.meta = std::move(meta);
  ckpt.tokenizer = SubwordTokenizer(std::move(vocab), std::move(merges));
  ckpt.model.cfg = EncoderConfig::from_kv(cfg_kv);
  ckpt.model.cfg.validate();
  if (ckpt.model.cfg.vocab_size != ckpt.tokenizer.vocab_size())
    fail(path + ": config vocab_size disagrees with stored tokenizer");

  // allocate with a throwaway init, then overwrite from file
  Rng rng(0);
  ckpt.model.params.init(ckpt.model.cfg, rng);
  if (ckpt.model.params.total_size() != count)
    fail(path + ": parameter count mismatch");
  auto views = ckpt.model.params.views();
  for (auto& v : views) {
    if (precision == "f32") {
      in.read(reinterpret_cast<char*>(v.data),
              static_cast<std::streamsize>(v.size * static_cast<Eigen::Index>(sizeof(float))));
    } else {
      std::vector<double> buf(static_cast<size_t>(v.size));
      in.read(reinterpret_cast<char*>(buf.data()),
              static_cast<std::streamsize>(v.size * static_cast<Eigen::Index>(sizeof(double))));
      for (Eigen::Index j = 0; j < v.size; ++j)
        v.data[j] = static_cast<float>(buf[static_cast<size_t>(j)]);
    }
    if (!in) fail(path + ": truncated parameter data");
  }
  return ckpt;
}

template struct EncoderParams<float>;
template struct EncoderParams<double>;
template struct EncoderModelT<float>;
template struct EncoderModelT<double>;
template struct AdamState<float>;
template struct AdamState<double>;
template void adam_step<float>(EncoderParams<float>&, const EncoderParams<float>&,
                               AdamState<float>&);
template void adam_step<double>(EncoderParams<double>&, const EncoderParams<double>&,
                                AdamState<double>&);
template VectorT<float> mean_pool<float>(const MatrixT<float>&, int, int,
                                         const std::vector<int>&, bool);
template VectorT<double> mean_pool<double>(const MatrixT<double>&, int, int,
                                           const std::vector<int>&, bool);

}  // namespace xsalign
