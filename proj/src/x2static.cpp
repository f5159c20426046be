#include "xsalign/x2static.hpp"

#include <cmath>
#include <unordered_map>

#include "xsalign/util.hpp"

namespace xsalign {

void ExtractionConfig::validate() const {
  if (negatives < 1) fail("extraction config: negatives must be >= 1");
  if (epochs < 0) fail("extraction config: epochs must be >= 0");
  if (lr <= 0.0) fail("extraction config: lr must be positive");
  if (min_count < 1) fail("extraction config: min_count must be >= 1");
  if (dim < 0) fail("extraction config: dim must be >= 0");
}

std::optional<Vector> context_vector(const MatrixT<float>& states,
                                     std::pair<int, int> target_span,
                                     const std::vector<int>& tokens) {
  Vector sum = Vector::Zero(states.cols());
  int count = 0;
  for (int i = 0; i < static_cast<int>(tokens.size()); ++i) {
    if (i >= target_span.first && i < target_span.second) continue;
    if (SubwordTokenizer::is_special(tokens[static_cast<size_t>(i)])) continue;
    sum += states.row(i).cast<double>().transpose();
    ++count;
  }
  if (count == 0) return std::nullopt;
  return sum / count;
}

namespace {

double log_sigmoid(double x) {
  // stable: log s(x) = -log1p(exp(-|x|)) + min(x, 0)
  return x >= 0 ? -std::log1p(std::exp(-x)) : x - std::log1p(std::exp(x));
}

double sigmoid(double x) {
  return x >= 0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
}

}  // namespace

double pair_loss(const Vector& context, const Vector& target, const Matrix& negatives,
                 Vector* grad_target, Matrix* grad_negatives, bool cosine) {
  if (context.size() != target.size() ||
      (negatives.rows() > 0 && negatives.cols() != context.size()))
    fail("pair_loss: dimension mismatch");

  const Eigen::Index k = negatives.rows();
  double loss = 0.0;
  if (grad_target) grad_target->setZero(target.size());
  if (grad_negatives) grad_negatives->setZero(k, context.size());

  if (!cosine) {
    double s_w = context.dot(target);
    loss += -log_sigmoid(s_w);
    if (grad_target) *grad_target = (sigmoid(s_w) - 1.0) * context;
    for (Eigen::Index n = 0; n < k; ++n) {
      double s_n = context.dot(negatives.row(n));
      loss += -log_sigmoid(-s_n);
      if (grad_negatives) grad_negatives->row(n) = sigmoid(s_n) * context.transpose();
    }
    return loss;
  }

  double cn = context.norm();
  if (cn < 1e-12) fail("pair_loss: zero context vector in cosine mode");
  Vector chat = context / cn;
  auto cos_and_grad = [&chat](const Vector& v, double* cos_out, Vector* dv) {
    double vn = v.norm();
    if (vn < 1e-12) fail("pair_loss: zero static vector in cosine mode");
    Vector vhat = v / vn;
    double c = chat.dot(vhat);
    *cos_out = c;
    if (dv) *dv = (chat - c * vhat) / vn;
  };

  double c_w;
  Vector dw;
  cos_and_grad(target, &c_w, grad_target ? &dw : nullptr);
  loss += -log_sigmoid(c_w);
  if (grad_target) *grad_target = (sigmoid(c_w) - 1.0) * dw;
  for (Eigen::Index n = 0; n < k; ++n) {
    double c_n;
    Vector dn;
    Vector row = negatives.row(n).transpose();
    cos_and_grad(row, &c_n, grad_negatives ? &dn : nullptr);
    loss += -log_sigmoid(-c_n);
    if (grad_negatives) grad_negatives->row(n) = (sigmoid(c_n) * dn).transpose();
  }
  return loss;
}

EmbeddingSpace extract_static(const Corpus& corpus, const EncoderModel& model,
                              const SubwordTokenizer& tokenizer,
                              const ExtractionConfig& config,
                              std::vector<double>* loss_trace) {
  config.validate();
  const int d_model = model.cfg.d_model;
  const int dim = config.dim > 0 ? config.dim : d_model;
  if (dim != d_model)
    fail("extract_static: static dim " + std::to_string(dim) +
         " must equal d_model " + std::to_string(d_model) +
         " (the dot-product objective offers no projection)");
  int layer = config.layer > 0 ? config.layer : model.cfg.effective_extract_layer();
  if (layer < 1 || layer > model.cfg.n_layers)
    fail("extract_static: layer " + std::to_string(layer) + " out of range [1, " +
         std::to_string(model.cfg.n_layers) + "]");

  std::vector<std::string> vocab = build_vocab(corpus, config.min_count);
  std::unordered_map<std::string, int> vocab_index;
  for (size_t i = 0; i < vocab.size(); ++i) vocab_index.emplace(vocab[i], static_cast<int>(i));
  NegativeTable table = build_negative_table(corpus.freq, vocab, config.neg_exponent);

  Rng rng(config.seed);
  Matrix statics(static_cast<Eigen::Index>(vocab.size()), dim);
  const double init_sigma = 1.0 / std::sqrt(static_cast<double>(dim));
  for (Eigen::Index i = 0; i < statics.rows(); ++i)
    for (Eigen::Index j = 0; j < statics.cols(); ++j)
      statics(i, j) = rng.gaussian() * init_sigma;

  std::vector<const Sentence*> sentences = corpus.sentences();
  if (config.sample_random) {
    Rng shuffle_rng = Rng(config.seed).child("sentence-sample");
    for (size_t i = sentences.size(); i > 1; --i)
      std::swap(sentences[i - 1], sentences[shuffle_rng.uniform_int(i)]);
  }
  if (config.max_sentences > 0 &&
      static_cast<long long>(sentences.size()) > config.max_sentences)
    sentences.resize(static_cast<size_t>(config.max_sentences));

  // per-sentence token ids and word spans; sentences that cannot be encoded
  // are skipped consistently in the budget pre-pass and in training
  struct Encoded {
    std::vector<int> ids;
    std::vector<std::pair<int, int>> spans;
    std::vector<int> vocab_rows;  // per word, -1 if out of vocabulary
    bool usable = false;
  };
  std::vector<Encoded> encoded(sentences.size());
  long long updates_per_epoch = 0;
  for (size_t s = 0; s < sentences.size(); ++s) {
    const Sentence& sent = *sentences[s];
    if (sent.size() < 2) continue;
    Encoded& e = encoded[s];
    e.ids = tokenizer.encode_sentence(sent, &e.spans);
    if (static_cast<int>(e.ids.size()) > model.cfg.max_positions) continue;
    e.vocab_rows.resize(sent.size(), -1);
    for (size_t w = 0; w < sent.size(); ++w) {
      auto it = vocab_index.find(sent[w]);
      if (it != vocab_index.end()) {
        e.vocab_rows[w] = it->second;
        ++updates_per_epoch;
      }
    }
    e.usable = true;
  }
  const long long total_updates =
      static_cast<long long>(config.epochs) * updates_per_epoch;

  // layer states cached across epochs; the encoder is frozen
  std::vector<MatrixT<float>> states_cache(sentences.size());

  long long update_idx = 0;
  Vector grad_target;
  Matrix grad_negs;
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    for (size_t s = 0; s < sentences.size(); ++s) {
      const Encoded& e = encoded[s];
      if (!e.usable) continue;
      if (states_cache[s].size() == 0) {
        auto h = model.encode(e.ids);
        states_cache[s] = std::move(h[static_cast<size_t>(layer)]);
      }
      const MatrixT<float>& states = states_cache[s];
      for (size_t w = 0; w < e.vocab_rows.size(); ++w) {
        int row = e.vocab_rows[w];
        if (row < 0) continue;
        auto ctx = context_vector(states, e.spans[w], e.ids);
        if (!ctx) continue;
        std::vector<int> negs =
            sample_negatives(table, config.negatives,
                             vocab[static_cast<size_t>(row)], rng);
        Matrix neg_rows(config.negatives, dim);
        for (int n = 0; n < config.negatives; ++n)
          neg_rows.row(n) = statics.row(negs[static_cast<size_t>(n)]);

        double loss = pair_loss(*ctx, statics.row(row).transpose(), neg_rows,
                                &grad_target, &grad_negs, config.cosine);
        if (loss_trace) loss_trace->push_back(loss);
        double lr = config.lr;
        if (config.lr_decay && total_updates > 0)
          lr *= 1.0 - static_cast<double>(update_idx) / static_cast<double>(total_updates);
        statics.row(row) -= lr * grad_target.transpose();
        for (int n = 0; n < config.negatives; ++n)
          statics.row(negs[static_cast<size_t>(n)]) -= lr * grad_negs.row(n);
        ++update_idx;
      }
    }
  }

  return EmbeddingSpace::create(std::move(vocab), std::move(statics));
}

}  // namespace xsalign
