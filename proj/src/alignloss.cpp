#include "xsalign/alignloss.hpp"

#include <algorithm>
#include <cmath>

#include "xsalign/util.hpp"

namespace xsalign {

void DccaConfig::validate() const {
  if (r1 <= 0.0 || r2 <= 0.0) fail("dcca config: regularizers must be positive");
  if (k_cca < 0) fail("dcca config: k_cca must be >= 0");
  if (eig_clamp <= 0.0) fail("dcca config: eig_clamp must be positive");
}

double mse_loss(const Matrix& h1, const Matrix& h2, Matrix* grad_h1) {
  if (h1.rows() != h2.rows())
    fail("mse_loss: batch sizes differ");
  if (h1.cols() != h2.cols())
    fail("mse_loss: dimension mismatch (" + std::to_string(h1.cols()) + " vs " +
         std::to_string(h2.cols()) + "); the element-wise loss requires the static "
         "dimension to match the model's hidden size");
  if (h1.rows() < 1) fail("mse_loss: empty batch");
  const double n = static_cast<double>(h1.rows()) * static_cast<double>(h1.cols());
  Matrix diff = h1 - h2;
  double loss = diff.squaredNorm() / n;
  if (grad_h1) *grad_h1 = (2.0 / n) * diff;
  return loss;
}

// symmetric inverse square root via eigendecomposition, eigenvalues clamped
static Matrix inv_sqrt_sym(const Matrix& m, double clamp) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(m);
  if (es.info() != Eigen::Success) fail("dcca_loss: eigendecomposition failed");
  Eigen::VectorXd ev = es.eigenvalues();
  for (Eigen::Index i = 0; i < ev.size(); ++i)
    ev(i) = 1.0 / std::sqrt(std::max(ev(i), clamp));
  return es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
}

double dcca_loss(const Matrix& h1, const Matrix& h2, const DccaConfig& config,
                 Matrix* grad_h1) {
  config.validate();
  if (h1.rows() != h2.rows()) fail("dcca_loss: batch sizes differ");
  const Eigen::Index m = h1.rows();
  if (m < 2) fail("dcca_loss: batch size must be >= 2");
  if (!h1.allFinite() || !h2.allFinite()) fail("dcca_loss: non-finite input");

  const Eigen::Index d1 = h1.cols(), d2 = h2.cols();
  int k = config.k_cca > 0 ? config.k_cca : static_cast<int>(std::min(d1, d2));
  if (k > std::min(d1, d2)) fail("dcca_loss: k_cca exceeds min(d1, d2)");

  Eigen::RowVectorXd mu1 = h1.colwise().mean();
  Eigen::RowVectorXd mu2 = h2.colwise().mean();
  Matrix c1 = h1.rowwise() - mu1;
  Matrix c2 = h2.rowwise() - mu2;

  const double denom = static_cast<double>(m - 1);
  Matrix s12 = c1.transpose() * c2 / denom;
  Matrix s11 = c1.transpose() * c1 / denom + config.r1 * Matrix::Identity(d1, d1);
  Matrix s22 = c2.transpose() * c2 / denom + config.r2 * Matrix::Identity(d2, d2);

  Matrix s11_is = inv_sqrt_sym(s11, config.eig_clamp);
  Matrix s22_is = inv_sqrt_sym(s22, config.eig_clamp);
  Matrix t = s11_is * s12 * s22_is;

  Eigen::JacobiSVD<Eigen::MatrixXd> svd(t, Eigen::ComputeThinU | Eigen::ComputeThinV);
  if (!svd.singularValues().allFinite()) fail("dcca_loss: non-finite singular values");
  Eigen::VectorXd sv = svd.singularValues();  // descending

  double corr = 0.0;
  for (int i = 0; i < k; ++i) corr += sv(i);
  double loss = -corr;

  if (grad_h1) {
    Eigen::MatrixXd u = svd.matrixU().leftCols(k);
    Eigen::MatrixXd v = svd.matrixV().leftCols(k);
    Eigen::VectorXd d = sv.head(k);

    Matrix g12 = s11_is * u * v.transpose() * s22_is;
    Matrix g11 = -0.5 * s11_is * u * d.asDiagonal() * u.transpose() * s11_is;
    // d(corr)/dC1 = (2 C1 g11 + C2 g12^T) / (m-1); loss = -corr
    Matrix dc1 = -(2.0 * c1 * g11 + c2 * g12.transpose()) / denom;
    // un-center: subtract the column means
    Eigen::RowVectorXd col_mean = dc1.colwise().mean();
    *grad_h1 = dc1.rowwise() - col_mean;
  }
  return loss;
}

AlignBatch sample_align_batch(const EmbeddingSpace& statics, const EncoderModel& model,
                              const SubwordTokenizer& tokenizer, int m, int layer,
                              Rng& rng, bool frequency_weighted,
                              const std::vector<double>* word_weights) {
  if (statics.size() < 1) fail("sample_align_batch: empty static vocabulary");
  if (m < 1) fail("sample_align_batch: batch size must be >= 1");
  if (layer < 0 || layer > model.cfg.n_layers)
    fail("sample_align_batch: layer out of range");

  std::vector<double> cdf;
  if (frequency_weighted) {
    if (!word_weights || word_weights->size() != static_cast<size_t>(statics.size()))
      fail("sample_align_batch: frequency weighting needs per-word weights");
    cdf.resize(word_weights->size());
    double total = 0.0;
    for (size_t i = 0; i < word_weights->size(); ++i) {
      total += std::max(0.0, (*word_weights)[i]);
      cdf[i] = total;
    }
    if (total <= 0.0) fail("sample_align_batch: weights sum to zero");
    for (double& c : cdf) c /= total;
  }

  AlignBatch batch;
  batch.h1.resize(m, model.cfg.d_model);
  batch.h2.resize(m, statics.dim());
  std::vector<char> used(static_cast<size_t>(statics.size()), 0);
  int filled = 0;
  int attempts = 0;
  const int max_attempts = 50 * m + 1000;
  while (filled < m) {
    if (++attempts > max_attempts)
      fail("sample_align_batch: cannot fill batch (untokenizable vocabulary?)");
    int row;
    if (frequency_weighted) {
      double u = rng.uniform();
      row = static_cast<int>(std::upper_bound(cdf.begin(), cdf.end(), u) - cdf.begin());
      row = std::min(row, statics.size() - 1);
    } else {
      row = static_cast<int>(rng.uniform_int(static_cast<uint64_t>(statics.size())));
    }
    // without replacement within a batch while the vocabulary allows it
    if (statics.size() >= m && used[static_cast<size_t>(row)]) continue;

    WordForward wf;
    VectorT<float> pooled;
    if (!word_forward(model, tokenizer, statics.words[static_cast<size_t>(row)], layer,
                      wf, &pooled))
      continue;  // untokenizable: resample
    used[static_cast<size_t>(row)] = 1;
    batch.h1.row(filled) = pooled.cast<double>().transpose();
    batch.h2.row(filled) = statics.matrix.row(row);
    batch.words.push_back(statics.words[static_cast<size_t>(row)]);
    batch.word_rows.push_back(row);
    ++filled;
  }
  return batch;
}

AlignDeck::AlignDeck(int vocab_size, Rng rng) : rng_(rng) {
  if (vocab_size < 1) fail("align deck: empty vocabulary");
  order_.resize(static_cast<size_t>(vocab_size));
  for (int i = 0; i < vocab_size; ++i) order_[static_cast<size_t>(i)] = i;
  reshuffle();
}

void AlignDeck::reshuffle() {
  // Fisher-Yates with the deck's own rng
  for (size_t i = order_.size(); i > 1; --i) {
    size_t j = static_cast<size_t>(rng_.uniform_int(i));
    std::swap(order_[i - 1], order_[j]);
  }
  at_ = 0;
}

int AlignDeck::next() {
  if (at_ >= order_.size()) reshuffle();
  return order_[at_++];
}

bool word_forward(const EncoderModel& model, const SubwordTokenizer& tokenizer,
                  const std::string& word, int layer, WordForward& out,
                  VectorT<float>* pooled) {
  std::vector<std::pair<int, int>> spans;
  std::vector<int> ids = tokenizer.encode_sentence({word}, &spans);
  if (spans.empty() || spans[0].second <= spans[0].first) return false;
  if (static_cast<int>(ids.size()) > model.cfg.max_positions) return false;
  out.tokens = ids;
  out.span = spans[0];
  model.forward(ids, out.cache);
  out.ok = true;
  if (pooled)
    *pooled = mean_pool(out.cache.h[static_cast<size_t>(layer)], out.span.first,
                        out.span.second, ids, true);
  return true;
}

}  // namespace xsalign
