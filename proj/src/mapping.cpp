#include "xsalign/mapping.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>

#include "xsalign/evalx.hpp"
#include "xsalign/util.hpp"

namespace xsalign {

void MappingConfig::validate() const {
  if (csls_k < 1) fail("mapping config: csls_k must be >= 1");
  if (cutoff < 2) fail("mapping config: cutoff must be >= 2");
  if (!(keep_prob_start > 0.0 && keep_prob_start <= 1.0))
    fail("mapping config: keep_prob_start must lie in (0, 1]");
  if (keep_prob_mult <= 1.0) fail("mapping config: keep_prob_mult must exceed 1");
  if (threshold < 0.0) fail("mapping config: threshold must be >= 0");
  if (max_iterations < 1) fail("mapping config: max_iterations must be >= 1");
  if (stagnation_patience < 1) fail("mapping config: stagnation_patience must be >= 1");
}

EmbeddingSpace apply_normalization(const EmbeddingSpace& space,
                                   const std::vector<NormStep>& steps) {
  EmbeddingSpace out = space;
  for (NormStep s : steps)
    out = (s == NormStep::Unit) ? unit_normalize(out) : mean_center(out);
  return out;
}

Matrix procrustes(const Matrix& x, const Matrix& y) {
  if (x.rows() != y.rows() || x.cols() != y.cols())
    fail("procrustes: dimension mismatch");
  if (x.rows() < 1) fail("procrustes: need at least one pair");
  Eigen::MatrixXd m = x.transpose() * y;
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(m, Eigen::ComputeFullU | Eigen::ComputeFullV);
  return svd.matrixU() * svd.matrixV().transpose();
}

// Sequential-order dot product; the documented floating-point order that
// test oracles replicate.
static double dot_seq(const double* a, const double* b, Eigen::Index d) {
  double s = 0.0;
  for (Eigen::Index i = 0; i < d; ++i) s += a[i] * b[i];
  return s;
}

// mean of the k largest values, selected by (value desc, index asc) and
// summed in that order
static double topk_mean(const std::vector<double>& values, int k) {
  std::vector<int> idx(values.size());
  for (size_t i = 0; i < idx.size(); ++i) idx[i] = static_cast<int>(i);
  auto cmp = [&values](int a, int b) {
    if (values[static_cast<size_t>(a)] != values[static_cast<size_t>(b)])
      return values[static_cast<size_t>(a)] > values[static_cast<size_t>(b)];
    return a < b;
  };
  std::partial_sort(idx.begin(), idx.begin() + k, idx.end(), cmp);
  double sum = 0.0;
  for (int i = 0; i < k; ++i) sum += values[static_cast<size_t>(idx[static_cast<size_t>(i)])];
  return sum / k;
}

Vector knn_mean_similarity(const Matrix& queries, const Matrix& cands, int k,
                           int threads) {
  if (queries.cols() != cands.cols()) fail("knn_mean_similarity: dimension mismatch");
  if (k < 1) fail("knn_mean_similarity: k must be >= 1");
  if (k > cands.rows())
    fail("knn_mean_similarity: k " + std::to_string(k) + " exceeds candidate count " +
         std::to_string(cands.rows()));
  Vector r(queries.rows());
  parallel_for(queries.rows(), threads, [&](int64_t begin, int64_t end) {
    std::vector<double> sims(static_cast<size_t>(cands.rows()));
    for (int64_t i = begin; i < end; ++i) {
      for (Eigen::Index j = 0; j < cands.rows(); ++j)
        sims[static_cast<size_t>(j)] =
            dot_seq(queries.row(i).data(), cands.row(j).data(), queries.cols());
      r(i) = topk_mean(sims, k);
    }
  });
  return r;
}

Vector csls_scores(const Vector& query, const Matrix& cands, double r_query,
                   const Vector& r_cands) {
  if (query.size() != cands.cols()) fail("csls_scores: dimension mismatch");
  if (r_cands.size() != cands.rows()) fail("csls_scores: r_cands size mismatch");
  Vector out(cands.rows());
  for (Eigen::Index j = 0; j < cands.rows(); ++j)
    out(j) = 2.0 * dot_seq(query.data(), cands.row(j).data(), query.size()) - r_query -
             r_cands(j);
  return out;
}

Matrix csls_matrix(const Matrix& queries, const Matrix& cands, int k, int threads) {
  if (queries.cols() != cands.cols()) fail("csls_matrix: dimension mismatch");
  if (k < 1) fail("csls_matrix: k must be >= 1");
  if (k > cands.rows() || k > queries.rows())
    fail("csls_matrix: k exceeds row count");
  const Eigen::Index nq = queries.rows(), nc = cands.rows();

  Matrix sims(nq, nc);
  parallel_for(nq, threads, [&](int64_t begin, int64_t end) {
    for (int64_t i = begin; i < end; ++i)
      for (Eigen::Index j = 0; j < nc; ++j)
        sims(i, j) = dot_seq(queries.row(i).data(), cands.row(j).data(), queries.cols());
  });

  Vector r_q(nq), r_c(nc);
  parallel_for(nq, threads, [&](int64_t begin, int64_t end) {
    std::vector<double> row(static_cast<size_t>(nc));
    for (int64_t i = begin; i < end; ++i) {
      for (Eigen::Index j = 0; j < nc; ++j) row[static_cast<size_t>(j)] = sims(i, j);
      r_q(i) = topk_mean(row, k);
    }
  });
  parallel_for(nc, threads, [&](int64_t begin, int64_t end) {
    std::vector<double> col(static_cast<size_t>(nq));
    for (int64_t j = begin; j < end; ++j) {
      for (Eigen::Index i = 0; i < nq; ++i) col[static_cast<size_t>(i)] = sims(i, j);
      r_c(j) = topk_mean(col, k);
    }
  });

  Matrix out(nq, nc);
  for (Eigen::Index i = 0; i < nq; ++i)
    for (Eigen::Index j = 0; j < nc; ++j) out(i, j) = 2.0 * sims(i, j) - r_q(i) - r_c(j);
  return out;
}

Dictionary induce_seed_unsupervised(const EmbeddingSpace& src, const EmbeddingSpace& tgt,
                                    int cutoff, int threads,
                                    std::vector<double>* match_scores) {
  if (cutoff < 2) fail("induce_seed: cutoff must be >= 2");
  if (src.size() < cutoff || tgt.size() < cutoff)
    fail("induce_seed: cutoff " + std::to_string(cutoff) + " exceeds vocabulary (" +
         std::to_string(src.size()) + ", " + std::to_string(tgt.size()) + ")");

  auto signature = [&](const EmbeddingSpace& space) {
    EmbeddingSpace unit = unit_normalize(space);
    Matrix top = unit.matrix.topRows(cutoff);
    Matrix sig(cutoff, cutoff);
    parallel_for(cutoff, threads, [&](int64_t begin, int64_t end) {
      for (int64_t i = begin; i < end; ++i) {
        for (Eigen::Index j = 0; j < cutoff; ++j)
          sig(i, j) = dot_seq(top.row(i).data(), top.row(j).data(), top.cols());
        // sorted similarity profile is invariant to word order and rotation
        std::sort(sig.row(i).data(), sig.row(i).data() + cutoff, std::greater<double>());
        double norm = sig.row(i).norm();
        if (norm > 0) sig.row(i) /= norm;
      }
    });
    return sig;
  };

  Matrix a = signature(src);
  Matrix b = signature(tgt);

  Dictionary dict;
  dict.pairs.reserve(static_cast<size_t>(cutoff));
  std::vector<int> match(static_cast<size_t>(cutoff));
  std::vector<double> scores(static_cast<size_t>(cutoff));
  parallel_for(cutoff, threads, [&](int64_t begin, int64_t end) {
    for (int64_t i = begin; i < end; ++i) {
      int best = 0;
      double best_score = -std::numeric_limits<double>::infinity();
      for (Eigen::Index j = 0; j < cutoff; ++j) {
        double s = dot_seq(a.row(i).data(), b.row(j).data(), cutoff);
        if (s > best_score) {
          best_score = s;
          best = static_cast<int>(j);
        }
      }
      match[static_cast<size_t>(i)] = best;
      scores[static_cast<size_t>(i)] = best_score;
    }
  });
  for (int i = 0; i < cutoff; ++i)
    dict.pairs.emplace_back(src.words[static_cast<size_t>(i)],
                            tgt.words[static_cast<size_t>(match[static_cast<size_t>(i)])]);
  if (match_scores) *match_scores = std::move(scores);
  return dict;
}

// dictionary word pairs -> row index pairs, dropping entries missing from
// either vocabulary
static std::vector<std::pair<int, int>> resolve_dict(const EmbeddingSpace& src,
                                                     const EmbeddingSpace& tgt,
                                                     const Dictionary& dict,
                                                     int* dropped) {
  std::vector<std::pair<int, int>> out;
  out.reserve(dict.size());
  int miss = 0;
  for (const auto& [s, t] : dict.pairs) {
    int si = src.find(s), ti = tgt.find(t);
    if (si < 0 || ti < 0) {
      ++miss;
      continue;
    }
    out.emplace_back(si, ti);
  }
  if (dropped) *dropped = miss;
  return out;
}

static Matrix gather_rows(const Matrix& m, const std::vector<std::pair<int, int>>& idx,
                          bool first) {
  Matrix out(static_cast<Eigen::Index>(idx.size()), m.cols());
  for (size_t i = 0; i < idx.size(); ++i)
    out.row(static_cast<Eigen::Index>(i)) = m.row(first ? idx[i].first : idx[i].second);
  return out;
}

static double mean_cosine(const Matrix& a, const Matrix& b,
                          const std::vector<std::pair<int, int>>& idx) {
  double sum = 0.0;
  for (const auto& [i, j] : idx) {
    double na = a.row(i).norm(), nb = b.row(j).norm();
    sum += dot_seq(a.row(i).data(), b.row(j).data(), a.cols()) / (na * nb);
  }
  return idx.empty() ? 0.0 : sum / static_cast<double>(idx.size());
}

// inverse square root of m^T m via thin SVD of m
static Matrix whitening_transform(const Matrix& m) {
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(m, Eigen::ComputeThinV);
  Eigen::VectorXd s = svd.singularValues();
  for (Eigen::Index i = 0; i < s.size(); ++i) s(i) = 1.0 / std::max(s(i), 1e-12);
  Eigen::MatrixXd v = svd.matrixV();
  return v * s.asDiagonal() * v.transpose();
}

MappedPair map_supervised(const EmbeddingSpace& src, const EmbeddingSpace& tgt,
                          const Dictionary& dict, const MappingConfig& config) {
  config.validate();
  if (dict.empty()) fail("map_supervised: empty dictionary");
  if (src.dim() != tgt.dim()) fail("map_supervised: dimension mismatch");

  EmbeddingSpace sn = apply_normalization(src, config.normalize);
  EmbeddingSpace tn = apply_normalization(tgt, config.normalize);

  MappedPair out;
  auto idx = resolve_dict(sn, tn, dict, &out.dropped_pairs);
  if (idx.empty()) fail("map_supervised: no dictionary pair present in both vocabularies");

  Matrix xd = gather_rows(sn.matrix, idx, true);
  Matrix yd = gather_rows(tn.matrix, idx, false);

  if (!config.whiten) {
    out.transform = procrustes(xd, yd);
    out.orthogonal = true;
    out.src = EmbeddingSpace::create(sn.words, sn.matrix * out.transform);
    out.tgt = std::move(tn);
  } else {
    Matrix w1 = whitening_transform(xd);
    Matrix w2 = whitening_transform(yd);
    Matrix xw = sn.matrix * w1;
    Matrix yw = tn.matrix * w2;
    Eigen::MatrixXd cross = (xd * w1).transpose() * (yd * w2);
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(cross,
                                          Eigen::ComputeFullU | Eigen::ComputeFullV);
    Eigen::MatrixXd u = svd.matrixU();
    Eigen::MatrixXd v = svd.matrixV();
    Eigen::VectorXd s = svd.singularValues();
    Eigen::VectorXd sw = s.array().pow(config.reweight);

    // (m^T m)^{1/2}, the inverse of the whitening transform
    auto dewhitening = [](const Matrix& m) {
      Eigen::JacobiSVD<Eigen::MatrixXd> si(m, Eigen::ComputeThinV);
      Eigen::VectorXd sv = si.singularValues();
      return Matrix(si.matrixV() * sv.asDiagonal() * si.matrixV().transpose());
    };
    Matrix w1_inv = dewhitening(xd);
    Matrix w2_inv = dewhitening(yd);

    Matrix src_map = w1 * u * sw.asDiagonal() * u.transpose() * w1_inv * u;
    Matrix tgt_map = w2 * v * sw.asDiagonal() * v.transpose() * w2_inv * v;
    out.transform = src_map;
    out.orthogonal = false;
    out.src = EmbeddingSpace::create(sn.words, sn.matrix * src_map);
    out.tgt = EmbeddingSpace::create(tn.words, tn.matrix * tgt_map);
  }

  out.objective = mean_cosine(out.src.matrix, out.tgt.matrix, idx);
  out.iterations = 1;
  return out;
}

namespace {

struct InducedDict {
  std::vector<std::pair<int, int>> pairs;
};

// argmax per row with entries dropped at probability 1 - keep_prob;
// draws consumed in row-major order for determinism
std::vector<int> induced_matches(const Matrix& scores, double keep_prob, Rng& rng) {
  std::vector<int> match(static_cast<size_t>(scores.rows()));
  for (Eigen::Index i = 0; i < scores.rows(); ++i) {
    int best = -1;
    double best_score = -std::numeric_limits<double>::infinity();
    for (Eigen::Index j = 0; j < scores.cols(); ++j) {
      if (keep_prob < 1.0 && rng.uniform() >= keep_prob) continue;
      if (scores(i, j) > best_score) {
        best_score = scores(i, j);
        best = static_cast<int>(j);
      }
    }
    if (best < 0) best = 0;  // everything dropped; arbitrary but deterministic
    match[static_cast<size_t>(i)] = best;
  }
  return match;
}

}  // namespace

MappedPair self_learn(const EmbeddingSpace& src, const EmbeddingSpace& tgt,
                      const Dictionary& seed, const MappingConfig& config) {
  config.validate();
  if (seed.empty()) fail("self_learn: empty seed dictionary");
  if (src.dim() != tgt.dim()) fail("self_learn: dimension mismatch");

  EmbeddingSpace sn = apply_normalization(src, config.normalize);
  EmbeddingSpace tn = apply_normalization(tgt, config.normalize);

  const int nc_src = std::min<int>(config.cutoff, sn.size());
  const int nc_tgt = std::min<int>(config.cutoff, tn.size());
  const int k = std::min({config.csls_k, nc_src, nc_tgt});
  Matrix xc = sn.matrix.topRows(nc_src);
  Matrix yc = tn.matrix.topRows(nc_tgt);

  MappedPair out;
  auto dict = resolve_dict(sn, tn, seed, &out.dropped_pairs);
  if (dict.empty()) fail("self_learn: no seed pair present in both vocabularies");

  Rng rng = Rng(config.seed).child("self-learn");
  double keep_prob = config.keep_prob_start;
  double best_obj = -std::numeric_limits<double>::infinity();
  Matrix best_w = Matrix::Identity(sn.dim(), sn.dim());
  std::vector<std::pair<int, int>> best_dict = dict;
  int stagnant = 0;
  out.converged = false;

  int it = 0;
  for (; it < config.max_iterations; ++it) {
    Matrix w = procrustes(gather_rows(sn.matrix, dict, true),
                          gather_rows(tn.matrix, dict, false));
    Matrix xm = xc * w;

    Matrix fwd = csls_matrix(xm, yc, k, config.threads);
    std::vector<int> fmatch = induced_matches(fwd, keep_prob, rng);
    Matrix bwd = csls_matrix(yc, xm, k, config.threads);
    std::vector<int> bmatch = induced_matches(bwd, keep_prob, rng);

    std::set<std::pair<int, int>> union_set;
    for (int i = 0; i < nc_src; ++i) union_set.emplace(i, fmatch[static_cast<size_t>(i)]);
    for (int j = 0; j < nc_tgt; ++j) union_set.emplace(bmatch[static_cast<size_t>(j)], j);
    std::vector<std::pair<int, int>> induced(union_set.begin(), union_set.end());

    double obj = mean_cosine(xm, yc, induced);
    out.objective_trace.push_back(obj);

    bool improved = obj >= best_obj + config.threshold;
    if (obj > best_obj) {
      best_obj = obj;
      best_w = w;
      best_dict = induced;
    }
    if (improved) {
      stagnant = 0;
    } else {
      if (keep_prob >= 1.0) {
        out.converged = true;
        ++it;
        break;
      }
      if (++stagnant >= config.stagnation_patience) {
        keep_prob = std::min(1.0, keep_prob * config.keep_prob_mult);
        stagnant = 0;
      }
    }
    dict = induced;
  }

  out.iterations = it;
  out.transform = best_w;
  out.orthogonal = true;
  out.objective = best_obj;
  out.src = EmbeddingSpace::create(sn.words, sn.matrix * best_w);
  out.tgt = std::move(tn);
  return out;
}

SelectionReport select_aligned(const EmbeddingSpace& aligned,
                               const EmbeddingSpace& unaligned,
                               const Dictionary& validation,
                               const EmbeddingSpace& pivot,
                               const MappingConfig& config) {
  if (validation.empty()) fail("select_aligned: empty validation dictionary");
  SelectionReport report;
  BliResult a = eval_bli(aligned, pivot, validation, BliMethod::Csls, config.csls_k,
                         config.threads);
  BliResult u = eval_bli(unaligned, pivot, validation, BliMethod::Csls, config.csls_k,
                         config.threads);
  report.aligned_p1 = a.p_at_1;
  report.unaligned_p1 = u.p_at_1;
  report.chose_aligned = a.p_at_1 >= u.p_at_1;  // tie goes to aligned
  return report;
}

}  // namespace xsalign
