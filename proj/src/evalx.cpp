#include "xsalign/evalx.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <set>

#include "xsalign/mapping.hpp"
#include "xsalign/util.hpp"

namespace xsalign {

BliResult eval_bli(const EmbeddingSpace& src, const EmbeddingSpace& tgt,
                   const Dictionary& gold, BliMethod method, int k, int threads) {
  if (gold.empty()) fail("eval_bli: empty gold dictionary");
  EmbeddingSpace s = unit_normalize(src);
  EmbeddingSpace t = unit_normalize(tgt);

  // gold source word -> acceptable targets
  std::map<std::string, std::set<std::string>> gold_map;
  for (const auto& [a, b] : gold.pairs) gold_map[a].insert(b);

  std::vector<std::pair<int, const std::set<std::string>*>> queries;  // src row, targets
  std::vector<std::string> query_words;
  for (const auto& [word, targets] : gold_map) {
    int si = s.find(word);
    if (si < 0) continue;
    bool any_target = false;
    for (const auto& tw : targets)
      if (t.find(tw) >= 0) {
        any_target = true;
        break;
      }
    if (!any_target) continue;
    queries.emplace_back(si, &targets);
    query_words.push_back(word);
  }

  BliResult result;
  result.n_gold_sources = static_cast<int>(gold_map.size());
  result.n_covered = static_cast<int>(queries.size());
  result.coverage = gold_map.empty()
                        ? 0.0
                        : static_cast<double>(queries.size()) / gold_map.size();
  if (queries.empty()) fail("eval_bli: zero coverage");

  Matrix q(static_cast<Eigen::Index>(queries.size()), s.dim());
  for (size_t i = 0; i < queries.size(); ++i)
    q.row(static_cast<Eigen::Index>(i)) = s.matrix.row(queries[i].first);

  std::vector<int> best(queries.size(), 0);
  if (method == BliMethod::Nn) {
    parallel_for(static_cast<int64_t>(queries.size()), threads,
                 [&](int64_t begin, int64_t end) {
                   for (int64_t i = begin; i < end; ++i) {
                     Eigen::Index arg = 0;
                     double best_score = -std::numeric_limits<double>::infinity();
                     for (Eigen::Index j = 0; j < t.matrix.rows(); ++j) {
                       double d = q.row(i).dot(t.matrix.row(j));
                       if (d > best_score) {
                         best_score = d;
                         arg = j;
                       }
                     }
                     best[static_cast<size_t>(i)] = static_cast<int>(arg);
                   }
                 });
  } else {
    // hub penalties over the full vocabularies
    Vector r_t = knn_mean_similarity(t.matrix, s.matrix, k, threads);  // per target
    Vector r_q = knn_mean_similarity(q, t.matrix, k, threads);         // per query
    parallel_for(static_cast<int64_t>(queries.size()), threads,
                 [&](int64_t begin, int64_t end) {
                   for (int64_t i = begin; i < end; ++i) {
                     Vector scores = csls_scores(q.row(i).transpose(), t.matrix, r_q(i), r_t);
                     Eigen::Index arg = 0;
                     double best_score = -std::numeric_limits<double>::infinity();
                     for (Eigen::Index j = 0; j < scores.size(); ++j)
                       if (scores(j) > best_score) {
                         best_score = scores(j);
                         arg = j;
                       }
                     best[static_cast<size_t>(i)] = static_cast<int>(arg);
                   }
                 });
  }

  int correct = 0;
  for (size_t i = 0; i < queries.size(); ++i) {
    const std::string& predicted = t.words[static_cast<size_t>(best[i])];
    result.predictions.emplace_back(query_words[i], predicted);
    if (queries[i].second->count(predicted)) ++correct;
  }
  result.p_at_1 = static_cast<double>(correct) / static_cast<double>(queries.size());
  return result;
}

static std::vector<double> average_ranks(const std::vector<double>& values) {
  const size_t n = values.size();
  std::vector<size_t> order(n);
  for (size_t i = 0; i < n; ++i) order[i] = i;
  std::sort(order.begin(), order.end(),
            [&values](size_t a, size_t b) { return values[a] < values[b]; });
  std::vector<double> ranks(n);
  size_t i = 0;
  while (i < n) {
    size_t j = i;
    while (j + 1 < n && values[order[j + 1]] == values[order[i]]) ++j;
    double avg = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
    for (size_t k = i; k <= j; ++k) ranks[order[k]] = avg;
    i = j + 1;
  }
  return ranks;
}

double spearman_rho(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size()) fail("spearman: size mismatch");
  if (x.size() < 2) fail("spearman: need at least 2 pairs");
  std::vector<double> rx = average_ranks(x), ry = average_ranks(y);
  double mx = 0, my = 0;
  for (size_t i = 0; i < rx.size(); ++i) {
    mx += rx[i];
    my += ry[i];
  }
  mx /= static_cast<double>(rx.size());
  my /= static_cast<double>(ry.size());
  double sxy = 0, sxx = 0, syy = 0;
  for (size_t i = 0; i < rx.size(); ++i) {
    sxy += (rx[i] - mx) * (ry[i] - my);
    sxx += (rx[i] - mx) * (rx[i] - mx);
    syy += (ry[i] - my) * (ry[i] - my);
  }
  if (sxx == 0.0 || syy == 0.0) fail("spearman: degenerate ranking (all ranks tied)");
  return sxy / std::sqrt(sxx * syy);
}

SimilarityResult eval_similarity(const EmbeddingSpace& space,
                                 const EmbeddingSpace* space2,
                                 const SimilarityGold& gold) {
  if (gold.empty()) fail("eval_similarity: empty gold set");
  const EmbeddingSpace& second = space2 ? *space2 : space;
  std::vector<double> model_scores, gold_scores;
  SimilarityResult result;
  for (const auto& [w1, w2, g] : gold) {
    int i = space.find(w1);
    int j = second.find(w2);
    if (i < 0 || j < 0) {
      ++result.n_skipped;
      continue;
    }
    double na = space.matrix.row(i).norm();
    double nb = second.matrix.row(j).norm();
    if (na < 1e-12 || nb < 1e-12) {
      ++result.n_skipped;
      continue;
    }
    model_scores.push_back(space.matrix.row(i).dot(second.matrix.row(j)) / (na * nb));
    gold_scores.push_back(g);
  }
  result.n_scored = static_cast<int>(model_scores.size());
  if (result.n_scored < 2) fail("eval_similarity: fewer than 2 scored pairs");
  result.spearman = spearman_rho(model_scores, gold_scores);
  return result;
}

SimilarityGold read_similarity_file(const std::string& path) {
  SimilarityGold gold;
  std::vector<std::string> lines = read_lines(path);
  for (size_t i = 0; i < lines.size(); ++i) {
    if (lines[i].empty()) continue;
    auto fields = split_char(lines[i], '\t');
    if (fields.size() != 3)
      fail(path + ": line " + std::to_string(i + 1) +
           ": expected word1<TAB>word2<TAB>score");
    gold.emplace_back(std::string(fields[0]), std::string(fields[1]),
                      parse_double(fields[2], path + ": line " + std::to_string(i + 1)));
  }
  if (gold.empty()) fail(path + ": empty similarity file");
  return gold;
}

std::vector<Sentence> read_sentence_file(const std::string& path) {
  std::vector<Sentence> out;
  for (const std::string& line : read_lines(path)) {
    auto tokens = split_spaces(line);
    if (tokens.empty()) continue;
    Sentence s;
    s.reserve(tokens.size());
    for (auto t : tokens) s.emplace_back(t);
    out.push_back(std::move(s));
  }
  if (out.empty()) fail(path + ": no sentences");
  return out;
}

RetrievalResult eval_retrieval(const EncoderModel& model, const SubwordTokenizer& tokenizer,
                               const std::vector<Sentence>& src,
                               const std::vector<Sentence>& tgt, int layer,
                               int threads) {
  if (src.size() != tgt.size()) fail("eval_retrieval: side sizes differ");
  if (src.empty()) fail("eval_retrieval: no sentences");
  if (layer < 0 || layer > model.cfg.n_layers) fail("eval_retrieval: layer out of range");

  const int n = static_cast<int>(src.size());
  auto embed_side = [&](const std::vector<Sentence>& side) {
    Matrix pooled(n, model.cfg.d_model);
    parallel_for(n, threads, [&](int64_t begin, int64_t end) {
      for (int64_t i = begin; i < end; ++i) {
        std::vector<int> ids = tokenizer.encode_sentence(side[static_cast<size_t>(i)], nullptr);
        if (static_cast<int>(ids.size()) <= 2)
          fail("eval_retrieval: empty sentence after tokenization");
        if (static_cast<int>(ids.size()) > model.cfg.max_positions)
          ids = std::vector<int>(ids.begin(), ids.begin() + model.cfg.max_positions - 1),
          ids.push_back(SubwordTokenizer::kEos);
        auto states = model.encode(ids);
        VectorT<float> v = mean_pool(states[static_cast<size_t>(layer)], 0,
                                     static_cast<int>(ids.size()), ids, true);
        pooled.row(i) = v.cast<double>().transpose();
        double norm = pooled.row(i).norm();
        if (norm > 1e-12) pooled.row(i) /= norm;
      }
    });
    return pooled;
  };

  Matrix a = embed_side(src);
  Matrix b = embed_side(tgt);

  auto accuracy = [n](const Matrix& from, const Matrix& to) {
    int correct = 0;
    for (int i = 0; i < n; ++i) {
      Eigen::Index arg = 0;
      double best = -std::numeric_limits<double>::infinity();
      for (Eigen::Index j = 0; j < n; ++j) {
        double d = from.row(i).dot(to.row(j));
        if (d > best) {
          best = d;
          arg = j;
        }
      }
      if (arg == i) ++correct;
    }
    return static_cast<double>(correct) / n;
  };

  RetrievalResult result;
  result.layer = layer;
  result.n = n;
  result.acc_src2tgt = accuracy(a, b);
  result.acc_tgt2src = accuracy(b, a);
  return result;
}

}  // namespace xsalign
