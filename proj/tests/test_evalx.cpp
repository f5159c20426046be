#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <map>

#include "test_helpers.hpp"
#include "xsalign/evalx.hpp"
#include "xsalign/synth.hpp"
#include "xsalign/util.hpp"

using namespace xsalign;

namespace {

Matrix random_matrix(int n, int d, Rng& rng) {
  Matrix m(n, d);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < d; ++j) m(i, j) = rng.gaussian();
  return m;
}

Matrix random_orthogonal(int d, Rng& rng) {
  Eigen::MatrixXd g = random_matrix(d, d, rng);
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(g);
  Eigen::MatrixXd q = qr.householderQ();
  Eigen::MatrixXd r = qr.matrixQR().triangularView<Eigen::Upper>();
  for (int i = 0; i < d; ++i)
    if (r(i, i) < 0) q.col(i) *= -1;
  return q;
}

EmbeddingSpace space_from(const Matrix& m, const std::string& prefix) {
  std::vector<std::string> words;
  for (int i = 0; i < m.rows(); ++i) words.push_back(prefix + std::to_string(i));
  return EmbeddingSpace::create(std::move(words), m);
}

// independent exhaustive-search BLI oracle (nearest neighbor, cosine)
std::vector<std::string> oracle_nn_predictions(const EmbeddingSpace& src,
                                               const EmbeddingSpace& tgt,
                                               const std::vector<std::string>& queries) {
  std::vector<std::string> out;
  for (const auto& qw : queries) {
    int qi = src.find(qw);
    REQUIRE(qi >= 0);
    double qn = src.matrix.row(qi).norm();
    int best = 0;
    double best_cos = -2.0;
    for (int j = 0; j < tgt.size(); ++j) {
      double c = src.matrix.row(qi).dot(tgt.matrix.row(j)) /
                 (qn * tgt.matrix.row(j).norm());
      if (c > best_cos) {
        best_cos = c;
        best = j;
      }
    }
    out.push_back(tgt.words[static_cast<size_t>(best)]);
  }
  return out;
}

}  // namespace

TEST_CASE("eval_bli") {
  SUBCASE("identical spaces with identity gold give p@1 = 1") {
    Rng rng(1);
    EmbeddingSpace s = space_from(random_matrix(50, 8, rng), "w");
    Dictionary gold;
    for (int i = 0; i < 50; ++i) gold.pairs.emplace_back("w" + std::to_string(i), "w" + std::to_string(i));
    for (BliMethod m : {BliMethod::Nn, BliMethod::Csls}) {
      BliResult r = eval_bli(s, s, gold, m, 10);
      CHECK(r.p_at_1 == 1.0);
      CHECK(r.coverage == 1.0);
    }
  }
  SUBCASE("unrelated 1000-word spaces score near chance") {
    Rng rng(2);
    EmbeddingSpace s = space_from(random_matrix(1000, 12, rng), "w");
    EmbeddingSpace t = space_from(random_matrix(1000, 12, rng), "w");
    Dictionary gold;
    for (int i = 0; i < 1000; ++i) gold.pairs.emplace_back("w" + std::to_string(i), "w" + std::to_string(i));
    BliResult r = eval_bli(s, t, gold, BliMethod::Nn, 10);
    CHECK(r.p_at_1 <= 0.01);
  }
  SUBCASE("nearest-neighbor predictions equal the exhaustive oracle") {
    Rng rng(3);
    EmbeddingSpace s = space_from(random_matrix(20, 6, rng), "s");
    EmbeddingSpace t = space_from(random_matrix(20, 6, rng), "t");
    Dictionary gold;
    std::vector<std::string> queries;
    for (int i = 0; i < 20; ++i) {
      gold.pairs.emplace_back("s" + std::to_string(i), "t" + std::to_string(i));
      queries.push_back("s" + std::to_string(i));
    }
    BliResult r = eval_bli(s, t, gold, BliMethod::Nn, 10);
    auto oracle = oracle_nn_predictions(s, t, queries);
    REQUIRE(r.predictions.size() == oracle.size());
    // predictions are sorted by query word (gold map order)
    std::map<std::string, std::string> mine;
    for (const auto& [q, p] : r.predictions) mine[q] = p;
    for (size_t i = 0; i < queries.size(); ++i) CHECK(mine.at(queries[i]) == oracle[i]);
  }
  SUBCASE("p@1 is invariant under a common orthogonal transform") {
    Rng rng(4);
    Matrix a = random_matrix(60, 10, rng);
    Matrix b = random_matrix(60, 10, rng);
    Matrix q = random_orthogonal(10, rng);
    Dictionary gold;
    for (int i = 0; i < 60; ++i) gold.pairs.emplace_back("s" + std::to_string(i), "t" + std::to_string(i));
    BliResult base = eval_bli(space_from(a, "s"), space_from(b, "t"), gold, BliMethod::Csls, 5);
    BliResult rot = eval_bli(space_from(a * q, "s"), space_from(b * q, "t"), gold,
                             BliMethod::Csls, 5);
    CHECK(base.p_at_1 == rot.p_at_1);
  }
  SUBCASE("multi-translation: an extra wrong gold target never hurts") {
    Rng rng(5);
    EmbeddingSpace s = space_from(random_matrix(30, 6, rng), "s");
    EmbeddingSpace t = space_from(random_matrix(30, 6, rng), "t");
    Dictionary gold;
    for (int i = 0; i < 30; ++i) gold.pairs.emplace_back("s" + std::to_string(i), "t" + std::to_string(i));
    BliResult base = eval_bli(s, t, gold, BliMethod::Nn, 5);
    Dictionary extra = gold;
    for (int i = 0; i < 30; ++i)
      extra.pairs.emplace_back("s" + std::to_string(i),
                               "t" + std::to_string((i + 7) % 30));
    BliResult more = eval_bli(s, t, extra, BliMethod::Nn, 5);
    CHECK(more.p_at_1 >= base.p_at_1);
  }
  SUBCASE("coverage counts sources usable on both sides; zero coverage is an error") {
    Rng rng(6);
    EmbeddingSpace s = space_from(random_matrix(10, 4, rng), "s");
    EmbeddingSpace t = space_from(random_matrix(10, 4, rng), "t");
    Dictionary gold;
    gold.pairs.emplace_back("s1", "t1");
    gold.pairs.emplace_back("s2", "missing");
    gold.pairs.emplace_back("absent", "t3");
    BliResult r = eval_bli(s, t, gold, BliMethod::Nn, 3);
    CHECK(r.n_covered == 1);
    CHECK(r.coverage == doctest::Approx(1.0 / 3.0));
    Dictionary none;
    none.pairs.emplace_back("nope", "nada");
    CHECK_THROWS_AS(eval_bli(s, t, none, BliMethod::Nn, 3), Error);
  }
}

namespace {

// independent rank-correlation oracle: explicit rank construction with
// average ties, then textbook Pearson on the ranks
double oracle_spearman(std::vector<double> x, std::vector<double> y) {
  auto ranks = [](const std::vector<double>& v) {
    std::vector<double> r(v.size());
    for (size_t i = 0; i < v.size(); ++i) {
      double less = 0, equal = 0;
      for (size_t j = 0; j < v.size(); ++j) {
        if (v[j] < v[i]) ++less;
        if (v[j] == v[i]) ++equal;
      }
      r[i] = less + (equal + 1) / 2.0;
    }
    return r;
  };
  std::vector<double> rx = ranks(x), ry = ranks(y);
  double n = static_cast<double>(x.size());
  double sx = 0, sy = 0, sxy = 0, sxx = 0, syy = 0;
  for (size_t i = 0; i < x.size(); ++i) {
    sx += rx[i];
    sy += ry[i];
  }
  for (size_t i = 0; i < x.size(); ++i) {
    sxy += (rx[i] - sx / n) * (ry[i] - sy / n);
    sxx += (rx[i] - sx / n) * (rx[i] - sx / n);
    syy += (ry[i] - sy / n) * (ry[i] - sy / n);
  }
  return sxy / std::sqrt(sxx * syy);
}

}  // namespace

TEST_CASE("spearman") {
  SUBCASE("perfect and reversed rankings") {
    std::vector<double> x{0.1, 0.4, 0.2, 0.9, 0.5};
    std::vector<double> rev;
    for (double v : x) rev.push_back(-v);
    CHECK(spearman_rho(x, x) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(spearman_rho(x, rev) == doctest::Approx(-1.0).epsilon(1e-12));
  }
  SUBCASE("tie handling equals the independent oracle to 1e-12") {
    std::vector<double> x{3.0, 1.0, 4.0, 1.0, 5.0, 9.0, 2.0, 6.0, 5.0, 3.0};
    std::vector<double> y{2.7, 1.8, 2.8, 1.8, 4.5, 9.0, 4.5, 6.2, 8.1, 2.7};
    CHECK(spearman_rho(x, y) == doctest::Approx(oracle_spearman(x, y)).epsilon(1e-12));
  }
  SUBCASE("degenerate input errors") {
    CHECK_THROWS_AS(spearman_rho({1.0}, {1.0}), Error);
    CHECK_THROWS_AS(spearman_rho({1.0, 1.0, 1.0}, {1.0, 2.0, 3.0}), Error);
  }
}

TEST_CASE("eval_similarity") {
  Rng rng(7);
  EmbeddingSpace s = space_from(random_matrix(20, 6, rng), "w");
  SUBCASE("model cosines ranked like gold give rho = 1") {
    SimilarityGold gold;
    // use the model's own cosines as gold scores
    for (int i = 1; i <= 10; ++i) {
      double cos = s.matrix.row(0).dot(s.matrix.row(i)) /
                   (s.matrix.row(0).norm() * s.matrix.row(i).norm());
      gold.emplace_back("w0", "w" + std::to_string(i), cos);
    }
    SimilarityResult r = eval_similarity(s, nullptr, gold);
    CHECK(r.spearman == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(r.n_scored == 10);
  }
  SUBCASE("OOV pairs are skipped and counted") {
    SimilarityGold gold;
    gold.emplace_back("w0", "w1", 0.5);
    gold.emplace_back("w0", "ghost", 0.5);
    gold.emplace_back("w2", "w3", 0.1);
    SimilarityResult r = eval_similarity(s, nullptr, gold);
    CHECK(r.n_scored == 2);
    CHECK(r.n_skipped == 1);
  }
  SUBCASE("cross-lingual mode uses the second space for word2") {
    EmbeddingSpace t = space_from(random_matrix(20, 6, rng), "v");
    SimilarityGold gold;
    for (int i = 0; i < 6; ++i)
      gold.emplace_back("w" + std::to_string(i), "v" + std::to_string(i), 6.0 - i);
    SimilarityResult r = eval_similarity(s, &t, gold);
    CHECK(r.n_scored == 6);
  }
  SUBCASE("similarity file io") {
    TempDir tmp;
    write_file(tmp.file("g.tsv"), "a\tb\t0.5\nc\td\t-0.25\n");
    SimilarityGold gold = read_similarity_file(tmp.file("g.tsv"));
    REQUIRE(gold.size() == 2);
    CHECK(std::get<2>(gold[1]) == -0.25);
    write_file(tmp.file("bad.tsv"), "a b 0.5\n");
    CHECK_THROWS_AS(read_similarity_file(tmp.file("bad.tsv")), Error);
  }
}

TEST_CASE("eval_retrieval") {
  // tiny world + corpus for a real tokenizer/encoder
  SynthConfig scfg;
  scfg.concepts = 30;
  scfg.dim = 8;
  scfg.languages = {{"aa", 0.0}, {"bb", 0.0}};
  scfg.sentences = 80;
  scfg.seed = 8;
  SynthWorld world = gen_world(scfg);
  Corpus corpus = corpus_from_paragraphs(gen_paragraphs(world, 0));
  Corpus corpus_b = corpus_from_paragraphs(gen_paragraphs(world, 1));
  for (auto& p : corpus_b.paragraphs) corpus.paragraphs.push_back(p);
  for (const auto& [w, n] : corpus_b.freq) corpus.freq[w] += n;
  corpus.total_tokens += corpus_b.total_tokens;

  SubwordTokenizer tok = train_tokenizer(corpus, 280);
  EncoderConfig ecfg;
  ecfg.n_layers = 2;
  ecfg.n_heads = 2;
  ecfg.d_model = 16;
  ecfg.d_ff = 32;
  ecfg.max_positions = 40;
  ecfg.vocab_size = tok.vocab_size();
  Rng rng(9);
  EncoderModel model = EncoderModel::init(ecfg, rng);

  SUBCASE("identical sides retrieve perfectly") {
    std::vector<Sentence> a, b;
    gen_parallel(world, 0, 0, 15, &a, &b);
    RetrievalResult r = eval_retrieval(model, tok, a, b, ecfg.n_layers);
    CHECK(r.acc_src2tgt == 1.0);
    CHECK(r.acc_tgt2src == 1.0);
  }
  SUBCASE("argmax equals a brute-force cosine table on 20 sentences") {
    std::vector<Sentence> a, b;
    gen_parallel(world, 0, 1, 20, &a, &b);
    RetrievalResult r = eval_retrieval(model, tok, a, b, 1);

    // oracle: pool manually, full cosine table
    auto pool_side = [&](const std::vector<Sentence>& side) {
      Matrix m(static_cast<Eigen::Index>(side.size()), ecfg.d_model);
      for (size_t i = 0; i < side.size(); ++i) {
        auto ids = tok.encode_sentence(side[i], nullptr);
        auto states = model.encode(ids);
        Vector sum = Vector::Zero(ecfg.d_model);
        int cnt = 0;
        for (size_t p = 0; p < ids.size(); ++p) {
          if (SubwordTokenizer::is_special(ids[p])) continue;
          sum += states[1].row(static_cast<Eigen::Index>(p)).cast<double>().transpose();
          ++cnt;
        }
        m.row(static_cast<Eigen::Index>(i)) = (sum / cnt).transpose();
      }
      return m;
    };
    Matrix pa = pool_side(a), pb = pool_side(b);
    int correct = 0;
    for (int i = 0; i < 20; ++i) {
      int best = 0;
      double best_cos = -2;
      for (int j = 0; j < 20; ++j) {
        double c = pa.row(i).dot(pb.row(j)) / (pa.row(i).norm() * pb.row(j).norm());
        if (c > best_cos) {
          best_cos = c;
          best = j;
        }
      }
      if (best == i) ++correct;
    }
    CHECK(r.acc_src2tgt == doctest::Approx(correct / 20.0).epsilon(1e-12));
  }
  SUBCASE("accuracy is invariant under a joint re-ordering of the pairs") {
    std::vector<Sentence> a, b;
    gen_parallel(world, 0, 1, 18, &a, &b);
    RetrievalResult base = eval_retrieval(model, tok, a, b, 1);
    std::vector<Sentence> ap, bp;
    Rng perm(10);
    std::vector<size_t> order(a.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = i;
    for (size_t i = order.size(); i > 1; --i)
      std::swap(order[i - 1], order[perm.uniform_int(i)]);
    for (size_t i : order) {
      ap.push_back(a[i]);
      bp.push_back(b[i]);
    }
    RetrievalResult shuffled = eval_retrieval(model, tok, ap, bp, 1);
    CHECK(base.acc_src2tgt == shuffled.acc_src2tgt);
    CHECK(base.acc_tgt2src == shuffled.acc_tgt2src);
  }
  SUBCASE("threaded encoding matches single-threaded") {
    std::vector<Sentence> a, b;
    gen_parallel(world, 0, 1, 16, &a, &b);
    RetrievalResult r1 = eval_retrieval(model, tok, a, b, 2, 1);
    RetrievalResult r4 = eval_retrieval(model, tok, a, b, 2, 4);
    CHECK(r1.acc_src2tgt == r4.acc_src2tgt);
    CHECK(r1.acc_tgt2src == r4.acc_tgt2src);
  }
  SUBCASE("mismatched sides are an error") {
    std::vector<Sentence> a, b;
    gen_parallel(world, 0, 1, 5, &a, &b);
    b.pop_back();
    CHECK_THROWS_AS(eval_retrieval(model, tok, a, b, 1), Error);
  }
}
