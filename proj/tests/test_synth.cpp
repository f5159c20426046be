#include "doctest.h"

#include <cmath>
#include <map>

#include "test_helpers.hpp"
#include "xsalign/synth.hpp"
#include "xsalign/util.hpp"

using namespace xsalign;

static SynthConfig two_lang_config() {
  SynthConfig cfg;
  cfg.concepts = 60;
  cfg.dim = 10;
  cfg.languages = {{"aa", 0.0}, {"bb", 0.0}};
  cfg.sentences = 120;
  cfg.seed = 3;
  return cfg;
}

TEST_CASE("gen_world") {
  SUBCASE("sigma 0: gold pairs relate by the exact composed rotation") {
    SynthWorld w = gen_world(two_lang_config());
    Matrix rel = w.q[0] * w.q[1].transpose();  // maps language b to language a
    for (int c = 0; c < w.cfg.concepts; ++c) {
      Vector ua = w.u[0].row(c).transpose();
      Vector ub_mapped = rel * w.u[1].row(c).transpose();
      double cos = ua.dot(ub_mapped) / (ua.norm() * ub_mapped.norm());
      CHECK(std::abs(cos - 1.0) < 1e-9);
    }
  }
  SUBCASE("transforms are orthogonal") {
    SynthWorld w = gen_world(two_lang_config());
    for (const Matrix& q : w.q)
      CHECK((q.transpose() * q - Matrix::Identity(10, 10)).cwiseAbs().maxCoeff() < 1e-9);
  }
  SUBCASE("same seed reproduces the world bit-for-bit") {
    SynthWorld a = gen_world(two_lang_config());
    SynthWorld b = gen_world(two_lang_config());
    CHECK((a.z - b.z).cwiseAbs().maxCoeff() == 0.0);
    CHECK((a.u[1] - b.u[1]).cwiseAbs().maxCoeff() == 0.0);
    CHECK(a.words == b.words);
  }
  SUBCASE("noise separates intra from inter concept similarity") {
    SynthConfig cfg = two_lang_config();
    cfg.concepts = 500;
    cfg.dim = 24;
    cfg.languages = {{"aa", 0.05}, {"bb", 0.05}};
    SynthWorld w = gen_world(cfg);
    // map language b into a with the known rotations
    Matrix rel = w.q[0] * w.q[1].transpose();
    Matrix ub_in_a = w.u[1] * rel.transpose();
    double intra = 0.0;
    for (int c = 0; c < cfg.concepts; ++c) {
      intra += w.u[0].row(c).dot(ub_in_a.row(c)) /
               (w.u[0].row(c).norm() * ub_in_a.row(c).norm());
    }
    intra /= cfg.concepts;
    double inter = 0.0;
    int inter_n = 0;
    Rng rng(5);
    for (int t = 0; t < 2000; ++t) {
      int i = static_cast<int>(rng.uniform_int(500));
      int j = static_cast<int>(rng.uniform_int(500));
      if (i == j) continue;
      inter += w.u[0].row(i).dot(ub_in_a.row(j)) /
               (w.u[0].row(i).norm() * ub_in_a.row(j).norm());
      ++inter_n;
    }
    inter /= inter_n;
    CHECK(intra > inter);
    CHECK(intra > 0.9);  // 5% noise barely moves unit vectors
  }
  SUBCASE("gold dictionary is the concept-sharing cross product") {
    SynthConfig cfg = two_lang_config();
    cfg.concepts = 5;
    cfg.synonyms = 2;
    SynthWorld w = gen_world(cfg);
    Dictionary d = w.gold_dictionary(0, 1);
    // concepts 0,1 have 2 words each side (4 pairs); concepts 2..4 one pair
    CHECK(d.size() == 2 * 4 + 3 * 1);
    for (const auto& [a, b] : d.pairs) {
      CHECK(a.substr(0, 2) == "aa");
      CHECK(b.substr(0, 2) == "bb");
    }
  }
}

TEST_CASE("gen_paragraphs") {
  SUBCASE("tiny temperature degenerates to the argmax word per sentence") {
    SynthConfig cfg = two_lang_config();
    cfg.temperature = 1e-6;
    cfg.sentences = 40;
    SynthWorld w = gen_world(cfg);
    auto paras = gen_paragraphs(w, 0);
    for (const auto& p : paras)
      for (const auto& s : p) {
        for (const auto& tok : s) CHECK(tok == s[0]);  // one word repeated
      }
  }
  SUBCASE("injected short sentences are exactly the ones filtering removes") {
    SynthConfig cfg = two_lang_config();
    cfg.short_fraction = 0.3;
    cfg.sentences = 300;
    SynthWorld w = gen_world(cfg);
    auto paras = gen_paragraphs(w, 0);
    int raw_sentences = 0, short_sentences = 0;
    for (const auto& p : paras)
      for (const auto& s : p) {
        ++raw_sentences;
        if (static_cast<int>(s.size()) < cfg.min_sentence_len) ++short_sentences;
      }
    REQUIRE(short_sentences > 10);
    Corpus c = corpus_from_paragraphs(paras, cfg.min_sentence_len);
    for (const auto& p : c.paragraphs)
      for (const auto& s : p)
        CHECK(static_cast<int>(s.size()) >= cfg.min_sentence_len);
    // every retained sentence count consistent with the two rules
    int kept = 0;
    for (const auto& p : paras) {
      int long_in_p = 0;
      for (const auto& s : p)
        if (static_cast<int>(s.size()) >= cfg.min_sentence_len) ++long_in_p;
      if (long_in_p >= 2) kept += long_in_p;
    }
    CHECK(static_cast<int>(c.sentence_count()) == kept);
  }
  SUBCASE("synonym words occur at statistically equal rates") {
    // identical ideal vectors -> identical sampling probability; a 4 sigma
    // binomial band on 100k tokens is the analytic oracle
    SynthConfig cfg = two_lang_config();
    cfg.concepts = 30;
    cfg.synonyms = 10;
    cfg.sentences = 9000;
    cfg.temperature = 0.5;
    SynthWorld w = gen_world(cfg);
    auto paras = gen_paragraphs(w, 0);
    std::map<std::string, long long> counts;
    long long total = 0;
    for (const auto& p : paras)
      for (const auto& s : p)
        for (const auto& tok : s) {
          ++counts[tok];
          ++total;
        }
    REQUIRE(total > 70000);
    for (int s = 0; s < cfg.synonyms; ++s) {
      long long n1 = counts[w.words[0][static_cast<size_t>(s)]];
      long long n2 = counts[w.words[0][static_cast<size_t>(cfg.concepts + s)]];
      double n = static_cast<double>(n1 + n2);
      REQUIRE(n > 100);
      double sigma = std::sqrt(n * 0.25);
      CHECK(std::abs(static_cast<double>(n1) - n / 2) < 4 * sigma);
    }
  }
  SUBCASE("word_distribution sums to one and concentrates as tau shrinks") {
    SynthWorld w = gen_world(two_lang_config());
    Vector topic = w.q[0] * w.z.row(7).transpose();
    Vector p = word_distribution(w, 0, topic, 0.5);
    CHECK(std::abs(p.sum() - 1.0) < 1e-12);
    Vector sharp = word_distribution(w, 0, topic, 1e-4);
    CHECK(sharp.maxCoeff() > 0.999);
    Eigen::Index argmax;
    sharp.maxCoeff(&argmax);
    CHECK(argmax == 7);
  }
}

TEST_CASE("gen_parallel") {
  SynthConfig cfg = two_lang_config();
  SynthWorld w = gen_world(cfg);

  SUBCASE("same language on both sides renders identical sentences") {
    std::vector<Sentence> a, b;
    gen_parallel(w, 0, 0, 25, &a, &b);
    CHECK(a == b);
  }
  SUBCASE("pairs share token counts and concept sequences round trip") {
    std::vector<Sentence> a, b;
    gen_parallel(w, 0, 1, 25, &a, &b);
    REQUIRE(a.size() == 25);
    std::map<std::string, int> concept_a, concept_b;
    for (int i = 0; i < w.n_words(); ++i) {
      concept_a[w.words[0][static_cast<size_t>(i)]] = w.concept_of[static_cast<size_t>(i)];
      concept_b[w.words[1][static_cast<size_t>(i)]] = w.concept_of[static_cast<size_t>(i)];
    }
    for (size_t i = 0; i < a.size(); ++i) {
      REQUIRE(a[i].size() == b[i].size());
      for (size_t t = 0; t < a[i].size(); ++t)
        CHECK(concept_a.at(a[i][t]) == concept_b.at(b[i][t]));
    }
  }
  SUBCASE("deterministic across calls") {
    std::vector<Sentence> a1, b1, a2, b2;
    gen_parallel(w, 0, 1, 10, &a1, &b1);
    gen_parallel(w, 0, 1, 10, &a2, &b2);
    CHECK(a1 == a2);
    CHECK(b1 == b2);
  }
}
