#include "doctest.h"

#include <cmath>

#include "test_helpers.hpp"
#include "xsalign/embedding.hpp"
#include "xsalign/rng.hpp"
#include "xsalign/util.hpp"

using namespace xsalign;

static EmbeddingSpace random_space(int n, int d, uint64_t seed) {
  Rng rng(seed);
  std::vector<std::string> words;
  Matrix m(n, d);
  for (int i = 0; i < n; ++i) {
    words.push_back("w" + std::to_string(i));
    for (int j = 0; j < d; ++j) m(i, j) = rng.gaussian();
  }
  return EmbeddingSpace::create(std::move(words), std::move(m));
}

TEST_CASE("read_space parses the header + rows format") {
  TempDir tmp;
  write_file(tmp.file("s.vec"), "2 2\na 1.0 0.0\nb 0.0 1.0\n");
  EmbeddingSpace s = read_space(tmp.file("s.vec"));
  CHECK(s.words == std::vector<std::string>{"a", "b"});
  CHECK(s.matrix(0, 0) == 1.0);
  CHECK(s.matrix(0, 1) == 0.0);
  CHECK(s.matrix(1, 0) == 0.0);
  CHECK(s.matrix(1, 1) == 1.0);
  CHECK(s.find("b") == 1);
  CHECK(s.find("missing") == -1);
}

TEST_CASE("read_space reports malformed input with line numbers") {
  TempDir tmp;
  SUBCASE("row shorter than declared dim") {
    write_file(tmp.file("s.vec"), "1 2\na 1.0\n");
    CHECK_THROWS_WITH_AS(read_space(tmp.file("s.vec")),
                         doctest::Contains("line 2"), Error);
  }
  SUBCASE("malformed header") {
    write_file(tmp.file("s.vec"), "2\na 1.0\n");
    CHECK_THROWS_AS(read_space(tmp.file("s.vec")), Error);
  }
  SUBCASE("duplicate word") {
    write_file(tmp.file("s.vec"), "2 1\na 1.0\na 2.0\n");
    CHECK_THROWS_WITH_AS(read_space(tmp.file("s.vec")),
                         doctest::Contains("duplicate word 'a'"), Error);
  }
  SUBCASE("non-finite value") {
    write_file(tmp.file("s.vec"), "1 2\na 1.0 nan\n");
    CHECK_THROWS_AS(read_space(tmp.file("s.vec")), Error);
    write_file(tmp.file("s2.vec"), "1 2\na inf 0.0\n");
    CHECK_THROWS_AS(read_space(tmp.file("s2.vec")), Error);
  }
  SUBCASE("missing rows") {
    write_file(tmp.file("s.vec"), "3 1\na 1.0\n");
    CHECK_THROWS_AS(read_space(tmp.file("s.vec")), Error);
  }
  SUBCASE("extra content after declared rows") {
    write_file(tmp.file("s.vec"), "1 1\na 1.0\nb 2.0\n");
    CHECK_THROWS_AS(read_space(tmp.file("s.vec")), Error);
  }
  SUBCASE("missing file") {
    CHECK_THROWS_AS(read_space(tmp.file("nope.vec")), Error);
  }
}

TEST_CASE("write_space emits the exact format read_space parses") {
  TempDir tmp;
  std::vector<std::string> words{"a", "b"};
  Matrix m(2, 2);
  m << 1, 0, 0, 1;
  EmbeddingSpace s = EmbeddingSpace::create(words, m);
  write_space(s, tmp.file("id.vec"));
  std::string content;
  for (const auto& line : read_lines(tmp.file("id.vec"))) content += line + "\n";
  CHECK(content == "2 2\na 1 0\nb 0 1\n");
}

TEST_CASE("write_space refuses an empty space") {
  TempDir tmp;
  EmbeddingSpace s;
  s.matrix.resize(0, 3);
  CHECK_THROWS_AS(write_space(s, tmp.file("e.vec")), Error);
}

TEST_CASE("read/write round trip preserves order and values to text precision") {
  TempDir tmp;
  SUBCASE("100x50") {
    EmbeddingSpace s = random_space(100, 50, 7);
    write_space(s, tmp.file("r.vec"));
    EmbeddingSpace back = read_space(tmp.file("r.vec"));
    REQUIRE(back.words == s.words);
    CHECK(((back.matrix - s.matrix).array().abs() /
           s.matrix.array().abs().max(1.0))
              .maxCoeff() < 1e-5);
  }
  SUBCASE("1000x300") {
    EmbeddingSpace s = random_space(1000, 300, 11);
    write_space(s, tmp.file("big.vec"));
    EmbeddingSpace back = read_space(tmp.file("big.vec"));
    REQUIRE(back.words == s.words);
    CHECK(((back.matrix - s.matrix).array().abs() /
           s.matrix.array().abs().max(1.0))
              .maxCoeff() < 1e-5);
  }
}

TEST_CASE("unit_normalize") {
  std::vector<std::string> words{"a", "b"};
  Matrix m(2, 2);
  m << 3, 4, 1, 0;
  EmbeddingSpace s = EmbeddingSpace::create(words, m);

  EmbeddingSpace n = unit_normalize(s);
  CHECK(n.matrix(0, 0) == doctest::Approx(0.6).epsilon(1e-12));
  CHECK(n.matrix(0, 1) == doctest::Approx(0.8).epsilon(1e-12));

  SUBCASE("idempotent") {
    EmbeddingSpace n2 = unit_normalize(n);
    CHECK((n2.matrix - n.matrix).cwiseAbs().maxCoeff() < 1e-9);
  }
  SUBCASE("all rows unit on a seeded space") {
    EmbeddingSpace r = unit_normalize(random_space(50, 10, 3));
    for (int i = 0; i < r.size(); ++i)
      CHECK(std::abs(r.matrix.row(i).norm() - 1.0) < 1e-9);
  }
  SUBCASE("zero row names the word") {
    Matrix z(2, 2);
    z << 1, 1, 0, 0;
    EmbeddingSpace bad = EmbeddingSpace::create({"ok", "dead"}, z);
    CHECK_THROWS_WITH_AS(unit_normalize(bad), doctest::Contains("dead"), Error);
  }
}

TEST_CASE("mean_center") {
  std::vector<std::string> words{"a", "b"};
  Matrix m(2, 2);
  m << 1, 0, 3, 0;
  EmbeddingSpace c = mean_center(EmbeddingSpace::create(words, m));
  CHECK(c.matrix(0, 0) == doctest::Approx(-1.0));
  CHECK(c.matrix(1, 0) == doctest::Approx(1.0));
  CHECK(c.matrix(0, 1) == doctest::Approx(0.0));

  SUBCASE("idempotent / zero column means on a seeded space") {
    EmbeddingSpace r = mean_center(random_space(100, 20, 5));
    CHECK(r.matrix.colwise().mean().cwiseAbs().maxCoeff() < 1e-9);
    EmbeddingSpace r2 = mean_center(r);
    CHECK((r2.matrix - r.matrix).cwiseAbs().maxCoeff() < 1e-9);
  }
  SUBCASE("single row is an error") {
    Matrix one(1, 2);
    one << 1, 2;
    CHECK_THROWS_AS(mean_center(EmbeddingSpace::create({"a"}, one)), Error);
  }
}
