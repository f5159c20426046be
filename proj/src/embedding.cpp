#include "xsalign/embedding.hpp"

#include <cmath>
#include <fstream>

#include "xsalign/util.hpp"

namespace xsalign {

EmbeddingSpace EmbeddingSpace::create(std::vector<std::string> words, Matrix matrix) {
  if (static_cast<Eigen::Index>(words.size()) != matrix.rows())
    fail("embedding space: " + std::to_string(words.size()) + " words but " +
         std::to_string(matrix.rows()) + " matrix rows");
  if (matrix.cols() <= 0) fail("embedding space: dim must be positive");
  if (!matrix.allFinite()) fail("embedding space: non-finite entry");
  EmbeddingSpace s;
  s.words = std::move(words);
  s.matrix = std::move(matrix);
  s.index.reserve(s.words.size());
  for (size_t i = 0; i < s.words.size(); ++i) {
    if (s.words[i].empty()) fail("embedding space: empty word at row " + std::to_string(i));
    auto [it, inserted] = s.index.emplace(s.words[i], static_cast<int>(i));
    if (!inserted) fail("embedding space: duplicate word '" + s.words[i] + "'");
  }
  return s;
}

EmbeddingSpace read_space(const std::string& path) {
  std::vector<std::string> lines = read_lines(path);
  auto where = [&path](size_t lineno) {
    return path + ": line " + std::to_string(lineno + 1);
  };
  if (lines.empty()) fail(path + ": empty file, expected '<count> <dim>' header");

  auto header = split_char(lines[0], ' ');
  if (header.size() != 2) fail(where(0) + ": malformed header, expected '<count> <dim>'");
  long long count = parse_int(header[0], where(0) + " count");
  long long dim = parse_int(header[1], where(0) + " dim");
  if (count < 0) fail(where(0) + ": negative count");
  if (dim <= 0) fail(where(0) + ": dim must be positive");

  std::vector<std::string> words;
  words.reserve(static_cast<size_t>(count));
  Matrix m(count, dim);
  for (long long r = 0; r < count; ++r) {
    size_t lineno = static_cast<size_t>(r) + 1;
    if (lineno >= lines.size())
      fail(path + ": header declares " + std::to_string(count) + " rows, file has " +
           std::to_string(r));
    auto fields = split_char(lines[lineno], ' ');
    if (static_cast<long long>(fields.size()) != dim + 1)
      fail(where(lineno) + ": row has " + std::to_string(fields.size() - 1) +
           " values, header declares dim " + std::to_string(dim));
    if (fields[0].empty()) fail(where(lineno) + ": empty word");
    words.emplace_back(fields[0]);
    for (long long c = 0; c < dim; ++c)
      m(r, c) = parse_double(fields[static_cast<size_t>(c) + 1], where(lineno));
  }
  for (size_t lineno = static_cast<size_t>(count) + 1; lineno < lines.size(); ++lineno)
    if (!lines[lineno].empty()) fail(where(lineno) + ": unexpected extra content");

  try {
    return EmbeddingSpace::create(std::move(words), std::move(m));
  } catch (const Error& e) {
    fail(path + ": " + e.what());
  }
}

void write_space(const EmbeddingSpace& space, const std::string& path) {
  if (space.size() == 0) fail("write_space: refusing to write empty space");
  std::string out;
  out.reserve(static_cast<size_t>(space.size()) * (static_cast<size_t>(space.dim()) * 9 + 16));
  out += std::to_string(space.size());
  out += ' ';
  out += std::to_string(space.dim());
  out += '\n';
  for (int r = 0; r < space.size(); ++r) {
    out += space.words[static_cast<size_t>(r)];
    for (int c = 0; c < space.dim(); ++c) {
      out += ' ';
      out += format_double(space.matrix(r, c), 6);
    }
    out += '\n';
  }
  write_file(path, out);
}

EmbeddingSpace unit_normalize(const EmbeddingSpace& space) {
  Matrix m = space.matrix;
  for (int r = 0; r < space.size(); ++r) {
    double norm = m.row(r).norm();
    if (norm < 1e-12)
      fail("unit_normalize: zero row for word '" + space.words[static_cast<size_t>(r)] + "'");
    m.row(r) /= norm;
  }
  return EmbeddingSpace::create(space.words, std::move(m));
}

EmbeddingSpace mean_center(const EmbeddingSpace& space) {
  if (space.size() < 2) fail("mean_center: need at least 2 rows");
  Matrix m = space.matrix;
  Eigen::RowVectorXd mean = m.colwise().mean();
  m.rowwise() -= mean;
  return EmbeddingSpace::create(space.words, std::move(m));
}

}  // namespace xsalign
