#include "xsalign/corpus.hpp"

#include <algorithm>
#include <cmath>

#include "xsalign/util.hpp"

namespace xsalign {

size_t Corpus::sentence_count() const {
  size_t n = 0;
  for (const auto& p : paragraphs) n += p.size();
  return n;
}

std::vector<const Sentence*> Corpus::sentences() const {
  std::vector<const Sentence*> out;
  out.reserve(sentence_count());
  for (const auto& p : paragraphs)
    for (const auto& s : p) out.push_back(&s);
  return out;
}

Corpus corpus_from_paragraphs(std::vector<Paragraph> raw, int min_tokens) {
  Corpus corpus;
  corpus.min_tokens = min_tokens;
  for (auto& para : raw) {
    Paragraph kept;
    for (auto& sent : para)
      if (static_cast<int>(sent.size()) >= min_tokens) kept.push_back(std::move(sent));
    if (kept.size() >= 2) corpus.paragraphs.push_back(std::move(kept));
  }
  for (const auto& para : corpus.paragraphs) {
    for (const auto& sent : para) {
      for (const auto& tok : sent) ++corpus.freq[tok];
      corpus.total_tokens += sent.size();
    }
  }
  return corpus;
}

Corpus load_corpus(const std::string& path, int min_tokens) {
  std::vector<std::string> lines = read_lines(path);
  std::vector<Paragraph> raw;
  Paragraph current;
  for (const std::string& line : lines) {
    auto tokens = split_spaces(line);
    if (tokens.empty()) {
      if (!current.empty()) raw.push_back(std::move(current));
      current = {};
      continue;
    }
    Sentence sent;
    sent.reserve(tokens.size());
    for (auto t : tokens) sent.emplace_back(t);
    current.push_back(std::move(sent));
  }
  if (!current.empty()) raw.push_back(std::move(current));

  Corpus corpus = corpus_from_paragraphs(std::move(raw), min_tokens);
  if (corpus.paragraphs.empty())
    fail(path + ": corpus empty after filtering (min " + std::to_string(min_tokens) +
         " tokens per sentence, 2 sentences per paragraph)");
  return corpus;
}

void write_corpus(const Corpus& corpus, const std::string& path) {
  std::string out;
  bool first = true;
  for (const auto& para : corpus.paragraphs) {
    if (!first) out += '\n';
    first = false;
    for (const auto& sent : para) {
      for (size_t i = 0; i < sent.size(); ++i) {
        if (i) out += ' ';
        out += sent[i];
      }
      out += '\n';
    }
  }
  write_file(path, out);
}

std::vector<std::string> build_vocab(const Corpus& corpus, int min_count) {
  std::vector<std::pair<std::string, uint64_t>> entries;
  for (const auto& [word, count] : corpus.freq)
    if (count >= static_cast<uint64_t>(min_count)) entries.emplace_back(word, count);
  if (entries.empty())
    fail("build_vocab: no word reaches min_count " + std::to_string(min_count));
  std::sort(entries.begin(), entries.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });
  std::vector<std::string> vocab;
  vocab.reserve(entries.size());
  for (auto& [word, count] : entries) vocab.push_back(std::move(word));
  return vocab;
}

int NegativeTable::sample(Rng& rng) const {
  double u = rng.uniform();
  auto it = std::upper_bound(cdf.begin(), cdf.end(), u);
  if (it == cdf.end()) --it;
  return static_cast<int>(it - cdf.begin());
}

NegativeTable build_negative_table(const std::unordered_map<std::string, uint64_t>& freq,
                                   const std::vector<std::string>& vocab,
                                   double exponent) {
  if (vocab.empty()) fail("build_negative_table: empty vocabulary");
  NegativeTable table;
  table.words = vocab;
  table.cdf.resize(vocab.size());
  double total = 0.0;
  for (size_t i = 0; i < vocab.size(); ++i) {
    auto it = freq.find(vocab[i]);
    if (it == freq.end() || it->second == 0)
      fail("build_negative_table: word '" + vocab[i] + "' has no positive frequency");
    total += std::pow(static_cast<double>(it->second), exponent);
    table.cdf[i] = total;
  }
  for (double& c : table.cdf) c /= total;
  table.cdf.back() = 1.0;
  return table;
}

std::vector<int> sample_negatives(const NegativeTable& table, int k,
                                  const std::string& forbidden, Rng& rng) {
  if (k < 1) fail("sample_negatives: k must be >= 1");
  if (table.words.empty()) fail("sample_negatives: empty table");
  if (table.words.size() == 1 && table.words[0] == forbidden)
    fail("sample_negatives: vocabulary contains only the forbidden word");
  std::vector<int> out;
  out.reserve(static_cast<size_t>(k));
  while (static_cast<int>(out.size()) < k) {
    int idx = table.sample(rng);
    if (table.words[static_cast<size_t>(idx)] == forbidden) continue;
    out.push_back(idx);
  }
  return out;
}

}  // namespace xsalign
