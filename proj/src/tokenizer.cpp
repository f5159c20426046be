#include "xsalign/tokenizer.hpp"

#include <algorithm>
#include <map>
#include <set>

#include "xsalign/util.hpp"

namespace xsalign {

static const char* kSpecialNames[SubwordTokenizer::kNumSpecials] = {
    "<pad>", "<unk>", "<s>", "</s>", "<mask>"};

static std::string pair_key(const std::string& a, const std::string& b) {
  return a + '\x01' + b;
}

SubwordTokenizer::SubwordTokenizer(std::vector<std::string> vocab,
                                   std::vector<std::pair<std::string, std::string>> merges)
    : vocab_(std::move(vocab)), merges_(std::move(merges)) {
  if (vocab_.size() < kNumSpecials) fail("tokenizer: vocab missing special tokens");
  for (int i = 0; i < kNumSpecials; ++i)
    if (vocab_[static_cast<size_t>(i)] != kSpecialNames[i])
      fail("tokenizer: special token mismatch at id " + std::to_string(i));
  piece_id_.reserve(vocab_.size());
  for (size_t i = 0; i < vocab_.size(); ++i) {
    auto [it, inserted] = piece_id_.emplace(vocab_[i], static_cast<int>(i));
    if (!inserted) fail("tokenizer: duplicate piece '" + vocab_[i] + "'");
  }
  merge_rank_.reserve(merges_.size());
  for (size_t r = 0; r < merges_.size(); ++r) {
    const auto& [a, b] = merges_[r];
    if (!piece_id_.count(a + b))
      fail("tokenizer: merge result '" + a + b + "' missing from vocab");
    merge_rank_.emplace(pair_key(a, b), static_cast<int>(r));
  }
}

std::vector<int> SubwordTokenizer::segment_uncached(const std::string& word) const {
  std::vector<std::string> symbols = utf8_codepoints(word);
  if (symbols.empty()) fail("tokenizer: cannot segment empty word");

  // repeatedly apply the earliest-learned merge present in the word
  for (;;) {
    int best_rank = -1;
    for (size_t i = 0; i + 1 < symbols.size(); ++i) {
      auto it = merge_rank_.find(pair_key(symbols[i], symbols[i + 1]));
      if (it != merge_rank_.end() && (best_rank < 0 || it->second < best_rank))
        best_rank = it->second;
    }
    if (best_rank < 0) break;
    const auto& [a, b] = merges_[static_cast<size_t>(best_rank)];
    std::vector<std::string> next;
    next.reserve(symbols.size());
    for (size_t i = 0; i < symbols.size();) {
      if (i + 1 < symbols.size() && symbols[i] == a && symbols[i + 1] == b) {
        next.push_back(a + b);
        i += 2;
      } else {
        next.push_back(symbols[i]);
        i += 1;
      }
    }
    symbols = std::move(next);
  }

  std::vector<int> ids;
  ids.reserve(symbols.size());
  for (const auto& s : symbols) {
    auto it = piece_id_.find(s);
    ids.push_back(it == piece_id_.end() ? kUnk : it->second);
  }
  return ids;
}

std::vector<int> SubwordTokenizer::segment_word(const std::string& word) const {
  {
    std::lock_guard<std::mutex> lock(cache_mu_);
    auto it = cache_.find(word);
    if (it != cache_.end()) return it->second;
  }
  std::vector<int> ids = segment_uncached(word);
  {
    std::lock_guard<std::mutex> lock(cache_mu_);
    cache_.emplace(word, ids);
  }
  return ids;
}

std::string SubwordTokenizer::detokenize(const std::vector<int>& ids) const {
  std::string out;
  for (int id : ids) {
    if (id < 0 || id >= vocab_size()) fail("tokenizer: id out of range");
    out += vocab_[static_cast<size_t>(id)];
  }
  return out;
}

std::vector<int> SubwordTokenizer::encode_sentence(
    const std::vector<std::string>& words,
    std::vector<std::pair<int, int>>* word_spans) const {
  std::vector<int> ids;
  ids.push_back(kBos);
  if (word_spans) word_spans->clear();
  for (const auto& w : words) {
    std::vector<int> sub = segment_word(w);
    int begin = static_cast<int>(ids.size());
    ids.insert(ids.end(), sub.begin(), sub.end());
    if (word_spans) word_spans->emplace_back(begin, static_cast<int>(ids.size()));
  }
  ids.push_back(kEos);
  return ids;
}

void SubwordTokenizer::save(const std::string& path) const {
  std::string out = "xsalign-bpe 1\n";
  out += "vocab " + std::to_string(vocab_.size()) + "\n";
  for (const auto& p : vocab_) out += p + "\n";
  out += "merges " + std::to_string(merges_.size()) + "\n";
  for (const auto& [a, b] : merges_) out += a + " " + b + "\n";
  write_file(path, out);
}

SubwordTokenizer SubwordTokenizer::load(const std::string& path) {
  std::vector<std::string> lines = read_lines(path);
  size_t at = 0;
  auto next = [&]() -> const std::string& {
    if (at >= lines.size()) fail(path + ": truncated tokenizer file");
    return lines[at++];
  };
  if (next() != "xsalign-bpe 1") fail(path + ": not a tokenizer file");
  auto vocab_hdr = split_char(next(), ' ');
  if (vocab_hdr.size() != 2 || vocab_hdr[0] != "vocab") fail(path + ": bad vocab header");
  long long n = parse_int(vocab_hdr[1], path + " vocab count");
  std::vector<std::string> vocab;
  vocab.reserve(static_cast<size_t>(n));
  for (long long i = 0; i < n; ++i) vocab.push_back(next());
  auto merge_hdr = split_char(next(), ' ');
  if (merge_hdr.size() != 2 || merge_hdr[0] != "merges") fail(path + ": bad merges header");
  long long m = parse_int(merge_hdr[1], path + " merge count");
  std::vector<std::pair<std::string, std::string>> merges;
  merges.reserve(static_cast<size_t>(m));
  for (long long i = 0; i < m; ++i) {
    auto fields = split_char(next(), ' ');
    if (fields.size() != 2) fail(path + ": bad merge line");
    merges.emplace_back(std::string(fields[0]), std::string(fields[1]));
  }
  return SubwordTokenizer(std::move(vocab), std::move(merges));
}

SubwordTokenizer train_tokenizer(const Corpus& corpus, int vocab_size) {
  if (corpus.freq.empty()) fail("train_tokenizer: empty corpus");

  // word -> symbol sequence, weighted by corpus frequency
  std::vector<std::pair<std::vector<std::string>, uint64_t>> words;
  std::set<std::string> alphabet;
  {
    // sort for deterministic processing order
    std::vector<std::pair<std::string, uint64_t>> sorted(corpus.freq.begin(),
                                                         corpus.freq.end());
    std::sort(sorted.begin(), sorted.end());
    words.reserve(sorted.size());
    for (const auto& [word, count] : sorted) {
      auto cps = utf8_codepoints(word);
      for (const auto& c : cps) alphabet.insert(c);
      words.emplace_back(std::move(cps), count);
    }
  }

  std::vector<std::string> vocab;
  for (const char* s : kSpecialNames) vocab.emplace_back(s);
  for (const auto& c : alphabet) vocab.push_back(c);
  if (vocab_size <= static_cast<int>(vocab.size()))
    fail("train_tokenizer: vocab_size " + std::to_string(vocab_size) +
         " too small, need > " + std::to_string(vocab.size()) +
         " (specials + distinct characters)");

  std::vector<std::pair<std::string, std::string>> merges;
  while (static_cast<int>(vocab.size()) < vocab_size) {
    std::map<std::pair<std::string, std::string>, uint64_t> counts;
    for (const auto& [symbols, weight] : words)
      for (size_t i = 0; i + 1 < symbols.size(); ++i)
        counts[{symbols[i], symbols[i + 1]}] += weight;
    if (counts.empty()) break;  // nothing left to merge

    // highest count; ties go to the lexicographically smallest pair
    auto best = counts.begin();
    for (auto it = counts.begin(); it != counts.end(); ++it)
      if (it->second > best->second) best = it;
    const auto& [a, b] = best->first;

    merges.emplace_back(a, b);
    vocab.push_back(a + b);
    for (auto& [symbols, weight] : words) {
      std::vector<std::string> next;
      next.reserve(symbols.size());
      for (size_t i = 0; i < symbols.size();) {
        if (i + 1 < symbols.size() && symbols[i] == a && symbols[i + 1] == b) {
          next.push_back(a + b);
          i += 2;
        } else {
          next.push_back(symbols[i]);
          i += 1;
        }
      }
      symbols = std::move(next);
    }
  }

  return SubwordTokenizer(std::move(vocab), std::move(merges));
}

}  // namespace xsalign
