#pragma once

#include <mutex>
#include <string>
#include <unordered_map>
#include <vector>

#include "xsalign/common.hpp"
#include "xsalign/corpus.hpp"

namespace xsalign {

// Byte-pair tokenizer over UTF-8 code points. Segmentation applies the
// learned merges in training order; concatenating a word's pieces recovers
// the word (no boundary marker), and characters unseen at training time map
// to UNK.
class SubwordTokenizer {
 public:
  static constexpr int kPad = 0;
  static constexpr int kUnk = 1;
  static constexpr int kBos = 2;
  static constexpr int kEos = 3;
  static constexpr int kMask = 4;
  static constexpr int kNumSpecials = 5;

  SubwordTokenizer() = default;
  SubwordTokenizer(std::vector<std::string> vocab,
                   std::vector<std::pair<std::string, std::string>> merges);
  // the mutex is not copyable; the segmentation cache starts empty in copies
  SubwordTokenizer(const SubwordTokenizer& o)
      : vocab_(o.vocab_),
        piece_id_(o.piece_id_),
        merges_(o.merges_),
        merge_rank_(o.merge_rank_) {}
  SubwordTokenizer& operator=(const SubwordTokenizer& o) {
    if (this != &o) {
      vocab_ = o.vocab_;
      piece_id_ = o.piece_id_;
      merges_ = o.merges_;
      merge_rank_ = o.merge_rank_;
      cache_.clear();
    }
    return *this;
  }
  SubwordTokenizer(SubwordTokenizer&& o) noexcept
      : vocab_(std::move(o.vocab_)),
        piece_id_(std::move(o.piece_id_)),
        merges_(std::move(o.merges_)),
        merge_rank_(std::move(o.merge_rank_)) {}
  SubwordTokenizer& operator=(SubwordTokenizer&& o) noexcept {
    if (this != &o) {
      vocab_ = std::move(o.vocab_);
      piece_id_ = std::move(o.piece_id_);
      merges_ = std::move(o.merges_);
      merge_rank_ = std::move(o.merge_rank_);
      cache_.clear();
    }
    return *this;
  }

  int vocab_size() const { return static_cast<int>(vocab_.size()); }
  const std::string& piece(int id) const { return vocab_[static_cast<size_t>(id)]; }
  const std::vector<std::string>& vocab() const { return vocab_; }
  const std::vector<std::pair<std::string, std::string>>& merges() const { return merges_; }

  // BOS/EOS/PAD/MASK; UNK is a content position (maskable, poolable).
  static bool is_special(int id) {
    return id == kPad || id == kBos || id == kEos || id == kMask;
  }

  std::vector<int> segment_word(const std::string& word) const;
  // "<piece><piece>..." of a segmentation; UNK renders as its piece string.
  std::string detokenize(const std::vector<int>& ids) const;

  // BOS <subwords...> EOS. word_spans (optional) receives the [begin, end)
  // subword position range of each input word.
  std::vector<int> encode_sentence(const std::vector<std::string>& words,
                                   std::vector<std::pair<int, int>>* word_spans) const;

  void save(const std::string& path) const;
  static SubwordTokenizer load(const std::string& path);

 private:
  std::vector<int> segment_uncached(const std::string& word) const;

  std::vector<std::string> vocab_;
  std::unordered_map<std::string, int> piece_id_;
  std::vector<std::pair<std::string, std::string>> merges_;
  std::unordered_map<std::string, int> merge_rank_;  // "a\x01b" -> rank

  mutable std::mutex cache_mu_;
  mutable std::unordered_map<std::string, std::vector<int>> cache_;
};

// Learns merges by greedy pair-frequency counting over the corpus vocabulary.
// vocab_size must exceed the special count plus the distinct characters.
SubwordTokenizer train_tokenizer(const Corpus& corpus, int vocab_size);

}  // namespace xsalign
