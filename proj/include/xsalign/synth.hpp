#pragma once

#include <string>
#include <vector>

#include "xsalign/common.hpp"
#include "xsalign/corpus.hpp"
#include "xsalign/dictionary.hpp"
#include "xsalign/embedding.hpp"
#include "xsalign/rng.hpp"

namespace xsalign {

// Synthetic multilingual world: shared latent concepts, one orthogonal
// transform and noise level per language. Every pipeline stage gets a
// ground-truth target from it.
struct SynthLanguageConfig {
  std::string name;
  double sigma = 0.0;  // noise norm relative to the unit concept vectors
};

struct SynthConfig {
  int concepts = 100;
  int dim = 16;
  std::vector<SynthLanguageConfig> languages;
  int sentences = 500;  // per language (approximate; whole paragraphs)
  int min_sentence_len = 7;
  int max_sentence_len = 12;
  int para_min = 2;
  int para_max = 5;
  double temperature = 0.5;
  int topic_min = 2;  // concepts mixed into a sentence topic
  int topic_max = 4;
  double short_fraction = 0.0;  // injected sub-minimum sentences (filter fodder)
  int synonyms = 0;  // extra words duplicating the first N concepts
  uint64_t seed = 1;

  void validate() const;
};

struct SynthWorld {
  SynthConfig cfg;
  Matrix z;                                      // concepts x dim, unit rows
  std::vector<Matrix> q;                         // per language, orthogonal dim x dim
  std::vector<std::vector<std::string>> words;   // per language, one per word id
  std::vector<Matrix> u;                         // per language, ideal vectors per word
  std::vector<int> concept_of;                   // word id -> concept

  int n_words() const { return cfg.concepts + cfg.synonyms; }
  int language(const std::string& name) const;
  EmbeddingSpace ideal_space(int lang) const;
  // all (src word, tgt word) pairs sharing a concept; multi-translation when
  // synonyms exist
  Dictionary gold_dictionary(int lang_a, int lang_b) const;
};

SynthWorld gen_world(const SynthConfig& config);

// Raw paragraphs including injected too-short sentences; feed through
// corpus_from_paragraphs / load_corpus for the filtered view.
std::vector<Paragraph> gen_paragraphs(const SynthWorld& world, int lang);

// n sentence pairs sharing concept sequences, rendered word-for-word.
void gen_parallel(const SynthWorld& world, int lang_a, int lang_b, int n,
                  std::vector<Sentence>* out_a, std::vector<Sentence>* out_b);

// P(word | topic) the sentence sampler draws from: softmax(u . topic / tau).
Vector word_distribution(const SynthWorld& world, int lang, const Vector& topic_lang,
                         double tau);

}  // namespace xsalign
