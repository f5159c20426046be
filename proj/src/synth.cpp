#include "xsalign/synth.hpp"

#include <cmath>

#include "xsalign/util.hpp"

namespace xsalign {

void SynthConfig::validate() const {
  if (concepts < 2) fail("synth config: concepts must be >= 2");
  if (dim < 2) fail("synth config: dim must be >= 2");
  if (languages.size() < 1) fail("synth config: at least one language");
  for (const auto& l : languages) {
    if (l.name.empty()) fail("synth config: empty language name");
    if (l.sigma < 0) fail("synth config: sigma must be >= 0");
  }
  if (min_sentence_len < 7)
    fail("synth config: min_sentence_len must be >= 7 to survive filtering");
  if (max_sentence_len < min_sentence_len) fail("synth config: bad sentence length range");
  if (para_min < 2) fail("synth config: para_min must be >= 2");
  if (para_max < para_min) fail("synth config: bad paragraph range");
  if (temperature <= 0) fail("synth config: temperature must be positive");
  if (topic_min < 1 || topic_max < topic_min || topic_max > concepts)
    fail("synth config: bad topic range");
  if (short_fraction < 0 || short_fraction >= 1) fail("synth config: bad short_fraction");
  if (synonyms < 0 || synonyms > concepts) fail("synth config: bad synonym count");
  if (sentences < 1) fail("synth config: sentences must be >= 1");
}

int SynthWorld::language(const std::string& name) const {
  for (size_t i = 0; i < cfg.languages.size(); ++i)
    if (cfg.languages[i].name == name) return static_cast<int>(i);
  return -1;
}

EmbeddingSpace SynthWorld::ideal_space(int lang) const {
  return EmbeddingSpace::create(words[static_cast<size_t>(lang)],
                                u[static_cast<size_t>(lang)]);
}

Dictionary SynthWorld::gold_dictionary(int lang_a, int lang_b) const {
  Dictionary dict;
  const auto& wa = words[static_cast<size_t>(lang_a)];
  const auto& wb = words[static_cast<size_t>(lang_b)];
  for (int i = 0; i < n_words(); ++i)
    for (int j = 0; j < n_words(); ++j)
      if (concept_of[static_cast<size_t>(i)] == concept_of[static_cast<size_t>(j)])
        dict.pairs.emplace_back(wa[static_cast<size_t>(i)], wb[static_cast<size_t>(j)]);
  return dict;
}

static Matrix random_orthogonal(int d, Rng& rng) {
  Eigen::MatrixXd g(d, d);
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < d; ++j) g(i, j) = rng.gaussian();
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(g);
  Eigen::MatrixXd q = qr.householderQ();
  Eigen::MatrixXd r = qr.matrixQR().triangularView<Eigen::Upper>();
  for (int i = 0; i < d; ++i)
    if (r(i, i) < 0) q.col(i) *= -1;
  return q;
}

SynthWorld gen_world(const SynthConfig& config) {
  config.validate();
  SynthWorld world;
  world.cfg = config;

  Rng rng = Rng(config.seed).child("world");
  world.z.resize(config.concepts, config.dim);
  for (int c = 0; c < config.concepts; ++c) {
    for (int j = 0; j < config.dim; ++j) world.z(c, j) = rng.gaussian();
    world.z.row(c) /= world.z.row(c).norm();
  }

  const int nw = world.n_words();
  world.concept_of.resize(static_cast<size_t>(nw));
  for (int c = 0; c < config.concepts; ++c) world.concept_of[static_cast<size_t>(c)] = c;
  for (int s = 0; s < config.synonyms; ++s)
    world.concept_of[static_cast<size_t>(config.concepts + s)] = s;

  const double coord_sigma_scale = 1.0 / std::sqrt(static_cast<double>(config.dim));
  for (size_t l = 0; l < config.languages.size(); ++l) {
    Rng lrng = rng.child("lang:" + config.languages[l].name);
    world.q.push_back(random_orthogonal(config.dim, lrng));
    Matrix ul(nw, config.dim);
    std::vector<std::string> wl;
    wl.reserve(static_cast<size_t>(nw));
    const double sigma = config.languages[l].sigma * coord_sigma_scale;
    for (int w = 0; w < nw; ++w) {
      int c = world.concept_of[static_cast<size_t>(w)];
      ul.row(w) = world.z.row(c) * world.q.back().transpose();
      if (sigma > 0)
        for (int j = 0; j < config.dim; ++j) ul(w, j) += sigma * lrng.gaussian();
      wl.push_back(config.languages[l].name + "_w" + std::to_string(c) +
                   (w >= config.concepts ? "s" : ""));
    }
    world.u.push_back(std::move(ul));
    world.words.push_back(std::move(wl));
  }
  return world;
}

Vector word_distribution(const SynthWorld& world, int lang, const Vector& topic_lang,
                         double tau) {
  const Matrix& u = world.u[static_cast<size_t>(lang)];
  Vector scores = u * topic_lang / tau;
  double mx = scores.maxCoeff();
  Vector p = (scores.array() - mx).exp().matrix();
  return p / p.sum();
}

namespace {

// softmax sample over word scores u_w . t / tau, temperature-stable
int sample_word(const Matrix& u, const Vector& topic, double tau, Rng& rng) {
  Vector scores = u * topic / tau;
  double mx = scores.maxCoeff();
  Eigen::ArrayXd p = (scores.array() - mx).exp();
  double total = p.sum();
  double r = rng.uniform() * total;
  double acc = 0.0;
  for (Eigen::Index i = 0; i < p.size(); ++i) {
    acc += p(i);
    if (r < acc) return static_cast<int>(i);
  }
  return static_cast<int>(p.size()) - 1;
}

// weighted concept mixture; the uneven weights keep the limiting argmax
// unique as the temperature vanishes
Vector latent_topic(const SynthWorld& world, Rng& rng) {
  const SynthConfig& cfg = world.cfg;
  int n_topic = cfg.topic_min +
                static_cast<int>(rng.uniform_int(
                    static_cast<uint64_t>(cfg.topic_max - cfg.topic_min + 1)));
  Vector latent = Vector::Zero(cfg.dim);
  double total = 0.0;
  for (int i = 0; i < n_topic; ++i) {
    double weight = 0.5 + rng.uniform();
    latent += weight * world.z
                           .row(static_cast<Eigen::Index>(rng.uniform_int(
                               static_cast<uint64_t>(cfg.concepts))))
                           .transpose();
    total += weight;
  }
  return latent / total;
}

Vector sentence_topic(const SynthWorld& world, int lang, Rng& rng) {
  return world.q[static_cast<size_t>(lang)] * latent_topic(world, rng);
}

}  // namespace

std::vector<Paragraph> gen_paragraphs(const SynthWorld& world, int lang) {
  const SynthConfig& cfg = world.cfg;
  Rng rng = Rng(cfg.seed).child("corpus:" + cfg.languages[static_cast<size_t>(lang)].name);
  const Matrix& u = world.u[static_cast<size_t>(lang)];
  const auto& words = world.words[static_cast<size_t>(lang)];

  std::vector<Paragraph> out;
  int produced = 0;
  while (produced < cfg.sentences) {
    int para_len = cfg.para_min + static_cast<int>(rng.uniform_int(
                                      static_cast<uint64_t>(cfg.para_max - cfg.para_min + 1)));
    Paragraph para;
    for (int s = 0; s < para_len; ++s) {
      Vector topic = sentence_topic(world, lang, rng);
      int len;
      if (cfg.short_fraction > 0 && rng.uniform() < cfg.short_fraction) {
        len = 1 + static_cast<int>(rng.uniform_int(
                      static_cast<uint64_t>(cfg.min_sentence_len - 1)));
      } else {
        len = cfg.min_sentence_len +
              static_cast<int>(rng.uniform_int(static_cast<uint64_t>(
                  cfg.max_sentence_len - cfg.min_sentence_len + 1)));
      }
      Sentence sent;
      sent.reserve(static_cast<size_t>(len));
      for (int t = 0; t < len; ++t)
        sent.push_back(words[static_cast<size_t>(
            sample_word(u, topic, cfg.temperature, rng))]);
      para.push_back(std::move(sent));
      ++produced;
    }
    out.push_back(std::move(para));
  }
  return out;
}

void gen_parallel(const SynthWorld& world, int lang_a, int lang_b, int n,
                  std::vector<Sentence>* out_a, std::vector<Sentence>* out_b) {
  const SynthConfig& cfg = world.cfg;
  // concept sequences are drawn in latent space, shared by both sides
  Rng rng = Rng(cfg.seed).child("parallel");
  out_a->clear();
  out_b->clear();
  for (int i = 0; i < n; ++i) {
    Vector topic = latent_topic(world, rng);
    int len = cfg.min_sentence_len +
              static_cast<int>(rng.uniform_int(static_cast<uint64_t>(
                  cfg.max_sentence_len - cfg.min_sentence_len + 1)));
    Sentence sa, sb;
    for (int t = 0; t < len; ++t) {
      // language-agnostic concept choice: score latent concepts directly
      Vector scores = world.z * topic / cfg.temperature;
      double mx = scores.maxCoeff();
      Eigen::ArrayXd p = (scores.array() - mx).exp();
      double r = rng.uniform() * p.sum();
      double acc = 0.0;
      int c = cfg.concepts - 1;
      for (Eigen::Index j = 0; j < p.size(); ++j) {
        acc += p(j);
        if (r < acc) {
          c = static_cast<int>(j);
          break;
        }
      }
      sa.push_back(world.words[static_cast<size_t>(lang_a)][static_cast<size_t>(c)]);
      sb.push_back(world.words[static_cast<size_t>(lang_b)][static_cast<size_t>(c)]);
    }
    out_a->push_back(std::move(sa));
    out_b->push_back(std::move(sb));
  }
}

}  // namespace xsalign
