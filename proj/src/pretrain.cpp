#include "xsalign/pretrain.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>

#include "xsalign/util.hpp"

namespace xsalign {

void PretrainConfig::validate() const {
  if (steps < 1) fail("pretrain config: steps must be >= 1");
  if (mlm_batch < 1) fail("pretrain config: mlm_batch must be >= 1");
  if (align_batch < 1) fail("pretrain config: align_batch must be >= 1");
  if (loss == PretrainLoss::Dcca && align_batch < 2)
    fail("pretrain config: DCCA needs an alignment batch of at least 2");
  if (lambda < 0) fail("pretrain config: lambda must be >= 0");
  if (val_interval < 1) fail("pretrain config: val_interval must be >= 1");
  if (!(val_fraction > 0.0 && val_fraction < 1.0))
    fail("pretrain config: val_fraction must lie in (0, 1)");
  dcca.validate();
}

void write_train_log(const TrainLog& log, const std::string& path) {
  std::string out;
  for (const auto& s : log.steps) {
    out += "step=" + std::to_string(s.step) + " mlm=" + format_double(s.mlm) +
           " align=" + format_double(s.align) + " total=" + format_double(s.total) + "\n";
  }
  for (const auto& v : log.vals)
    out += "val step=" + std::to_string(v.step) + " mlm=" + format_double(v.mlm) + "\n";
  out += "selected=" + log.selected + "\n";
  write_file(path, out);
}

StepLosses pretrain_step(EncoderModel& model, AdamState<float>& opt,
                         const std::vector<MlmExample>& mlm_examples,
                         const EmbeddingSpace* statics,
                         const std::vector<int>& align_rows,
                         const SubwordTokenizer& tokenizer,
                         const PretrainConfig& config) {
  if (mlm_examples.empty()) fail("pretrain_step: empty MLM batch");
  const bool with_align = config.loss != PretrainLoss::MlmOnly;
  if (with_align && (!statics || align_rows.empty()))
    fail("pretrain_step: alignment batch required unless mlm-only");

  auto grads = EncoderParams<float>::zeros_like(model.params);
  StepLosses losses;

  const double mlm_scale = 1.0 / static_cast<double>(mlm_examples.size());
  for (const MlmExample& ex : mlm_examples) {
    EncoderCache<float> cache;
    model.forward(ex.corrupted, cache);
    MatrixT<float> dfinal =
        MatrixT<float>::Zero(cache.h.back().rows(), cache.h.back().cols());
    losses.mlm += mlm_scale * model.mlm_head_loss(cache, ex.positions, ex.targets,
                                                  &dfinal, &grads, mlm_scale);
    std::vector<MatrixT<float>> dstates(static_cast<size_t>(model.cfg.n_layers) + 1);
    dstates.back() = std::move(dfinal);
    model.backward(cache, dstates, grads);
  }

  if (with_align) {
    const int layer =
        config.align_layer > 0 ? config.align_layer : model.cfg.n_layers;
    const int m = static_cast<int>(align_rows.size());
    std::vector<WordForward> forwards(static_cast<size_t>(m));
    Matrix h1(m, model.cfg.d_model);
    Matrix h2(m, statics->dim());
    for (int i = 0; i < m; ++i) {
      int row = align_rows[static_cast<size_t>(i)];
      VectorT<float> pooled;
      if (!word_forward(model, tokenizer, statics->words[static_cast<size_t>(row)],
                        layer, forwards[static_cast<size_t>(i)], &pooled))
        fail("pretrain_step: untokenizable word '" +
             statics->words[static_cast<size_t>(row)] + "' in alignment batch");
      h1.row(i) = pooled.cast<double>().transpose();
      h2.row(i) = statics->matrix.row(row);
    }

    Matrix grad_h1;
    losses.align = config.loss == PretrainLoss::Mse
                       ? mse_loss(h1, h2, &grad_h1)
                       : dcca_loss(h1, h2, config.dcca, &grad_h1);

    if (config.lambda != 0.0) {
      for (int i = 0; i < m; ++i) {
        const WordForward& wf = forwards[static_cast<size_t>(i)];
        // pooled mean: spread the row gradient uniformly over the span
        int span_n = 0;
        for (int p = wf.span.first; p < wf.span.second; ++p)
          if (!SubwordTokenizer::is_special(wf.tokens[static_cast<size_t>(p)])) ++span_n;
        VectorT<float> g =
            (config.lambda / span_n * grad_h1.row(i)).cast<float>().transpose();
        std::vector<MatrixT<float>> dstates(static_cast<size_t>(model.cfg.n_layers) + 1);
        MatrixT<float> inject = MatrixT<float>::Zero(
            static_cast<Eigen::Index>(wf.tokens.size()), model.cfg.d_model);
        for (int p = wf.span.first; p < wf.span.second; ++p)
          if (!SubwordTokenizer::is_special(wf.tokens[static_cast<size_t>(p)]))
            inject.row(p) = g.transpose();
        dstates[static_cast<size_t>(layer)] = std::move(inject);
        model.backward(wf.cache, dstates, grads);
      }
    }
  }

  losses.total = losses.mlm + config.lambda * losses.align;
  if (!std::isfinite(losses.total)) {
    std::string words;
    for (size_t i = 0; i < align_rows.size() && i < 8; ++i)
      words += (i ? "," : "") + statics->words[static_cast<size_t>(align_rows[i])];
    fail("pretrain_step: non-finite loss (mlm=" + format_double(losses.mlm) +
         " align=" + format_double(losses.align) + " align_words=[" + words + "])");
  }
  adam_step(model.params, grads, opt);
  return losses;
}

namespace {

struct SplitCorpus {
  std::vector<std::vector<int>> train_ids;  // encoded, truncated sentences
  std::vector<std::vector<int>> val_ids;
};

std::vector<int> encode_clamped(const SubwordTokenizer& tokenizer, const Sentence& s,
                                int max_positions) {
  std::vector<int> ids = tokenizer.encode_sentence(s, nullptr);
  if (static_cast<int>(ids.size()) > max_positions) {
    ids.resize(static_cast<size_t>(max_positions) - 1);
    ids.push_back(SubwordTokenizer::kEos);
  }
  return ids;
}

SplitCorpus split_corpus(const Corpus& corpus, const SubwordTokenizer& tokenizer,
                         int max_positions, double val_fraction, Rng rng) {
  if (corpus.paragraphs.empty()) fail("pretrain: empty corpus");
  SplitCorpus out;
  const size_t n_para = corpus.paragraphs.size();
  std::vector<char> is_val(n_para, 0);
  for (size_t p = 0; p < n_para; ++p)
    is_val[p] = rng.uniform() < val_fraction ? 1 : 0;
  // both shards must be non-empty
  bool any_val = false, any_train = false;
  for (char v : is_val) (v ? any_val : any_train) = true;
  if (!any_val) is_val[n_para - 1] = 1;
  if (!any_train && n_para > 1) is_val[0] = 0;

  for (size_t p = 0; p < corpus.paragraphs.size(); ++p) {
    for (const Sentence& s : corpus.paragraphs[p]) {
      auto ids = encode_clamped(tokenizer, s, max_positions);
      if (static_cast<int>(ids.size()) < 3) continue;
      (is_val[p] ? out.val_ids : out.train_ids).push_back(std::move(ids));
    }
  }
  if (out.train_ids.empty()) out.train_ids = out.val_ids;
  if (out.val_ids.empty()) fail("pretrain: empty validation split");
  return out;
}

double validation_mlm(const EncoderModel& model, const std::vector<std::vector<int>>& val,
                      const EncoderConfig& cfg, Rng rng) {
  double total = 0.0;
  for (const auto& ids : val) {
    MlmExample ex = mask_for_mlm(ids, rng, cfg);
    total += model.mlm_loss(ex.corrupted, ex.positions, ex.targets, nullptr);
  }
  return total / static_cast<double>(val.size());
}

}  // namespace

TrainLog run_pretraining(EncoderModel& model, const Corpus& corpus,
                         const EmbeddingSpace* statics,
                         const SubwordTokenizer& tokenizer,
                         const PretrainConfig& config) {
  config.validate();
  const bool with_align = config.loss != PretrainLoss::MlmOnly;
  if (with_align && !statics) fail("run_pretraining: static space required");
  if (with_align && statics->dim() != model.cfg.d_model &&
      config.loss == PretrainLoss::Mse)
    fail("run_pretraining: MSE requires the static dimension to match d_model");

  Rng base(config.seed);
  SplitCorpus split = split_corpus(corpus, tokenizer, model.cfg.max_positions,
                                   config.val_fraction, base.child("val-split"));
  Rng batch_rng = base.child("mlm-batch");
  Rng mask_rng = base.child("mlm-mask");

  // alignment deck over encodable words only
  std::vector<int> encodable;
  AlignDeck* deck = nullptr;
  AlignDeck deck_storage(1, Rng(0));
  if (with_align) {
    for (int i = 0; i < statics->size(); ++i) {
      WordForward wf;
      std::vector<std::pair<int, int>> spans;
      auto ids = tokenizer.encode_sentence({statics->words[static_cast<size_t>(i)]}, &spans);
      if (static_cast<int>(ids.size()) <= model.cfg.max_positions &&
          spans[0].second > spans[0].first)
        encodable.push_back(i);
    }
    if (encodable.empty()) fail("run_pretraining: no encodable static word");
    deck_storage = AlignDeck(static_cast<int>(encodable.size()), base.child("align-deck"));
    deck = &deck_storage;
  }

  AdamState<float> opt;
  opt.cfg = config.adam;
  opt.init_like(model.params);

  TrainLog log;
  log.vals.push_back({0, validation_mlm(model, split.val_ids, model.cfg,
                                        base.child("val-mask"))});

  struct Snapshot {
    int step;
    double val;
    EncoderParams<float> params;
  };
  std::vector<Snapshot> snapshots;

  if (!config.ckpt_dir.empty()) std::filesystem::create_directories(config.ckpt_dir);

  for (int step = 1; step <= config.steps; ++step) {
    std::vector<MlmExample> mlm_batch;
    mlm_batch.reserve(static_cast<size_t>(config.mlm_batch));
    for (int b = 0; b < config.mlm_batch; ++b) {
      const auto& ids =
          split.train_ids[batch_rng.uniform_int(split.train_ids.size())];
      mlm_batch.push_back(mask_for_mlm(ids, mask_rng, model.cfg));
    }

    std::vector<int> align_rows;
    if (with_align) {
      align_rows.reserve(static_cast<size_t>(config.align_batch));
      for (int b = 0; b < config.align_batch; ++b)
        align_rows.push_back(encodable[static_cast<size_t>(deck->next())]);
    }

    StepLosses losses =
        pretrain_step(model, opt, mlm_batch, statics, align_rows, tokenizer, config);
    log.steps.push_back({step, losses.mlm, losses.align, losses.total});

    if (step % config.val_interval == 0 || step == config.steps) {
      double val = validation_mlm(model, split.val_ids, model.cfg,
                                  base.child("val-mask"));
      log.vals.push_back({step, val});
      snapshots.push_back({step, val, model.params});
      if (!config.ckpt_dir.empty()) {
        KvMap meta;
        meta.set("seed", std::to_string(config.seed));
        meta.set_int("step", step);
        save_checkpoint(model, tokenizer,
                        config.ckpt_dir + "/ckpt-" + std::to_string(step) + ".ckpt",
                        meta);
      }
    }
  }

  // checkpoint with the minimum validation MLM; earliest wins ties
  const Snapshot* best = &snapshots.front();
  for (const auto& s : snapshots)
    if (s.val < best->val) best = &s;
  log.selected = "ckpt-" + std::to_string(best->step);
  model.params = best->params;
  return log;
}

TrainLog mlm_only_baseline(EncoderModel& model, const Corpus& corpus,
                           const SubwordTokenizer& tokenizer, PretrainConfig config) {
  config.loss = PretrainLoss::MlmOnly;
  return run_pretraining(model, corpus, nullptr, tokenizer, config);
}

}  // namespace xsalign
