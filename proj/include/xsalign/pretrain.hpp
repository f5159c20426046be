#pragma once

#include <string>
#include <vector>

#include "xsalign/alignloss.hpp"
#include "xsalign/common.hpp"
#include "xsalign/corpus.hpp"
#include "xsalign/embedding.hpp"
#include "xsalign/encoder.hpp"

namespace xsalign {

enum class PretrainLoss { MlmOnly, Mse, Dcca };

struct PretrainConfig {
  int steps = 500;
  int mlm_batch = 16;
  int align_batch = 64;
  PretrainLoss loss = PretrainLoss::MlmOnly;
  double lambda = 1.0;  // weight of the alignment loss in the sum
  int val_interval = 100;
  std::string ckpt_dir;  // checkpoints also kept in memory when empty
  uint64_t seed = 1;
  int align_layer = 0;  // 0 = final layer
  double val_fraction = 0.05;  // held-out validation paragraphs
  DccaConfig dcca;
  AdamConfig adam;
  bool align_freq_weighted = false;

  void validate() const;
};

struct TrainLog {
  struct StepRec {
    int step;
    double mlm, align, total;
  };
  struct ValRec {
    int step;
    double mlm;
  };
  std::vector<StepRec> steps;
  std::vector<ValRec> vals;
  std::string selected;  // checkpoint id with minimal validation MLM
};

// `step=<n> mlm=<f> align=<f> total=<f>` / `val step=<n> mlm=<f>` /
// `selected=<id>` lines.
void write_train_log(const TrainLog& log, const std::string& path);

struct StepLosses {
  double mlm = 0.0;
  double align = 0.0;
  double total = 0.0;
};

// One summed-gradient optimizer update: total = L_mlm + lambda * L_align.
// The static space and the H2 side receive no gradient; with lambda = 0 the
// update is bit-identical to mlm-only.
StepLosses pretrain_step(EncoderModel& model, AdamState<float>& opt,
                         const std::vector<MlmExample>& mlm_examples,
                         const EmbeddingSpace* statics,
                         const std::vector<int>& align_rows,
                         const SubwordTokenizer& tokenizer,
                         const PretrainConfig& config);

// Interleaves MLM and alignment batches for config.steps updates, tracks
// validation MLM on a seeded paragraph split, keeps the checkpoint with the
// lowest validation loss and restores the model to it.
TrainLog run_pretraining(EncoderModel& model, const Corpus& corpus,
                         const EmbeddingSpace* statics,
                         const SubwordTokenizer& tokenizer,
                         const PretrainConfig& config);

// run_pretraining with loss forced to mlm-only.
TrainLog mlm_only_baseline(EncoderModel& model, const Corpus& corpus,
                           const SubwordTokenizer& tokenizer, PretrainConfig config);

}  // namespace xsalign
