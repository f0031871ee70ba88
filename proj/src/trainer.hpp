#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "checkpoint.hpp"
#include "config.hpp"
#include "corpus.hpp"
#include "objectives.hpp"

namespace rmae {

struct TrainConfig {
  StageMode stage = StageMode::Stage1;
  double enc_mask_ratio = 0.3;
  double dec_mask_ratio = 0.5;
  int64_t batch_size = 8;
  int64_t steps = 100;
  double lr = 1e-4;
  int64_t warmup_steps = 10;
  uint64_t seed = 42;
  double tau = 0.05;
  bool ctr_symmetric = false;
  double clip_norm = 0.0;  // 0 disables clipping
  // the paper's stated bands; force_ratios lifts the validation for
  // experimentation
  bool force_ratios = false;
  LossWeights weights;
  bool save_optimizer = false;

  static TrainConfig from(const Config& cfg);
  void validate() const;
};

struct StepRecord {
  uint64_t step = 0;
  double l_enc = 0.0;
  double l_dec = 0.0;
  std::optional<double> l_ctr;
  double total = 0.0;
};

struct TrainResult {
  Checkpoint checkpoint;
  std::vector<StepRecord> curve;
};

// Domain data for stage-2 / fine-tuning runs. `sentences` feeds the
// RetroMAE losses; exactly one of `docs` (article pairs) or `file_pairs`
// feeds the contrastive term when the mode asks for it.
struct Stage2Data {
  std::vector<std::string> sentences;
  std::vector<Document> docs;
  std::vector<SentencePair> file_pairs;
  bool use_article_pairs = false;
};

// Stage 1: RetroMAE from random init on a generic corpus.
TrainResult train_stage1(const TrainConfig& tcfg, const Config& full_cfg,
                         const std::vector<std::string>& sentences, const Vocab& vocab);

// Stage 2: continue from a base checkpoint with RetroMAE, optionally plus
// in-batch contrastive learning over sentence pairs.
TrainResult train_stage2(const TrainConfig& tcfg, const Config& full_cfg,
                         const Checkpoint& base, const Stage2Data& data);

// Contrastive-only fine-tuning over labeled pairs.
TrainResult finetune_supervised_ctr(const TrainConfig& tcfg, const Config& full_cfg,
                                    const Checkpoint& base,
                                    const std::vector<SentencePair>& pairs);

// Record-per-line loss curve: {"step":..,"l_enc":..,"l_dec":..,"l_ctr":..,"total":..}
void write_loss_curve(const std::vector<StepRecord>& curve, const std::string& path);

}  // namespace rmae
