#pragma once

#include <optional>
#include <string>
#include <vector>

#include "masking.hpp"
#include "model.hpp"
#include "tensor.hpp"
#include "vocab.hpp"

namespace rmae {

enum class StageMode { Stage1, Stage2Retromae, Stage2RetromaeCtr, SupervisedCtrFinetune };

const char* stage_mode_name(StageMode m);
StageMode stage_mode_from(const std::string& name);

struct LossValue {
  Tensor value;
  bool empty = false;  // set when every position was ignored
};

// MLM cross-entropy over the encoder-masked positions (mean). Zero masked
// positions yield 0 with the empty flag raised.
LossValue loss_enc(const Tensor& mlm_logits, const std::vector<TokenId>& mlm_labels);

// Reconstruction loss. Basic decoding trains on the decoder-masked token
// positions only (pass the decoder MaskedInput); enhanced decoding trains
// on every real token position, specials excluded.
Tensor loss_dec(const Tensor& dec_logits, const TokenSequence& seq, DecVariant variant,
                const MaskedInput* basic_mask = nullptr);

// InfoNCE over in-batch negatives: every anchor scores against all
// positives in the batch, its own included in the denominator, cosine
// similarity divided by tau. Rows must arrive L2-normalized. symmetric
// adds the b->a direction and averages.
Tensor loss_contrastive(const Tensor& anchors, const Tensor& positives, double tau,
                        bool symmetric = false);

struct LossWeights {
  double enc = 1.0;
  double dec = 1.0;
  double ctr = 1.0;
};

struct LossBundle {
  Tensor l_enc;
  Tensor l_dec;
  std::optional<Tensor> l_ctr;
  Tensor total;
  double tau = 0.0;
};

// Stage-specific combination: stage1 and stage2_retromae sum the two
// reconstruction losses; stage2_retromae_ctr adds the contrastive term.
// The component set must match the mode exactly.
LossBundle combine_stage(const Tensor& l_enc, const Tensor& l_dec,
                         const std::optional<Tensor>& l_ctr, StageMode mode,
                         double tau = 0.0, const LossWeights& weights = {});

}  // namespace rmae
