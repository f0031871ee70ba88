#include "objectives.hpp"

#include <cmath>

#include "error.hpp"

namespace rmae {

const char* stage_mode_name(StageMode m) {
  switch (m) {
    case StageMode::Stage1: return "stage1";
    case StageMode::Stage2Retromae: return "stage2_retromae";
    case StageMode::Stage2RetromaeCtr: return "stage2_retromae_ctr";
    case StageMode::SupervisedCtrFinetune: return "supervised_ctr_finetune";
  }
  return "?";
}

StageMode stage_mode_from(const std::string& name) {
  if (name == "stage1") return StageMode::Stage1;
  if (name == "stage2_retromae") return StageMode::Stage2Retromae;
  if (name == "stage2_retromae_ctr") return StageMode::Stage2RetromaeCtr;
  if (name == "supervised_ctr_finetune") return StageMode::SupervisedCtrFinetune;
  throw ConfigError("unknown stage mode '" + name + "'");
}

LossValue loss_enc(const Tensor& mlm_logits, const std::vector<TokenId>& mlm_labels) {
  LossValue out;
  out.value = cross_entropy(mlm_logits, mlm_labels, kIgnoreId, &out.empty);
  return out;
}

Tensor loss_dec(const Tensor& dec_logits, const TokenSequence& seq, DecVariant variant,
                const MaskedInput* basic_mask) {
  const size_t l = seq.ids.size();
  if (static_cast<size_t>(dec_logits.rows()) != l)
    throw ContractError("loss_dec: logits have " + std::to_string(dec_logits.rows()) +
                        " rows for a length-" + std::to_string(l) + " sequence");
  if (variant == DecVariant::Basic) {
    if (basic_mask == nullptr)
      throw ContractError("loss_dec: basic variant needs the decoder mask");
    if (basic_mask->ids.size() != l)
      throw ContractError("loss_dec: decoder mask length mismatch");
    return cross_entropy(dec_logits, basic_mask->mlm_labels, kIgnoreId);
  }
  if (basic_mask != nullptr)
    throw ContractError("loss_dec: enhanced variant takes no decoder mask");
  // every real token position carries a training signal
  std::vector<TokenId> labels(l, kIgnoreId);
  for (size_t i = 1; i < l; ++i) {
    const TokenId id = seq.ids[i];
    if (id == kSepId || id == kPadId || id == kClsId) continue;
    labels[i] = id;
  }
  return cross_entropy(dec_logits, labels, kIgnoreId);
}

Tensor loss_contrastive(const Tensor& anchors, const Tensor& positives, double tau,
                        bool symmetric) {
  if (anchors.ndim() != 2 || positives.ndim() != 2 ||
      anchors.shape() != positives.shape())
    throw ContractError("loss_contrastive: anchors and positives must share a [BxD] shape");
  const int64_t b = anchors.rows();
  if (b < 2)
    throw ContractError("loss_contrastive: batch of " + std::to_string(b) +
                        " has no in-batch negatives");
  if (!(tau > 0.0)) throw ConfigError("loss_contrastive: tau must be > 0");
  for (const Tensor* t : {&anchors, &positives}) {
    for (int64_t i = 0; i < b; ++i) {
      double s = 0.0;
      for (int64_t j = 0; j < t->cols(); ++j) s += t->at(i, j) * t->at(i, j);
      if (std::abs(s - 1.0) > 1e-6)
        throw ContractError("loss_contrastive: row " + std::to_string(i) +
                            " is not L2-normalized");
    }
  }
  std::vector<TokenId> diagonal(static_cast<size_t>(b));
  for (int64_t i = 0; i < b; ++i) diagonal[static_cast<size_t>(i)] = static_cast<TokenId>(i);
  Tensor scores = scale(matmul_nt(anchors, positives), 1.0 / tau);
  Tensor fwd = cross_entropy(scores, diagonal, kIgnoreId);
  if (!symmetric) return fwd;
  Tensor scores_rev = scale(matmul_nt(positives, anchors), 1.0 / tau);
  Tensor rev = cross_entropy(scores_rev, diagonal, kIgnoreId);
  return scale(add(fwd, rev), 0.5);
}

LossBundle combine_stage(const Tensor& l_enc, const Tensor& l_dec,
                         const std::optional<Tensor>& l_ctr, StageMode mode, double tau,
                         const LossWeights& weights) {
  const bool wants_ctr = mode == StageMode::Stage2RetromaeCtr;
  if (mode == StageMode::SupervisedCtrFinetune)
    throw ContractError("combine_stage: the contrastive fine-tune stage uses l_ctr alone");
  if (wants_ctr && !l_ctr.has_value())
    throw ContractError("combine_stage: mode " + std::string(stage_mode_name(mode)) +
                        " requires l_ctr");
  if (!wants_ctr && l_ctr.has_value())
    throw ContractError("combine_stage: mode " + std::string(stage_mode_name(mode)) +
                        " takes no l_ctr");
  LossBundle out;
  out.l_enc = l_enc;
  out.l_dec = l_dec;
  out.tau = tau;
  out.total = add(scale(l_enc, weights.enc), scale(l_dec, weights.dec));
  if (wants_ctr) {
    out.l_ctr = *l_ctr;
    out.total = add(out.total, scale(*l_ctr, weights.ctr));
  }
  return out;
}

}  // namespace rmae
