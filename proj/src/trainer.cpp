#include "trainer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <memory>

#include <json.hpp>

#include "error.hpp"

namespace rmae {

TrainConfig TrainConfig::from(const Config& cfg) {
  TrainConfig t;
  t.stage = stage_mode_from(cfg.get_str("stage", "stage1"));
  t.enc_mask_ratio = cfg.get_double("enc_mask_ratio", 0.3);
  t.dec_mask_ratio = cfg.get_double("dec_mask_ratio", 0.5);
  t.batch_size = cfg.get_int("batch_size", 8);
  t.steps = cfg.get_int("steps", 100);
  t.lr = cfg.get_double("lr", 1e-4);
  t.warmup_steps = cfg.get_int("warmup_steps", 10);
  t.seed = cfg.get_uint("seed", 42);
  t.tau = cfg.get_double("tau", 0.05);
  t.ctr_symmetric = cfg.get_bool("ctr_symmetric", false);
  t.clip_norm = cfg.get_double("clip_norm", 0.0);
  t.force_ratios = cfg.get_bool("force_ratios", false);
  t.weights.enc = cfg.get_double("w_enc", 1.0);
  t.weights.dec = cfg.get_double("w_dec", 1.0);
  t.weights.ctr = cfg.get_double("w_ctr", 1.0);
  t.save_optimizer = cfg.get_bool("save_optimizer", false);
  t.validate();
  return t;
}

void TrainConfig::validate() const {
  if (!(enc_mask_ratio > 0.0 && enc_mask_ratio < 1.0))
    throw ConfigError("train: enc_mask_ratio must be in (0, 1)");
  if (!(dec_mask_ratio > 0.0 && dec_mask_ratio < 1.0))
    throw ConfigError("train: dec_mask_ratio must be in (0, 1)");
  if (!force_ratios) {
    if (enc_mask_ratio < 0.15 - 1e-12 || enc_mask_ratio > 0.30 + 1e-12)
      throw ConfigError(
          "train: enc_mask_ratio outside the 0.15-0.30 band; set force_ratios to override");
    if (dec_mask_ratio < 0.50 - 1e-12 || dec_mask_ratio > 0.70 + 1e-12)
      throw ConfigError(
          "train: dec_mask_ratio outside the 0.50-0.70 band; set force_ratios to override");
  }
  if (batch_size < 1) throw ConfigError("train: batch_size must be >= 1");
  if (steps < 0) throw ConfigError("train: steps must be >= 0");
  if (!(lr > 0.0)) throw ConfigError("train: lr must be > 0");
  if (warmup_steps < 0) throw ConfigError("train: warmup_steps must be >= 0");
  if (!(tau > 0.0)) throw ConfigError("train: tau must be > 0");
  if (clip_norm < 0.0) throw ConfigError("train: clip_norm must be >= 0");
  const bool uses_ctr =
      stage == StageMode::Stage2RetromaeCtr || stage == StageMode::SupervisedCtrFinetune;
  if (uses_ctr && batch_size < 2)
    throw ConfigError("train: contrastive stages need batch_size >= 2 for in-batch negatives");
}

namespace {

// Epoch-shuffled cycling over [0, n); the shuffle for epoch e comes from
// child("order", e) of the master stream, so runs are reproducible.
class BatchSampler {
 public:
  BatchSampler(size_t n, const Rng& master) : master_(master), n_(n) { reshuffle(); }

  size_t next() {
    if (cursor_ >= order_.size()) {
      ++epoch_;
      reshuffle();
    }
    return order_[cursor_++];
  }

 private:
  void reshuffle() {
    order_.resize(n_);
    for (size_t i = 0; i < n_; ++i) order_[i] = i;
    Rng r = master_.child("order", epoch_);
    r.shuffle(order_);
    cursor_ = 0;
  }

  Rng master_;
  size_t n_;
  std::vector<size_t> order_;
  size_t cursor_ = 0;
  uint64_t epoch_ = 0;
};

Tensor mean_of(std::vector<Tensor> parts) {
  Tensor acc = parts[0];
  for (size_t i = 1; i < parts.size(); ++i) acc = add(acc, parts[i]);
  return scale(acc, 1.0 / static_cast<double>(parts.size()));
}

std::vector<TokenSequence> tokenize_corpus(const std::vector<std::string>& sentences,
                                           const Vocab& vocab, int64_t max_len) {
  std::vector<TokenSequence> out;
  out.reserve(sentences.size());
  for (const auto& s : sentences) {
    TokenSequence seq = encode_sentence(s, vocab, static_cast<size_t>(max_len));
    if (seq.word_count() >= 1) out.push_back(std::move(seq));
  }
  return out;
}

Config snapshot_config(const Config& base, const ModelConfig& mc, const TrainConfig& tc) {
  Config out = base;
  out.set("d_model", std::to_string(mc.d_model));
  out.set("n_heads", std::to_string(mc.n_heads));
  out.set("n_encoder_layers", std::to_string(mc.n_encoder_layers));
  out.set("d_ff", std::to_string(mc.d_ff));
  out.set("max_len", std::to_string(mc.max_len));
  out.set("dec_variant", dec_variant_name(mc.dec_variant));
  out.set("stage", stage_mode_name(tc.stage));
  out.set("seed", std::to_string(tc.seed));
  return out;
}

struct PairBatch {
  std::vector<TokenSequence> anchors;
  std::vector<TokenSequence> positives;
};

class PairProvider {
 public:
  PairProvider(const Stage2Data& data, const Vocab& vocab, int64_t max_len,
               int64_t batch_size)
      : vocab_(vocab), max_len_(max_len) {
    if (data.use_article_pairs) {
      for (const auto& d : data.docs)
        if (d.sentences.size() >= 2) docs_.push_back(&d);
      if (static_cast<int64_t>(docs_.size()) < batch_size)
        throw ContractError("train: need at least batch_size (" +
                            std::to_string(batch_size) + ") documents with >= 2 sentences, got " +
                            std::to_string(docs_.size()));
    } else {
      pairs_ = &data.file_pairs;
      if (static_cast<int64_t>(pairs_->size()) < batch_size)
        throw ContractError("train: need at least batch_size (" +
                            std::to_string(batch_size) + ") sentence pairs, got " +
                            std::to_string(pairs_->size()));
    }
  }

  explicit PairProvider(const std::vector<SentencePair>& pairs, const Vocab& vocab,
                        int64_t max_len, int64_t batch_size)
      : vocab_(vocab), max_len_(max_len), pairs_(&pairs) {
    if (static_cast<int64_t>(pairs.size()) < batch_size)
      throw ContractError("train: need at least batch_size (" + std::to_string(batch_size) +
                          ") sentence pairs, got " + std::to_string(pairs.size()));
  }

  // Fresh draws every step: articles re-sample their sentence pair each
  // time they are visited.
  PairBatch sample(const Rng& master, uint64_t step, int64_t batch_size) const {
    PairBatch out;
    Rng pick = master.child("pair_pick", step);
    if (!docs_.empty()) {
      auto chosen = pick.sample_without_replacement(docs_.size(), static_cast<size_t>(batch_size));
      for (size_t k = 0; k < chosen.size(); ++k) {
        const Document& doc = *docs_[chosen[k]];
        Rng sent = master.child("pair_sent", step, k);
        auto [i, j] = sample_sentence_pair(doc.sentences.size(), sent);
        out.anchors.push_back(encode_sentence(doc.sentences[i], vocab_, static_cast<size_t>(max_len_)));
        out.positives.push_back(encode_sentence(doc.sentences[j], vocab_, static_cast<size_t>(max_len_)));
      }
    } else {
      auto chosen = pick.sample_without_replacement(pairs_->size(), static_cast<size_t>(batch_size));
      for (size_t idx : chosen) {
        out.anchors.push_back((*pairs_)[idx].a);
        out.positives.push_back((*pairs_)[idx].b);
      }
    }
    return out;
  }

 private:
  const Vocab& vocab_;
  int64_t max_len_;
  std::vector<const Document*> docs_;
  const std::vector<SentencePair>* pairs_ = nullptr;
};

Tensor embed_batch(const std::vector<TokenSequence>& seqs, ModelParams& params) {
  std::vector<Tensor> rows;
  rows.reserve(seqs.size());
  for (const auto& seq : seqs)
    rows.push_back(encode(unmasked_input(seq), params).embedding.state);
  return l2_normalize_rows(rows.size() == 1 ? rows[0] : concat_rows(rows));
}

std::string non_finite_param(const ModelParams& params) {
  for (auto& [name, t] : params.named())
    if (!t.all_finite()) return name;
  return "";
}

TrainResult run_training(const TrainConfig& tcfg, const Config& full_cfg,
                         ModelParams params, Vocab vocab,
                         const std::vector<std::string>& retro_sentences,
                         const PairProvider* pair_provider, uint64_t start_step,
                         const std::string& lineage) {
  const bool wants_retro = tcfg.stage != StageMode::SupervisedCtrFinetune;
  const bool wants_ctr = tcfg.stage == StageMode::Stage2RetromaeCtr ||
                         tcfg.stage == StageMode::SupervisedCtrFinetune;
  const auto& mc = params.config;

  std::vector<TokenSequence> corpus;
  std::unique_ptr<BatchSampler> sampler;
  Rng master(tcfg.seed);
  if (wants_retro) {
    corpus = tokenize_corpus(retro_sentences, vocab, mc.max_len);
    if (corpus.empty())
      throw ContractError("train: corpus holds no trainable sentences (need >= 1 word)");
    sampler = std::make_unique<BatchSampler>(corpus.size(), master.child("sampler"));
  }

  AdamState opt;
  opt.lr = tcfg.lr;
  TrainResult result;
  auto named = params.named();

  for (int64_t s = 0; s < tcfg.steps; ++s) {
    const uint64_t step = start_step + static_cast<uint64_t>(s);
    std::optional<Tensor> l_enc, l_dec, l_ctr;

    if (wants_retro) {
      std::vector<Tensor> enc_losses, dec_losses;
      for (int64_t k = 0; k < tcfg.batch_size; ++k) {
        const TokenSequence& seq = corpus[sampler->next()];
        Rng rng_enc = master.child("mask_enc", step, static_cast<uint64_t>(k));
        MaskedInput enc_in = mask_for_encoder(seq, tcfg.enc_mask_ratio, rng_enc);
        EncodeResult er = encode(enc_in, params);
        enc_losses.push_back(loss_enc(er.mlm_logits, enc_in.mlm_labels).value);

        if (mc.dec_variant == DecVariant::Enhanced) {
          Rng rng_vis = master.child("vis", step, static_cast<uint64_t>(k));
          AttnVisibility vis =
              build_visibility(seq.size() - 1, tcfg.dec_mask_ratio, rng_vis);
          Tensor logits = decode_enhanced(er.embedding, seq, vis, params);
          dec_losses.push_back(loss_dec(logits, seq, DecVariant::Enhanced));
        } else {
          Rng rng_dec = master.child("mask_dec", step, static_cast<uint64_t>(k));
          MaskedInput dec_in = mask_for_decoder(seq, tcfg.dec_mask_ratio, rng_dec);
          Tensor logits = decode_basic(er.embedding, dec_in, params);
          dec_losses.push_back(loss_dec(logits, seq, DecVariant::Basic, &dec_in));
        }
      }
      l_enc = mean_of(std::move(enc_losses));
      l_dec = mean_of(std::move(dec_losses));
    }

    if (wants_ctr) {
      PairBatch batch = pair_provider->sample(master, step, tcfg.batch_size);
      Tensor anchors = embed_batch(batch.anchors, params);
      Tensor positives = embed_batch(batch.positives, params);
      l_ctr = loss_contrastive(anchors, positives, tcfg.tau, tcfg.ctr_symmetric);
    }

    Tensor total;
    StepRecord rec;
    rec.step = step;
    if (tcfg.stage == StageMode::SupervisedCtrFinetune) {
      total = *l_ctr;
      rec.l_ctr = l_ctr->value();
    } else {
      LossBundle bundle =
          combine_stage(*l_enc, *l_dec, l_ctr, tcfg.stage, tcfg.tau, tcfg.weights);
      total = bundle.total;
      rec.l_enc = l_enc->value();
      rec.l_dec = l_dec->value();
      if (l_ctr) rec.l_ctr = l_ctr->value();
    }
    rec.total = total.value();
    if (!std::isfinite(rec.total))
      throw NumericError("train: non-finite total loss at step " + std::to_string(step) +
                         " (l_enc=" + std::to_string(rec.l_enc) +
                         ", l_dec=" + std::to_string(rec.l_dec) + ")");

    params.zero_grad();
    backward(total);
    if (tcfg.clip_norm > 0.0) clip_grad_norm(named, tcfg.clip_norm);
    const double warm = tcfg.warmup_steps > 0
                            ? std::min(1.0, static_cast<double>(s + 1) /
                                                static_cast<double>(tcfg.warmup_steps))
                            : 1.0;
    adam_step(named, opt, tcfg.lr * warm);
    if (!params.all_finite())
      throw NumericError("train: parameter '" + non_finite_param(params) +
                         "' went non-finite after step " + std::to_string(step));
    result.curve.push_back(rec);
  }

  Checkpoint& ckpt = result.checkpoint;
  ckpt.config = snapshot_config(full_cfg, mc, tcfg);
  ckpt.vocab = std::move(vocab);
  ckpt.params = std::move(params);
  ckpt.step = start_step + static_cast<uint64_t>(tcfg.steps);
  ckpt.seed = tcfg.seed;
  ckpt.stage = stage_mode_name(tcfg.stage);
  ckpt.lineage = lineage;
  if (tcfg.save_optimizer && opt.initialized()) ckpt.optimizer = std::move(opt);
  return result;
}

}  // namespace

TrainResult train_stage1(const TrainConfig& tcfg, const Config& full_cfg,
                         const std::vector<std::string>& sentences, const Vocab& vocab) {
  if (tcfg.stage != StageMode::Stage1)
    throw ContractError("train_stage1: config stage is " +
                        std::string(stage_mode_name(tcfg.stage)));
  const ModelConfig mc = model_config_from(full_cfg, static_cast<int64_t>(vocab.size()));
  Rng init_rng = Rng(tcfg.seed).child("init");
  ModelParams params = ModelParams::init(mc, init_rng);
  return run_training(tcfg, full_cfg, std::move(params), vocab, sentences, nullptr, 0, "");
}

TrainResult train_stage2(const TrainConfig& tcfg, const Config& full_cfg,
                         const Checkpoint& base, const Stage2Data& data) {
  if (tcfg.stage != StageMode::Stage2Retromae && tcfg.stage != StageMode::Stage2RetromaeCtr)
    throw ContractError("train_stage2: config stage is " +
                        std::string(stage_mode_name(tcfg.stage)));
  std::unique_ptr<PairProvider> pairs;
  if (tcfg.stage == StageMode::Stage2RetromaeCtr)
    pairs = std::make_unique<PairProvider>(data, base.vocab, base.params.config.max_len,
                                           tcfg.batch_size);
  return run_training(tcfg, full_cfg, base.params.clone(), base.vocab, data.sentences,
                      pairs.get(), base.step, base.content_id());
}

TrainResult finetune_supervised_ctr(const TrainConfig& tcfg, const Config& full_cfg,
                                    const Checkpoint& base,
                                    const std::vector<SentencePair>& pairs) {
  if (tcfg.stage != StageMode::SupervisedCtrFinetune)
    throw ContractError("finetune_supervised_ctr: config stage is " +
                        std::string(stage_mode_name(tcfg.stage)));
  PairProvider provider(pairs, base.vocab, base.params.config.max_len, tcfg.batch_size);
  return run_training(tcfg, full_cfg, base.params.clone(), base.vocab, {}, &provider,
                      base.step, base.content_id());
}

void write_loss_curve(const std::vector<StepRecord>& curve, const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("loss curve: cannot write '" + path + "'");
  for (const auto& r : curve) {
    nlohmann::json rec;
    rec["step"] = r.step;
    rec["l_enc"] = r.l_enc;
    rec["l_dec"] = r.l_dec;
    if (r.l_ctr)
      rec["l_ctr"] = *r.l_ctr;
    else
      rec["l_ctr"] = nullptr;
    rec["total"] = r.total;
    out << rec.dump() << "\n";
  }
  if (!out) throw IoError("loss curve: write failed for '" + path + "'");
}

}  // namespace rmae
