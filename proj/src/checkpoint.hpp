#pragma once

#include <cstdint>
#include <optional>
#include <string>

#include "adam.hpp"
#include "config.hpp"
#include "model.hpp"
#include "vocab.hpp"

namespace rmae {

// The stage-to-stage handoff unit. On disk: magic "RMAE", a 4-byte LE
// version, an 8-byte LE metadata length, a UTF-8 JSON metadata record
// (config snapshot, vocab, array manifest with names/shapes/offsets,
// step, rng seed, stage, lineage), then the raw little-endian float64
// arrays in manifest order. save -> load -> save is byte-identical.
struct Checkpoint {
  uint32_t version = 1;
  Config config;  // flat snapshot, model + training keys
  Vocab vocab;
  ModelParams params;
  std::optional<AdamState> optimizer;
  uint64_t step = 0;
  uint64_t seed = 0;  // master rng seed; with `step` this is the rng state
  std::string stage;
  std::string lineage;  // content id of the base checkpoint, empty for stage 1

  // FNV-1a-64 over config, vocab and parameter bytes; stable across runs
  // with identical content.
  std::string content_id() const;
};

void save_checkpoint(const Checkpoint& ckpt, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

// Field-by-field comparison against an expected model shape; raises a
// compatibility error naming the first mismatched field.
void check_model_compat(const ModelConfig& from_checkpoint, const ModelConfig& expected);

ModelConfig model_config_from(const Config& cfg, int64_t vocab_size);

}  // namespace rmae
