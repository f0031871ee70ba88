#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "adam.hpp"
#include "masking.hpp"
#include "rng.hpp"
#include "tensor.hpp"
#include "vocab.hpp"

namespace rmae {

enum class DecVariant { Basic, Enhanced };

const char* dec_variant_name(DecVariant v);
DecVariant dec_variant_from(const std::string& name);

struct ModelConfig {
  int64_t vocab_size = 0;
  int64_t d_model = 64;
  int64_t n_heads = 2;
  int64_t n_encoder_layers = 2;
  int64_t d_ff = 256;
  int64_t max_len = 128;
  DecVariant dec_variant = DecVariant::Enhanced;

  void validate() const;
  bool operator==(const ModelConfig&) const = default;
};

struct LayerParams {
  Tensor wq, bq, wk, bk, wv, bv, wo, bo;
  Tensor ln1_gain, ln1_bias;
  Tensor ff_w1, ff_b1, ff_w2, ff_b2;
  Tensor ln2_gain, ln2_bias;
};

// All learnable weights. The output projection to the vocabulary is the
// transpose of token_embeddings plus lm_bias (tied weights), shared by the
// encoder MLM head and the decoder head. The position table is shared
// between encoder and decoder as well.
struct ModelParams {
  ModelConfig config;
  Tensor token_embeddings;     // vocab_size x d
  Tensor position_embeddings;  // max_len x d
  std::vector<LayerParams> encoder_layers;
  LayerParams decoder_layer;  // the decoder is a single transformer layer
  Tensor lm_bias;             // vocab_size

  static ModelParams init(const ModelConfig& config, Rng& rng);

  // Deep copy of every tensor; training a clone leaves the source intact.
  ModelParams clone() const;

  // Stable-ordered view of every learnable tensor (handles are shared, not
  // copies); the order defines checkpoint array layout and optimizer slots.
  NamedParams named() const;
  void zero_grad();
  bool all_finite() const;
};

// The encoder's final hidden state at the leading special position, plus
// the source length it was computed from.
struct SentenceEmbedding {
  Tensor state;  // [1 x d]
  size_t source_len = 0;
};

struct EncodeResult {
  SentenceEmbedding embedding;
  Tensor token_states;  // [L x d]
  Tensor mlm_logits;    // [L x vocab]
};

// Full bidirectional transformer stack over the (possibly masked) input;
// [PAD] columns are hidden from attention.
EncodeResult encode(const MaskedInput& input, ModelParams& params);

// Basic decoding: the input sequence is the sentence embedding followed by
// the decoder-polluted token embeddings (masked slots embed [M]), one
// decoder layer with full self-attention, tied output head. Loss selection
// over masked positions is the caller's job.
Tensor decode_basic(const SentenceEmbedding& h, const MaskedInput& dec_masked,
                    ModelParams& params);

// Enhanced two-stream decoding: the query stream H1[i] = h + p_i attends to
// the context stream H2 = [h, e_x1 + p_1, ...] under the sampled
// visibility matrix; residual and layer-norm attach to the query stream.
Tensor decode_enhanced(const SentenceEmbedding& h, const TokenSequence& seq,
                       const AttnVisibility& vis, ModelParams& params);

// Inference path: encode each text with zero masking and L2-normalize the
// sentence embeddings. No gradient tape is built.
Tensor embed_sentences(const std::vector<std::string>& texts, ModelParams& params,
                       const Vocab& vocab);

// A MaskedInput that masks nothing (inference view of a sentence).
MaskedInput unmasked_input(const TokenSequence& seq);

}  // namespace rmae
