#include "model.hpp"

#include <cmath>

#include "error.hpp"

namespace rmae {

const char* dec_variant_name(DecVariant v) {
  return v == DecVariant::Basic ? "basic" : "enhanced";
}

DecVariant dec_variant_from(const std::string& name) {
  if (name == "basic") return DecVariant::Basic;
  if (name == "enhanced") return DecVariant::Enhanced;
  throw ConfigError("unknown decoder variant '" + name + "' (basic|enhanced)");
}

void ModelConfig::validate() const {
  if (vocab_size < static_cast<int64_t>(kNumSpecials) + 1)
    throw ConfigError("model: vocab_size must cover the specials plus one word");
  if (d_model < 1 || n_heads < 1 || d_ff < 1)
    throw ConfigError("model: d_model, n_heads and d_ff must be >= 1");
  if (d_model % n_heads != 0)
    throw ConfigError("model: d_model " + std::to_string(d_model) +
                      " not divisible by n_heads " + std::to_string(n_heads));
  if (n_encoder_layers < 1) throw ConfigError("model: n_encoder_layers must be >= 1");
  if (max_len < 3) throw ConfigError("model: max_len must be >= 3");
}

namespace {

constexpr double kInitStd = 0.02;

LayerParams init_layer(const ModelConfig& c, Rng& rng) {
  LayerParams l;
  l.wq = Tensor::randn({c.d_model, c.d_model}, rng, kInitStd, true);
  l.bq = Tensor::zeros({c.d_model}, true);
  l.wk = Tensor::randn({c.d_model, c.d_model}, rng, kInitStd, true);
  l.bk = Tensor::zeros({c.d_model}, true);
  l.wv = Tensor::randn({c.d_model, c.d_model}, rng, kInitStd, true);
  l.bv = Tensor::zeros({c.d_model}, true);
  l.wo = Tensor::randn({c.d_model, c.d_model}, rng, kInitStd, true);
  l.bo = Tensor::zeros({c.d_model}, true);
  l.ln1_gain = Tensor::full({c.d_model}, 1.0, true);
  l.ln1_bias = Tensor::zeros({c.d_model}, true);
  l.ff_w1 = Tensor::randn({c.d_model, c.d_ff}, rng, kInitStd, true);
  l.ff_b1 = Tensor::zeros({c.d_ff}, true);
  l.ff_w2 = Tensor::randn({c.d_ff, c.d_model}, rng, kInitStd, true);
  l.ff_b2 = Tensor::zeros({c.d_model}, true);
  l.ln2_gain = Tensor::full({c.d_model}, 1.0, true);
  l.ln2_bias = Tensor::zeros({c.d_model}, true);
  return l;
}

void add_layer_params(NamedParams& out, const std::string& prefix, const LayerParams& l) {
  out.emplace_back(prefix + ".attn.wq", l.wq);
  out.emplace_back(prefix + ".attn.bq", l.bq);
  out.emplace_back(prefix + ".attn.wk", l.wk);
  out.emplace_back(prefix + ".attn.bk", l.bk);
  out.emplace_back(prefix + ".attn.wv", l.wv);
  out.emplace_back(prefix + ".attn.bv", l.bv);
  out.emplace_back(prefix + ".attn.wo", l.wo);
  out.emplace_back(prefix + ".attn.bo", l.bo);
  out.emplace_back(prefix + ".ln1.gain", l.ln1_gain);
  out.emplace_back(prefix + ".ln1.bias", l.ln1_bias);
  out.emplace_back(prefix + ".ff.w1", l.ff_w1);
  out.emplace_back(prefix + ".ff.b1", l.ff_b1);
  out.emplace_back(prefix + ".ff.w2", l.ff_w2);
  out.emplace_back(prefix + ".ff.b2", l.ff_b2);
  out.emplace_back(prefix + ".ln2.gain", l.ln2_gain);
  out.emplace_back(prefix + ".ln2.bias", l.ln2_bias);
}

// Multi-head attention with an additive mask shared across heads. The
// scores are scaled by 1/sqrt(d_head) in the standard Q K^T orientation.
Tensor attention(const Tensor& query_in, const Tensor& context_in, const Tensor& mask,
                 const LayerParams& l, int64_t n_heads) {
  const int64_t d = query_in.cols();
  const int64_t dh = d / n_heads;
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));
  Tensor q = add_rowvec(matmul(query_in, l.wq), l.bq);
  Tensor k = add_rowvec(matmul(context_in, l.wk), l.bk);
  Tensor v = add_rowvec(matmul(context_in, l.wv), l.bv);
  std::vector<Tensor> heads;
  heads.reserve(static_cast<size_t>(n_heads));
  for (int64_t h = 0; h < n_heads; ++h) {
    Tensor qh = slice_cols(q, h * dh, dh);
    Tensor kh = slice_cols(k, h * dh, dh);
    Tensor vh = slice_cols(v, h * dh, dh);
    Tensor scores = scale(matmul_nt(qh, kh), inv_sqrt);
    Tensor weights = softmax_masked(scores, mask);
    heads.push_back(matmul(weights, vh));
  }
  Tensor ctx = n_heads == 1 ? heads[0] : concat_cols(heads);
  return add_rowvec(matmul(ctx, l.wo), l.bo);
}

Tensor feed_forward(const Tensor& x, const LayerParams& l) {
  Tensor hidden = gelu(add_rowvec(matmul(x, l.ff_w1), l.ff_b1));
  return add_rowvec(matmul(hidden, l.ff_w2), l.ff_b2);
}

// Post-LN transformer layer: LN(x + attn), then LN(x + ffn). The residual
// attaches to whatever `residual_src` is (encoder: the layer input;
// enhanced decoder: the query stream).
Tensor transformer_layer(const Tensor& residual_src, const Tensor& query_in,
                         const Tensor& context_in, const Tensor& mask,
                         const LayerParams& l, int64_t n_heads) {
  Tensor a = attention(query_in, context_in, mask, l, n_heads);
  Tensor x = layer_norm(add(residual_src, a), l.ln1_gain, l.ln1_bias);
  Tensor f = feed_forward(x, l);
  return layer_norm(add(x, f), l.ln2_gain, l.ln2_bias);
}

// Additive [L x L] self-attention mask hiding [PAD] columns.
Tensor pad_mask(const std::vector<TokenId>& ids) {
  const int64_t l = static_cast<int64_t>(ids.size());
  std::vector<double> data(static_cast<size_t>(l * l), 0.0);
  for (int64_t j = 0; j < l; ++j) {
    if (ids[static_cast<size_t>(j)] != kPadId) continue;
    for (int64_t i = 0; i < l; ++i) data[static_cast<size_t>(i * l + j)] = kNegInf;
  }
  return Tensor::from({l, l}, std::move(data));
}

Tensor tied_logits(const Tensor& states, ModelParams& params) {
  return add_rowvec(matmul_nt(states, params.token_embeddings), params.lm_bias);
}

std::vector<TokenId> tail_ids(const std::vector<TokenId>& ids) {
  return std::vector<TokenId>(ids.begin() + 1, ids.end());
}

}  // namespace

ModelParams ModelParams::init(const ModelConfig& config, Rng& rng) {
  config.validate();
  ModelParams p;
  p.config = config;
  p.token_embeddings = Tensor::randn({config.vocab_size, config.d_model}, rng, kInitStd, true);
  p.position_embeddings = Tensor::randn({config.max_len, config.d_model}, rng, kInitStd, true);
  p.encoder_layers.reserve(static_cast<size_t>(config.n_encoder_layers));
  for (int64_t i = 0; i < config.n_encoder_layers; ++i)
    p.encoder_layers.push_back(init_layer(config, rng));
  p.decoder_layer = init_layer(config, rng);
  p.lm_bias = Tensor::zeros({config.vocab_size}, true);
  return p;
}

namespace {
LayerParams clone_layer(const LayerParams& l) {
  LayerParams c;
  c.wq = l.wq.clone();
  c.bq = l.bq.clone();
  c.wk = l.wk.clone();
  c.bk = l.bk.clone();
  c.wv = l.wv.clone();
  c.bv = l.bv.clone();
  c.wo = l.wo.clone();
  c.bo = l.bo.clone();
  c.ln1_gain = l.ln1_gain.clone();
  c.ln1_bias = l.ln1_bias.clone();
  c.ff_w1 = l.ff_w1.clone();
  c.ff_b1 = l.ff_b1.clone();
  c.ff_w2 = l.ff_w2.clone();
  c.ff_b2 = l.ff_b2.clone();
  c.ln2_gain = l.ln2_gain.clone();
  c.ln2_bias = l.ln2_bias.clone();
  return c;
}
}  // namespace

ModelParams ModelParams::clone() const {
  ModelParams c;
  c.config = config;
  c.token_embeddings = token_embeddings.clone();
  c.position_embeddings = position_embeddings.clone();
  c.encoder_layers.reserve(encoder_layers.size());
  for (const auto& l : encoder_layers) c.encoder_layers.push_back(clone_layer(l));
  c.decoder_layer = clone_layer(decoder_layer);
  c.lm_bias = lm_bias.clone();
  return c;
}

NamedParams ModelParams::named() const {
  NamedParams out;
  out.emplace_back("tok_emb", token_embeddings);
  out.emplace_back("pos_emb", position_embeddings);
  for (size_t i = 0; i < encoder_layers.size(); ++i)
    add_layer_params(out, "enc." + std::to_string(i), encoder_layers[i]);
  add_layer_params(out, "dec", decoder_layer);
  out.emplace_back("lm_bias", lm_bias);
  return out;
}

void ModelParams::zero_grad() {
  for (auto& [name, t] : named()) {
    (void)name;
    t.zero_grad();
  }
}

bool ModelParams::all_finite() const {
  for (auto& [name, t] : named()) {
    (void)name;
    if (!t.all_finite()) return false;
  }
  return true;
}

EncodeResult encode(const MaskedInput& input, ModelParams& params) {
  const auto& cfg = params.config;
  const int64_t l = static_cast<int64_t>(input.ids.size());
  if (l > cfg.max_len)
    throw ShapeError("encode: sequence length " + std::to_string(l) +
                     " exceeds max_len " + std::to_string(cfg.max_len));
  if (l < 2) throw ContractError("encode: sequence must hold at least [CLS] and [SEP]");

  Tensor x = add(lookup(params.token_embeddings, input.ids),
                 slice_rows(params.position_embeddings, 0, l));
  Tensor mask = pad_mask(input.ids);
  for (auto& layer : params.encoder_layers)
    x = transformer_layer(x, x, x, mask, layer, cfg.n_heads);

  EncodeResult r;
  r.embedding.state = slice_rows(x, 0, 1);
  r.embedding.source_len = input.ids.size();
  r.token_states = x;
  r.mlm_logits = tied_logits(x, params);
  return r;
}

Tensor decode_basic(const SentenceEmbedding& h, const MaskedInput& dec_masked,
                    ModelParams& params) {
  const auto& cfg = params.config;
  const int64_t l = static_cast<int64_t>(dec_masked.ids.size());
  if (h.source_len != dec_masked.ids.size())
    throw ContractError("decode_basic: embedding computed over length " +
                        std::to_string(h.source_len) + " but decoder input has length " +
                        std::to_string(l));
  if (l > cfg.max_len)
    throw ShapeError("decode_basic: sequence length exceeds max_len");
  if (l < 2) throw ContractError("decode_basic: need at least one token after the embedding slot");

  Tensor tokens = add(lookup(params.token_embeddings, tail_ids(dec_masked.ids)),
                      slice_rows(params.position_embeddings, 1, l - 1));
  Tensor x = concat_rows({h.state, tokens});
  Tensor mask = pad_mask(dec_masked.ids);
  x = transformer_layer(x, x, x, mask, params.decoder_layer, cfg.n_heads);
  return tied_logits(x, params);
}

Tensor decode_enhanced(const SentenceEmbedding& h, const TokenSequence& seq,
                       const AttnVisibility& vis, ModelParams& params) {
  const auto& cfg = params.config;
  const int64_t l = static_cast<int64_t>(seq.ids.size());
  if (vis.dim() != seq.ids.size())
    throw ContractError("decode_enhanced: visibility dimension " +
                        std::to_string(vis.dim()) + " != sequence length " +
                        std::to_string(l));
  if (h.source_len != seq.ids.size())
    throw ContractError("decode_enhanced: embedding computed over length " +
                        std::to_string(h.source_len) + " but sequence has length " +
                        std::to_string(l));
  if (l > cfg.max_len)
    throw ShapeError("decode_enhanced: sequence length exceeds max_len");

  // H1: query stream, the embedding at every position; H2: context stream,
  // the embedding followed by the unmasked token embeddings (no p_0 on h).
  Tensor h1 = add(repeat_row(h.state, l), slice_rows(params.position_embeddings, 0, l));
  Tensor tokens = add(lookup(params.token_embeddings, tail_ids(seq.ids)),
                      slice_rows(params.position_embeddings, 1, l - 1));
  Tensor h2 = concat_rows({h.state, tokens});

  Tensor mask = vis.to_additive();
  Tensor x = transformer_layer(h1, h1, h2, mask, params.decoder_layer, cfg.n_heads);
  return tied_logits(x, params);
}

MaskedInput unmasked_input(const TokenSequence& seq) {
  MaskedInput m;
  m.ids = seq.ids;
  m.mlm_labels.assign(seq.ids.size(), kIgnoreId);
  m.mask_ratio = 0.0;
  return m;
}

Tensor embed_sentences(const std::vector<std::string>& texts, ModelParams& params,
                       const Vocab& vocab) {
  if (texts.empty()) throw ContractError("embed_sentences: empty text list");
  GradGuard no_grad(false);
  std::vector<Tensor> rows;
  rows.reserve(texts.size());
  for (const auto& text : texts) {
    const auto seq = encode_sentence(text, vocab, static_cast<size_t>(params.config.max_len));
    rows.push_back(encode(unmasked_input(seq), params).embedding.state);
  }
  return l2_normalize_rows(rows.size() == 1 ? rows[0] : concat_rows(rows));
}

}  // namespace rmae
