#include "masking.hpp"

#include <cmath>

#include "error.hpp"

namespace rmae {

namespace {

MaskedInput mask_tokens(const TokenSequence& seq, double ratio, Rng& rng,
                        const char* who) {
  if (!(ratio > 0.0 && ratio < 1.0))
    throw ConfigError(std::string(who) + ": mask ratio must be in (0, 1), got " +
                      std::to_string(ratio));
  const auto candidates = maskable_positions(seq);
  if (candidates.empty())
    throw ContractError(std::string(who) + ": sentence has no maskable tokens");

  const auto want = static_cast<size_t>(
      std::llround(ratio * static_cast<double>(candidates.size())));
  const size_t count = std::max<size_t>(1, want);

  MaskedInput out;
  out.ids = seq.ids;
  out.mlm_labels.assign(seq.ids.size(), kIgnoreId);
  out.mask_ratio = ratio;
  for (size_t k : rng.sample_without_replacement(candidates.size(), count)) {
    const size_t pos = candidates[k];
    out.mlm_labels[pos] = out.ids[pos];
    out.ids[pos] = kMaskId;
  }
  return out;
}

}  // namespace

std::vector<size_t> maskable_positions(const TokenSequence& seq) {
  std::vector<size_t> out;
  for (size_t i = 0; i < seq.ids.size(); ++i) {
    const TokenId id = seq.ids[i];
    if (id == kClsId || id == kSepId || id == kPadId) continue;
    out.push_back(i);
  }
  return out;
}

MaskedInput mask_for_encoder(const TokenSequence& seq, double ratio, Rng& rng) {
  return mask_tokens(seq, ratio, rng, "mask_for_encoder");
}

MaskedInput mask_for_decoder(const TokenSequence& seq, double ratio, Rng& rng) {
  return mask_tokens(seq, ratio, rng, "mask_for_decoder");
}

Tensor AttnVisibility::to_additive() const {
  const int64_t l = static_cast<int64_t>(dim());
  std::vector<double> data(visible.size());
  for (size_t i = 0; i < visible.size(); ++i) data[i] = visible[i] ? 0.0 : kNegInf;
  return Tensor::from({l, l}, std::move(data));
}

AttnVisibility build_visibility(size_t n_tokens, double dec_ratio, Rng& rng) {
  if (n_tokens < 2)
    throw ContractError(
        "build_visibility: need >= 2 tokens to exclude self and still attend "
        "to a token, got " +
        std::to_string(n_tokens));
  if (!(dec_ratio > 0.0 && dec_ratio < 1.0))
    throw ConfigError("build_visibility: dec_ratio must be in (0, 1), got " +
                      std::to_string(dec_ratio));

  const double exact = (1.0 - dec_ratio) * static_cast<double>(n_tokens);
  // the 1e-9 guards against fp drift pushing an exact integer up a step
  const auto sample_size = static_cast<size_t>(std::ceil(exact - 1e-9));
  if (sample_size > n_tokens - 1)
    throw ContractError("build_visibility: sample size " + std::to_string(sample_size) +
                        " exceeds the " + std::to_string(n_tokens - 1) +
                        " non-self token columns; dec_ratio too low for N = " +
                        std::to_string(n_tokens));

  AttnVisibility vis;
  vis.n_tokens = n_tokens;
  vis.per_row_sample_size = sample_size;
  const size_t l = n_tokens + 1;
  vis.visible.assign(l * l, 0);

  std::vector<size_t> candidates;
  candidates.reserve(n_tokens);
  for (size_t row = 0; row < l; ++row) {
    candidates.clear();
    for (size_t col = 1; col < l; ++col)
      if (col != row) candidates.push_back(col);
    for (size_t k : rng.sample_without_replacement(candidates.size(), sample_size))
      vis.visible[row * l + candidates[k]] = 1;
    if (row != 0) vis.visible[row * l + 0] = 1;  // the embedding slot, except for row 0
  }
  return vis;
}

}  // namespace rmae
