#pragma once

#include <cstdint>
#include <vector>

#include "rng.hpp"
#include "tensor.hpp"
#include "vocab.hpp"

namespace rmae {

// A token sequence after mask pollution: ids carry [M] at the chosen
// positions, mlm_labels carry the original id there and kIgnoreId
// everywhere else. [CLS]/[SEP]/[PAD] are never masked.
struct MaskedInput {
  std::vector<TokenId> ids;
  std::vector<TokenId> mlm_labels;
  double mask_ratio = 0.0;

  size_t masked_count() const {
    size_t n = 0;
    for (TokenId l : mlm_labels)
      if (l != kIgnoreId) ++n;
    return n;
  }
};

// Positions eligible for masking (everything but [CLS]/[SEP]/[PAD]).
std::vector<size_t> maskable_positions(const TokenSequence& seq);

// Exactly max(1, round(ratio * maskable_count)) positions replaced by [M],
// drawn uniformly without replacement. Exact-count rather than Bernoulli
// masking keeps tests deterministic in distributional structure.
MaskedInput mask_for_encoder(const TokenSequence& seq, double ratio, Rng& rng);

// Same contract with the aggressive decoder ratio. The draw stream must be
// independent of the encoder's: the input is polluted again, not re-used.
MaskedInput mask_for_decoder(const TokenSequence& seq, double ratio, Rng& rng);

// Position-specific attention visibility over L = n_tokens + 1 slots (the
// sentence-embedding slot at index 0 plus the tokens). Per row, a fresh
// uniform sample of per_row_sample_size = ceil((1 - dec_ratio) * N) token
// columns excluding the row's own position; column 0 is visible for every
// row but the first; the whole diagonal is masked so no token attends to
// itself.
struct AttnVisibility {
  size_t n_tokens = 0;             // N
  size_t per_row_sample_size = 0;  // visible token columns per row
  std::vector<uint8_t> visible;    // (N+1)^2 row-major, 1 = can attend

  size_t dim() const { return n_tokens + 1; }
  bool is_visible(size_t i, size_t j) const { return visible[i * dim() + j] != 0; }
  // additive mask: 0 where visible, the -inf sentinel where masked
  Tensor to_additive() const;
};

AttnVisibility build_visibility(size_t n_tokens, double dec_ratio, Rng& rng);

}  // namespace rmae
