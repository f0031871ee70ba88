#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <string_view>
#include <vector>

namespace rmae {

using TokenId = int32_t;

// The five special tokens occupy ids 0-4 in this fixed order.
inline constexpr TokenId kClsId = 0;
inline constexpr TokenId kSepId = 1;
inline constexpr TokenId kMaskId = 2;
inline constexpr TokenId kPadId = 3;
inline constexpr TokenId kUnkId = 4;
inline constexpr TokenId kIgnoreId = -1;  // MLM label marker for unmasked positions
inline constexpr size_t kNumSpecials = 5;

bool is_special(TokenId id);

// Word-level tokenizer: lowercased maximal runs of ASCII alphanumerics
// (bytes >= 0x80 pass through so non-ASCII words survive); everything else
// separates. This diverges from BERT's WordPiece on purpose — subword
// units add nothing at this scale.
std::vector<std::string> tokenize(std::string_view text);

class Vocab {
 public:
  Vocab();  // specials only

  TokenId id(const std::string& token) const;  // [UNK] fallback
  const std::string& token(TokenId id) const;
  bool contains(const std::string& token) const;
  size_t size() const { return id_to_token_.size(); }

  // Appends a non-special token; returns its id. Duplicates are rejected.
  TokenId add(const std::string& token);

  void save(const std::string& path) const;
  static Vocab load(const std::string& path);
  const std::vector<std::string>& tokens() const { return id_to_token_; }
  static Vocab from_tokens(const std::vector<std::string>& all_tokens);

  bool operator==(const Vocab& other) const { return id_to_token_ == other.id_to_token_; }

 private:
  std::map<std::string, TokenId> token_to_id_;
  std::vector<std::string> id_to_token_;
};

// Tokenized sentence: [CLS] w1 ... wn [SEP], length <= max_len, no [PAD]
// before [SEP].
struct TokenSequence {
  std::vector<TokenId> ids;

  size_t size() const { return ids.size(); }
  // word positions, i.e. everything between [CLS] and [SEP]
  size_t word_count() const { return ids.size() >= 2 ? ids.size() - 2 : 0; }
  bool operator==(const TokenSequence& other) const { return ids == other.ids; }
};

// Frequency-ranked vocabulary over a one-sentence-per-line corpus. Ties
// break lexicographically; max_size counts the specials.
Vocab build_vocab(const std::string& corpus_path, size_t max_size, size_t min_freq);

TokenSequence encode_sentence(std::string_view text, const Vocab& vocab, size_t max_len);

// Inverse of encode_sentence up to unknown words: specials are dropped,
// [UNK] decodes to its literal bracket form (which re-encodes to [UNK]).
std::string decode_sentence(const TokenSequence& seq, const Vocab& vocab);

}  // namespace rmae
