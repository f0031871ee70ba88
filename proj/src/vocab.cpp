#include "vocab.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <map>

#include "error.hpp"

namespace rmae {

namespace {
const std::vector<std::string> kSpecialTokens = {"[CLS]", "[SEP]", "[M]", "[PAD]", "[UNK]"};
}

bool is_special(TokenId id) { return id >= 0 && id < static_cast<TokenId>(kNumSpecials); }

std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> out;
  std::string cur;
  for (unsigned char c : text) {
    if (std::isalnum(c) || c >= 0x80) {
      cur.push_back(static_cast<char>(std::tolower(c)));
    } else if (!cur.empty()) {
      out.push_back(std::move(cur));
      cur.clear();
    }
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

Vocab::Vocab() {
  for (const auto& tok : kSpecialTokens) {
    token_to_id_[tok] = static_cast<TokenId>(id_to_token_.size());
    id_to_token_.push_back(tok);
  }
}

TokenId Vocab::id(const std::string& token) const {
  auto it = token_to_id_.find(token);
  return it == token_to_id_.end() ? kUnkId : it->second;
}

const std::string& Vocab::token(TokenId id) const {
  if (id < 0 || id >= static_cast<TokenId>(id_to_token_.size()))
    throw ContractError("vocab: id " + std::to_string(id) + " out of range");
  return id_to_token_[static_cast<size_t>(id)];
}

bool Vocab::contains(const std::string& token) const {
  return token_to_id_.count(token) > 0;
}

TokenId Vocab::add(const std::string& token) {
  if (token_to_id_.count(token))
    throw ContractError("vocab: duplicate token '" + token + "'");
  const TokenId id = static_cast<TokenId>(id_to_token_.size());
  token_to_id_[token] = id;
  id_to_token_.push_back(token);
  return id;
}

void Vocab::save(const std::string& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("vocab: cannot write '" + path + "'");
  for (const auto& tok : id_to_token_) out << tok << "\n";
  if (!out) throw IoError("vocab: write failed for '" + path + "'");
}

Vocab Vocab::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("vocab: cannot read '" + path + "'");
  std::vector<std::string> tokens;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    tokens.push_back(line);
  }
  return from_tokens(tokens);
}

Vocab Vocab::from_tokens(const std::vector<std::string>& all_tokens) {
  if (all_tokens.size() < kNumSpecials)
    throw FormatError("vocab: fewer than " + std::to_string(kNumSpecials) + " entries");
  for (size_t i = 0; i < kNumSpecials; ++i)
    if (all_tokens[i] != kSpecialTokens[i])
      throw FormatError("vocab: entry " + std::to_string(i) + " must be " +
                        kSpecialTokens[i] + ", got '" + all_tokens[i] + "'");
  Vocab v;
  for (size_t i = kNumSpecials; i < all_tokens.size(); ++i) v.add(all_tokens[i]);
  return v;
}

Vocab build_vocab(const std::string& corpus_path, size_t max_size, size_t min_freq) {
  if (max_size < kNumSpecials + 1)
    throw ConfigError("build_vocab: max_size must be at least " +
                      std::to_string(kNumSpecials + 1) + " (specials plus one word)");
  std::ifstream in(corpus_path, std::ios::binary);
  if (!in) throw IoError("build_vocab: cannot read '" + corpus_path + "'");

  std::map<std::string, uint64_t> freq;
  std::string line;
  while (std::getline(in, line)) {
    for (auto& tok : tokenize(line)) ++freq[tok];
  }
  if (in.bad()) throw IoError("build_vocab: read error in '" + corpus_path + "'");

  std::vector<std::pair<std::string, uint64_t>> ranked(freq.begin(), freq.end());
  std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });

  Vocab v;
  for (const auto& [tok, count] : ranked) {
    if (count < min_freq) continue;
    if (v.size() >= max_size) break;
    v.add(tok);
  }
  return v;
}

TokenSequence encode_sentence(std::string_view text, const Vocab& vocab, size_t max_len) {
  if (max_len < 3) throw ConfigError("encode_sentence: max_len must be >= 3");
  TokenSequence seq;
  auto words = tokenize(text);
  if (words.size() > max_len - 2) words.resize(max_len - 2);  // keep [SEP] last
  seq.ids.reserve(words.size() + 2);
  seq.ids.push_back(kClsId);
  for (const auto& w : words) seq.ids.push_back(vocab.id(w));
  seq.ids.push_back(kSepId);
  return seq;
}

std::string decode_sentence(const TokenSequence& seq, const Vocab& vocab) {
  std::string out;
  for (TokenId id : seq.ids) {
    if (id == kClsId || id == kSepId || id == kPadId) continue;
    if (!out.empty()) out.push_back(' ');
    out += vocab.token(id);
  }
  return out;
}

}  // namespace rmae
