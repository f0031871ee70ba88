#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "rng.hpp"
#include "vocab.hpp"

namespace rmae {

enum class PairSource { NliPair, SameArticle, QueryPassage };

struct SentencePair {
  TokenSequence a;
  TokenSequence b;
  PairSource source = PairSource::NliPair;
};

enum class PairFormat { TwoColumn, Record };

struct PairLoadResult {
  std::vector<SentencePair> pairs;
  size_t skipped = 0;  // malformed lines
};

// One sentence per line, blank lines dropped.
std::vector<std::string> load_sentences(const std::string& path);

struct Document {
  std::string text;
  std::vector<std::string> sentences;
};

// Record-per-line documents ({"text": ...}); malformed lines are counted
// into *skipped when given.
std::vector<Document> load_documents(const std::string& path, size_t* skipped = nullptr);

// Crude but deterministic: sentence boundaries at runs of . ! ? followed
// by whitespace or end of text.
std::vector<std::string> split_sentences(const std::string& text);

// Tab-separated "a<TAB>b" lines or records with fields a and b. Malformed
// lines are skipped with a count; more than half malformed raises a format
// error (the format flag is probably wrong).
PairLoadResult load_pairs(const std::string& path, PairFormat format, const Vocab& vocab,
                          size_t max_len);

// Uniform unordered pick of two distinct sentence slots, order randomized.
std::pair<size_t, size_t> sample_sentence_pair(size_t sentence_count, Rng& rng);

// One pair per document holding >= 2 sentences; members always come from
// the same document.
std::vector<SentencePair> make_article_pairs(const std::vector<Document>& docs, Rng& rng,
                                             const Vocab& vocab, size_t max_len);

}  // namespace rmae
