#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace rmae {

// Knobs for the synthetic two-domain corpus. The two domains use disjoint
// word inventories (different syllable alphabets), each organized into
// topics; retrieval judgments tie each query to the documents of its
// topic. This makes the in-domain gain / out-domain drift of continued
// pre-training measurable without external data.
struct FixtureConfig {
  uint64_t seed = 7;
  size_t topics = 12;
  size_t words_per_topic = 8;
  size_t train_sentences = 240;     // per domain
  size_t article_docs = 48;         // per domain, multi-sentence
  size_t corpus_docs_per_topic = 3; // retrieval collection
};

// Writes the fixture under out_dir and returns the created file paths:
//   {domain_a,domain_b}.train.txt        training sentences
//   vocab_corpus.txt                     both domains, for vocab building
//   {domain_a,domain_b}.docs.jsonl       documents for article pairs
//   {domain_a,domain_b}.corpus.txt       retrieval collection
//   {domain_a,domain_b}.queries.txt      held-out queries
//   {domain_a,domain_b}.judgments.jsonl  binary relevance
std::vector<std::string> make_fixture(const std::string& out_dir, const FixtureConfig& cfg);

}  // namespace rmae
