#include "fixture.hpp"

#include <filesystem>
#include <fstream>
#include <set>

#include <json.hpp>

#include "error.hpp"
#include "rng.hpp"

namespace rmae {

namespace {

struct Domain {
  std::vector<std::vector<std::string>> topic_words;  // [topic][word]
};

std::string make_word(const std::vector<std::string>& consonants,
                      const std::vector<std::string>& vowels, Rng& rng) {
  const size_t syllables = 2 + rng.uniform(2);  // 2-3
  std::string w;
  for (size_t s = 0; s < syllables; ++s) {
    w += consonants[rng.uniform(consonants.size())];
    w += vowels[rng.uniform(vowels.size())];
  }
  return w;
}

Domain make_domain(const std::vector<std::string>& consonants,
                   const std::vector<std::string>& vowels, const FixtureConfig& cfg,
                   Rng rng) {
  Domain d;
  std::set<std::string> used;
  d.topic_words.resize(cfg.topics);
  for (size_t t = 0; t < cfg.topics; ++t) {
    while (d.topic_words[t].size() < cfg.words_per_topic) {
      std::string w = make_word(consonants, vowels, rng);
      if (used.insert(w).second) d.topic_words[t].push_back(std::move(w));
    }
  }
  return d;
}

std::string topic_sentence(const Domain& d, size_t topic, size_t min_len, size_t max_len,
                           Rng& rng) {
  const auto& pool = d.topic_words[topic];
  const size_t len = min_len + rng.uniform(max_len - min_len + 1);
  std::string s;
  for (size_t i = 0; i < len; ++i) {
    if (!s.empty()) s.push_back(' ');
    s += pool[rng.uniform(pool.size())];
  }
  return s;
}

std::ofstream open_out(const std::string& path) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("make_fixture: cannot write '" + path + "'");
  return f;
}

void write_domain(const std::string& out_dir, const std::string& name, const Domain& d,
                  const FixtureConfig& cfg, Rng rng, std::vector<std::string>& written) {
  const std::string base = out_dir + "/" + name;

  {
    auto f = open_out(base + ".train.txt");
    Rng r = rng.child("train");
    for (size_t i = 0; i < cfg.train_sentences; ++i)
      f << topic_sentence(d, r.uniform(cfg.topics), 5, 9, r) << "\n";
    written.push_back(base + ".train.txt");
  }
  {
    auto f = open_out(base + ".docs.jsonl");
    Rng r = rng.child("docs");
    for (size_t i = 0; i < cfg.article_docs; ++i) {
      const size_t topic = r.uniform(cfg.topics);
      const size_t n_sent = 3 + r.uniform(3);  // 3-5 sentences
      std::string text;
      for (size_t s = 0; s < n_sent; ++s) {
        if (!text.empty()) text.push_back(' ');
        text += topic_sentence(d, topic, 5, 8, r) + ".";
      }
      f << nlohmann::json{{"text", text}}.dump() << "\n";
    }
    written.push_back(base + ".docs.jsonl");
  }
  {
    auto corpus = open_out(base + ".corpus.txt");
    auto queries = open_out(base + ".queries.txt");
    auto judg = open_out(base + ".judgments.jsonl");
    Rng r = rng.child("retrieval");
    int64_t doc_id = 0;
    for (size_t topic = 0; topic < cfg.topics; ++topic) {
      for (size_t k = 0; k < cfg.corpus_docs_per_topic; ++k) {
        corpus << topic_sentence(d, topic, 6, 8, r) << "\n";
        judg << nlohmann::json{{"query_id", static_cast<int64_t>(topic)},
                               {"doc_id", doc_id}}
                    .dump()
             << "\n";
        ++doc_id;
      }
      queries << topic_sentence(d, topic, 4, 6, r) << "\n";
    }
    written.push_back(base + ".corpus.txt");
    written.push_back(base + ".queries.txt");
    written.push_back(base + ".judgments.jsonl");
  }
}

}  // namespace

std::vector<std::string> make_fixture(const std::string& out_dir, const FixtureConfig& cfg) {
  if (cfg.topics < 1 || cfg.words_per_topic < 2)
    throw ConfigError("make_fixture: need >= 1 topic and >= 2 words per topic");
  std::filesystem::create_directories(out_dir);

  Rng master(cfg.seed);
  // disjoint syllable alphabets keep the two vocabularies disjoint
  const Domain a = make_domain({"b", "d", "g", "k", "l"}, {"a", "o", "u"}, cfg,
                               master.child("domain_a"));
  const Domain b = make_domain({"m", "n", "p", "r", "s", "t"}, {"e", "i"}, cfg,
                               master.child("domain_b"));

  std::vector<std::string> written;
  write_domain(out_dir, "domain_a", a, cfg, master.child("write_a"), written);
  write_domain(out_dir, "domain_b", b, cfg, master.child("write_b"), written);

  {
    // everything the vocabulary must cover, both domains
    auto f = open_out(out_dir + "/vocab_corpus.txt");
    for (const auto* d : {&a, &b})
      for (const auto& topic : d->topic_words) {
        std::string line;
        for (const auto& w : topic) {
          if (!line.empty()) line.push_back(' ');
          line += w;
        }
        f << line << "\n";
      }
    written.push_back(out_dir + "/vocab_corpus.txt");
  }
  return written;
}

}  // namespace rmae
