#include "corpus.hpp"

#include <cctype>
#include <fstream>

#include <json.hpp>

#include "error.hpp"

namespace rmae {

namespace {

std::ifstream open_or_throw(const std::string& path, const char* what) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError(std::string(what) + ": cannot read '" + path + "'");
  return in;
}

void strip_cr(std::string& line) {
  if (!line.empty() && line.back() == '\r') line.pop_back();
}

}  // namespace

std::vector<std::string> load_sentences(const std::string& path) {
  auto in = open_or_throw(path, "load_sentences");
  std::vector<std::string> out;
  std::string line;
  while (std::getline(in, line)) {
    strip_cr(line);
    if (!line.empty()) out.push_back(line);
  }
  if (in.bad()) throw IoError("load_sentences: read error in '" + path + "'");
  return out;
}

std::vector<Document> load_documents(const std::string& path, size_t* skipped) {
  auto in = open_or_throw(path, "load_documents");
  std::vector<Document> docs;
  size_t bad = 0;
  std::string line;
  while (std::getline(in, line)) {
    strip_cr(line);
    if (line.empty()) continue;
    auto rec = nlohmann::json::parse(line, nullptr, false);
    if (rec.is_discarded() || !rec.is_object() || !rec.contains("text") ||
        !rec["text"].is_string()) {
      ++bad;
      continue;
    }
    Document d;
    d.text = rec["text"].get<std::string>();
    d.sentences = split_sentences(d.text);
    docs.push_back(std::move(d));
  }
  if (in.bad()) throw IoError("load_documents: read error in '" + path + "'");
  if (skipped) *skipped = bad;
  return docs;
}

std::vector<std::string> split_sentences(const std::string& text) {
  std::vector<std::string> out;
  std::string cur;
  auto flush = [&] {
    size_t b = cur.find_first_not_of(" \t\n\r");
    if (b == std::string::npos) {
      cur.clear();
      return;
    }
    size_t e = cur.find_last_not_of(" \t\n\r");
    out.push_back(cur.substr(b, e - b + 1));
    cur.clear();
  };
  for (size_t i = 0; i < text.size(); ++i) {
    const char c = text[i];
    cur.push_back(c);
    if (c == '.' || c == '!' || c == '?') {
      size_t j = i;
      while (j + 1 < text.size() &&
             (text[j + 1] == '.' || text[j + 1] == '!' || text[j + 1] == '?')) {
        ++j;
        cur.push_back(text[j]);
      }
      if (j + 1 >= text.size() || std::isspace(static_cast<unsigned char>(text[j + 1]))) {
        flush();
      }
      i = j;
    }
  }
  flush();
  return out;
}

PairLoadResult load_pairs(const std::string& path, PairFormat format, const Vocab& vocab,
                          size_t max_len) {
  auto in = open_or_throw(path, "load_pairs");
  PairLoadResult result;
  size_t total = 0;
  std::string line;
  while (std::getline(in, line)) {
    strip_cr(line);
    ++total;
    std::string a, b;
    bool ok = false;
    if (format == PairFormat::TwoColumn) {
      const size_t tab = line.find('\t');
      if (tab != std::string::npos && tab > 0 && tab + 1 < line.size()) {
        a = line.substr(0, tab);
        b = line.substr(tab + 1);
        ok = true;
      }
    } else {
      auto rec = nlohmann::json::parse(line, nullptr, false);
      if (!rec.is_discarded() && rec.is_object() && rec.contains("a") && rec.contains("b") &&
          rec["a"].is_string() && rec["b"].is_string()) {
        a = rec["a"].get<std::string>();
        b = rec["b"].get<std::string>();
        ok = true;
      }
    }
    if (!ok) {
      ++result.skipped;
      continue;
    }
    SentencePair p;
    p.a = encode_sentence(a, vocab, max_len);
    p.b = encode_sentence(b, vocab, max_len);
    p.source = PairSource::NliPair;
    result.pairs.push_back(std::move(p));
  }
  if (in.bad()) throw IoError("load_pairs: read error in '" + path + "'");
  if (total > 0 && result.skipped * 2 > total)
    throw FormatError("load_pairs: " + std::to_string(result.skipped) + " of " +
                      std::to_string(total) + " lines malformed; wrong format flag for '" +
                      path + "'?");
  return result;
}

std::pair<size_t, size_t> sample_sentence_pair(size_t sentence_count, Rng& rng) {
  if (sentence_count < 2)
    throw ContractError("sample_sentence_pair: need >= 2 sentences");
  const size_t i = static_cast<size_t>(rng.uniform(sentence_count));
  size_t j = static_cast<size_t>(rng.uniform(sentence_count - 1));
  if (j >= i) ++j;
  return {i, j};
}

std::vector<SentencePair> make_article_pairs(const std::vector<Document>& docs, Rng& rng,
                                             const Vocab& vocab, size_t max_len) {
  std::vector<SentencePair> out;
  for (const auto& doc : docs) {
    if (doc.sentences.size() < 2) continue;
    auto [i, j] = sample_sentence_pair(doc.sentences.size(), rng);
    SentencePair p;
    p.a = encode_sentence(doc.sentences[i], vocab, max_len);
    p.b = encode_sentence(doc.sentences[j], vocab, max_len);
    p.source = PairSource::SameArticle;
    out.push_back(std::move(p));
  }
  return out;
}

}  // namespace rmae
