#include "eval.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <sstream>

#include <json.hpp>

#include "corpus.hpp"
#include "error.hpp"
#include "model.hpp"

namespace rmae {

std::vector<std::vector<int64_t>> retrieve(const Tensor& query_embs, const Tensor& doc_embs,
                                           int64_t k) {
  if (query_embs.ndim() != 2 || doc_embs.ndim() != 2 ||
      query_embs.cols() != doc_embs.cols())
    throw ContractError("retrieve: query and doc matrices must share the embedding dim");
  const int64_t q = query_embs.rows(), n = doc_embs.rows();
  if (k < 1 || k > n)
    throw ContractError("retrieve: k = " + std::to_string(k) + " with only " +
                        std::to_string(n) + " docs");
  const int64_t d = query_embs.cols();
  std::vector<std::vector<int64_t>> out(static_cast<size_t>(q));
  std::vector<double> scores(static_cast<size_t>(n));
  std::vector<int64_t> idx(static_cast<size_t>(n));
  for (int64_t qi = 0; qi < q; ++qi) {
    for (int64_t di = 0; di < n; ++di) {
      double s = 0.0;
      for (int64_t j = 0; j < d; ++j) s += query_embs.at(qi, j) * doc_embs.at(di, j);
      scores[static_cast<size_t>(di)] = s;
    }
    std::iota(idx.begin(), idx.end(), 0);
    std::sort(idx.begin(), idx.end(), [&](int64_t a, int64_t b) {
      if (scores[static_cast<size_t>(a)] != scores[static_cast<size_t>(b)])
        return scores[static_cast<size_t>(a)] > scores[static_cast<size_t>(b)];
      return a < b;
    });
    out[static_cast<size_t>(qi)].assign(idx.begin(), idx.begin() + k);
  }
  return out;
}

Metrics compute_metrics(const RetrievalRun& run, const MetricConfig& cfg) {
  if (run.query_ids.size() != run.rankings.size())
    throw ContractError("compute_metrics: query id / ranking count mismatch");
  Metrics m;
  for (int64_t k : cfg.recall_ks) m.recall[k] = 0.0;
  double mrr_sum = 0.0, ndcg_sum = 0.0;
  std::map<int64_t, double> recall_sum;
  for (int64_t k : cfg.recall_ks) recall_sum[k] = 0.0;

  for (size_t qi = 0; qi < run.query_ids.size(); ++qi) {
    auto it = run.judgments.find(run.query_ids[qi]);
    if (it == run.judgments.end() || it->second.empty()) {
      ++m.skipped_queries;
      continue;
    }
    const auto& rel = it->second;
    const auto& ranked = run.rankings[qi];

    // MRR@k: reciprocal rank of the first relevant hit within the cutoff
    double rr = 0.0;
    const size_t mrr_cut = std::min<size_t>(ranked.size(), static_cast<size_t>(cfg.mrr_k));
    for (size_t r = 0; r < mrr_cut; ++r) {
      if (rel.count(ranked[r])) {
        rr = 1.0 / static_cast<double>(r + 1);
        break;
      }
    }
    mrr_sum += rr;

    for (int64_t k : cfg.recall_ks) {
      const size_t cut = std::min<size_t>(ranked.size(), static_cast<size_t>(k));
      size_t hits = 0;
      for (size_t r = 0; r < cut; ++r)
        if (rel.count(ranked[r])) ++hits;
      recall_sum[k] += static_cast<double>(hits) / static_cast<double>(rel.size());
    }

    // NDCG@10, binary gains
    double dcg = 0.0;
    const size_t ndcg_cut = std::min<size_t>(ranked.size(), 10);
    for (size_t r = 0; r < ndcg_cut; ++r)
      if (rel.count(ranked[r])) dcg += 1.0 / std::log2(static_cast<double>(r + 2));
    double idcg = 0.0;
    const size_t ideal = std::min<size_t>(rel.size(), 10);
    for (size_t r = 0; r < ideal; ++r) idcg += 1.0 / std::log2(static_cast<double>(r + 2));
    ndcg_sum += dcg / idcg;

    ++m.evaluated_queries;
  }
  if (m.evaluated_queries == 0)
    throw ContractError("compute_metrics: every query lacks judged-relevant docs");
  const double n = static_cast<double>(m.evaluated_queries);
  m.mrr = mrr_sum / n;
  m.ndcg10 = ndcg_sum / n;
  for (int64_t k : cfg.recall_ks) m.recall[k] = recall_sum[k] / n;
  return m;
}

namespace {

// average ranks, ties share the mean of their positions (1-based)
std::vector<double> average_ranks(const std::vector<double>& v) {
  const size_t n = v.size();
  std::vector<size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  std::sort(idx.begin(), idx.end(), [&](size_t a, size_t b) { return v[a] < v[b]; });
  std::vector<double> ranks(n);
  size_t i = 0;
  while (i < n) {
    size_t j = i;
    while (j + 1 < n && v[idx[j + 1]] == v[idx[i]]) ++j;
    const double avg = (static_cast<double>(i + 1) + static_cast<double>(j + 1)) / 2.0;
    for (size_t t = i; t <= j; ++t) ranks[idx[t]] = avg;
    i = j + 1;
  }
  return ranks;
}

double pearson(const std::vector<double>& x, const std::vector<double>& y) {
  const double n = static_cast<double>(x.size());
  double mx = 0.0, my = 0.0;
  for (size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (sxx == 0.0 || syy == 0.0)
    throw NumericError("spearman: correlation undefined for a constant input vector");
  return sxy / std::sqrt(sxx * syy);
}

}  // namespace

double spearman(const std::vector<double>& preds, const std::vector<double>& golds) {
  if (preds.size() != golds.size())
    throw ContractError("spearman: length mismatch " + std::to_string(preds.size()) +
                        " vs " + std::to_string(golds.size()));
  if (preds.size() < 2) throw ContractError("spearman: need at least 2 points");
  return pearson(average_ranks(preds), average_ranks(golds));
}

Judgments load_judgments(const std::string& path, size_t* skipped) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("judgments: cannot read '" + path + "'");
  Judgments out;
  size_t bad = 0;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    auto rec = nlohmann::json::parse(line, nullptr, false);
    if (rec.is_discarded() || !rec.is_object() || !rec.contains("query_id") ||
        !rec.contains("doc_id") || !rec["query_id"].is_number_integer() ||
        !rec["doc_id"].is_number_integer()) {
      ++bad;
      continue;
    }
    out[rec["query_id"].get<int64_t>()].insert(rec["doc_id"].get<int64_t>());
  }
  if (in.bad()) throw IoError("judgments: read error in '" + path + "'");
  if (skipped) *skipped = bad;
  if (out.empty()) throw FormatError("judgments: no valid records in '" + path + "'");
  return out;
}

TwoDomainFixture discover_fixture(const std::string& dir) {
  namespace fs = std::filesystem;
  auto domain = [&](const std::string& name) {
    DomainFiles f;
    f.corpus = dir + "/" + name + ".corpus.txt";
    f.queries = dir + "/" + name + ".queries.txt";
    f.judgments = dir + "/" + name + ".judgments.jsonl";
    for (const auto& p : {f.corpus, f.queries, f.judgments})
      if (!fs::exists(p))
        throw ContractError("fixture: missing '" + p + "' (domain " + name + ")");
    return f;
  };
  TwoDomainFixture fx;
  fx.domain_a = domain("domain_a");
  fx.domain_b = domain("domain_b");
  return fx;
}

namespace {

DomainMetrics eval_domain(const Checkpoint& ckpt, const DomainFiles& files) {
  auto docs = load_sentences(files.corpus);
  auto queries = load_sentences(files.queries);
  auto judgments = load_judgments(files.judgments);
  ModelParams params = ckpt.params.clone();
  Tensor doc_embs = embed_sentences(docs, params, ckpt.vocab);
  Tensor query_embs = embed_sentences(queries, params, ckpt.vocab);

  RetrievalRun run;
  const int64_t k = std::min<int64_t>(10, doc_embs.rows());
  run.rankings = retrieve(query_embs, doc_embs, k);
  run.query_ids.resize(queries.size());
  std::iota(run.query_ids.begin(), run.query_ids.end(), 0);
  run.judgments = judgments;

  MetricConfig mcfg;
  mcfg.mrr_k = 10;
  mcfg.recall_ks = {5};
  Metrics m = compute_metrics(run, mcfg);
  return {m.recall.at(5), m.mrr};
}

}  // namespace

TwoDomainReport eval_two_domain(const Checkpoint& base, const Checkpoint& stage2,
                                const TwoDomainFixture& fixture) {
  TwoDomainReport r;
  r.base_on_a = eval_domain(base, fixture.domain_a);
  r.base_on_b = eval_domain(base, fixture.domain_b);
  r.stage2_on_a = eval_domain(stage2, fixture.domain_a);
  r.stage2_on_b = eval_domain(stage2, fixture.domain_b);
  r.delta_in_domain_recall5 = r.stage2_on_b.recall5 - r.base_on_b.recall5;
  r.delta_in_domain_mrr10 = r.stage2_on_b.mrr10 - r.base_on_b.mrr10;
  r.delta_out_domain_recall5 = r.stage2_on_a.recall5 - r.base_on_a.recall5;
  r.delta_out_domain_mrr10 = r.stage2_on_a.mrr10 - r.base_on_a.mrr10;
  return r;
}

std::string render_two_domain_table(const TwoDomainReport& r) {
  char buf[512];
  std::ostringstream os;
  os << "model    domain    recall@5   mrr@10\n";
  os << "-------  --------  ---------  ---------\n";
  auto row = [&](const char* model, const char* domain, const DomainMetrics& m) {
    std::snprintf(buf, sizeof(buf), "%-7s  %-8s  %9.4f  %9.4f\n", model, domain, m.recall5,
                  m.mrr10);
    os << buf;
  };
  row("base", "A (out)", r.base_on_a);
  row("base", "B (in)", r.base_on_b);
  row("stage2", "A (out)", r.stage2_on_a);
  row("stage2", "B (in)", r.stage2_on_b);
  std::snprintf(buf, sizeof(buf), "\nin-domain  delta: recall@5 %+.4f  mrr@10 %+.4f\n",
                r.delta_in_domain_recall5, r.delta_in_domain_mrr10);
  os << buf;
  std::snprintf(buf, sizeof(buf), "out-domain delta: recall@5 %+.4f  mrr@10 %+.4f\n",
                r.delta_out_domain_recall5, r.delta_out_domain_mrr10);
  os << buf;
  return os.str();
}

std::string two_domain_report_json(const TwoDomainReport& r) {
  nlohmann::json j;
  auto cell = [](const DomainMetrics& m) {
    return nlohmann::json{{"recall_at_5", m.recall5}, {"mrr_at_10", m.mrr10}};
  };
  j["base"] = {{"domain_a", cell(r.base_on_a)}, {"domain_b", cell(r.base_on_b)}};
  j["stage2"] = {{"domain_a", cell(r.stage2_on_a)}, {"domain_b", cell(r.stage2_on_b)}};
  j["delta"] = {{"in_domain",
                 {{"recall_at_5", r.delta_in_domain_recall5}, {"mrr_at_10", r.delta_in_domain_mrr10}}},
                {"out_domain",
                 {{"recall_at_5", r.delta_out_domain_recall5}, {"mrr_at_10", r.delta_out_domain_mrr10}}}};
  return j.dump(2);
}

}  // namespace rmae
