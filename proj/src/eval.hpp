#pragma once

#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "checkpoint.hpp"
#include "tensor.hpp"

namespace rmae {

using Judgments = std::map<int64_t, std::set<int64_t>>;  // query id -> relevant doc ids

struct RetrievalRun {
  std::vector<int64_t> query_ids;
  std::vector<std::vector<int64_t>> rankings;  // top-k doc ids per query, best first
  Judgments judgments;
};

// Exact top-k by cosine over L2-normalized rows (full scan, no index);
// ties break toward the smaller doc id so rankings are deterministic.
std::vector<std::vector<int64_t>> retrieve(const Tensor& query_embs, const Tensor& doc_embs,
                                           int64_t k);

struct MetricConfig {
  int64_t mrr_k = 10;
  std::vector<int64_t> recall_ks = {5, 10};
};

struct Metrics {
  double mrr = 0.0;                 // @ MetricConfig::mrr_k
  std::map<int64_t, double> recall; // per configured k
  double ndcg10 = 0.0;              // binary gains, log2 discount, ideal-normalized
  size_t evaluated_queries = 0;
  size_t skipped_queries = 0;       // queries with no judged-relevant docs
};

Metrics compute_metrics(const RetrievalRun& run, const MetricConfig& cfg = {});

// Spearman rank correlation with average ranks for ties. Constant inputs
// have no defined correlation and raise an error.
double spearman(const std::vector<double>& preds, const std::vector<double>& golds);

// Record-per-line {"query_id": q, "doc_id": d}, one relevant pair per line.
Judgments load_judgments(const std::string& path, size_t* skipped = nullptr);

// ---- two-domain probe -------------------------------------------------------

struct DomainFiles {
  std::string corpus;     // one doc per line; doc id = line index
  std::string queries;    // one query per line; query id = line index
  std::string judgments;  // relevance records
};

struct TwoDomainFixture {
  DomainFiles domain_a;
  DomainFiles domain_b;
};

// Resolves the fixture layout written by the fixture generator; missing
// files raise a fixture error.
TwoDomainFixture discover_fixture(const std::string& dir);

struct DomainMetrics {
  double recall5 = 0.0;
  double mrr10 = 0.0;
};

struct TwoDomainReport {
  DomainMetrics base_on_a, base_on_b;
  DomainMetrics stage2_on_a, stage2_on_b;
  double delta_in_domain_recall5 = 0.0;   // stage2 - base on domain B
  double delta_in_domain_mrr10 = 0.0;
  double delta_out_domain_recall5 = 0.0;  // stage2 - base on domain A
  double delta_out_domain_mrr10 = 0.0;
};

// In-domain vs out-domain comparison of two checkpoints over the synthetic
// fixture: domain B is the stage-2 domain, domain A the stage-1 domain.
TwoDomainReport eval_two_domain(const Checkpoint& base, const Checkpoint& stage2,
                                const TwoDomainFixture& fixture);

std::string render_two_domain_table(const TwoDomainReport& r);
std::string two_domain_report_json(const TwoDomainReport& r);

}  // namespace rmae
