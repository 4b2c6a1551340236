#include "dense_eval/metrics.hpp"

#include <algorithm>
#include <cstdio>
#include <numeric>
#include <vector>

#include "dense_eval/error.hpp"
#include "dense_eval/msmarco_io.hpp"

namespace dense_eval {

namespace {

struct QueryMetrics {
  double rr = 0.0;
  double recall = 0.0;
  double ap = 0.0;
  std::size_t relevant_retrieved = 0;
};

// Canonically ordered top-k view of `docs`.
std::vector<const ScoredDoc*> top_k(std::span<const ScoredDoc> docs, std::size_t k) {
  std::vector<const ScoredDoc*> order;
  order.reserve(docs.size());
  for (const auto& d : docs) order.push_back(&d);
  const std::size_t keep = std::min(k, order.size());
  std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(keep),
                    order.end(),
                    [](const ScoredDoc* a, const ScoredDoc* b) { return ranks_before(*a, *b); });
  order.resize(keep);
  return order;
}

bool is_relevant(const std::map<std::string, int>& judgments, const std::string& doc) {
  auto it = judgments.find(doc);
  return it != judgments.end() && it->second >= 1;
}

QueryMetrics evaluate_query(std::span<const ScoredDoc> docs,
                            const std::map<std::string, int>& judgments, std::size_t k) {
  const auto num_rel = static_cast<std::size_t>(std::count_if(
      judgments.begin(), judgments.end(), [](const auto& j) { return j.second >= 1; }));

  QueryMetrics m;
  double precision_sum = 0.0;
  const auto ranked = top_k(docs, k);
  for (std::size_t i = 0; i < ranked.size(); ++i) {
    if (!is_relevant(judgments, ranked[i]->doc_id)) continue;
    ++m.relevant_retrieved;
    if (m.relevant_retrieved == 1) m.rr = 1.0 / static_cast<double>(i + 1);
    precision_sum += static_cast<double>(m.relevant_retrieved) / static_cast<double>(i + 1);
  }
  if (num_rel > 0) {
    m.recall = static_cast<double>(m.relevant_retrieved) / static_cast<double>(num_rel);
    m.ap = precision_sum / static_cast<double>(num_rel);
  }
  return m;
}

std::string fixed(double value, int decimals) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", decimals, value);
  return buf;
}

std::string full(double value) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", value);
  return buf;
}

}  // namespace

std::string mrr_name(std::size_t k) { return "mrr@" + std::to_string(k); }
std::string recall_name(std::size_t k) { return "recall@" + std::to_string(k); }
std::string map_name(std::size_t k) { return "map@" + std::to_string(k); }

double EvalReport::mrr() const { return aggregates.at(mrr_name(cutoff)); }

double reciprocal_rank(std::span<const ScoredDoc> docs,
                       const std::map<std::string, int>& judgments, std::size_t k) {
  if (k == 0) throw UsageError("cutoff k must be >= 1");
  const auto ranked = top_k(docs, k);
  for (std::size_t i = 0; i < ranked.size(); ++i) {
    if (is_relevant(judgments, ranked[i]->doc_id)) return 1.0 / static_cast<double>(i + 1);
  }
  return 0.0;
}

double reciprocal_rank(const RankedList& list, const Qrels& qrels, std::size_t k) {
  auto it = qrels.judgments.find(list.query_id);
  if (it == qrels.judgments.end()) {
    throw DataError("query '" + list.query_id + "' has no judgments");
  }
  return reciprocal_rank(list.entries, it->second, k);
}

EvalReport evaluate(const RunFile& run, const Qrels& qrels, std::size_t k) {
  if (k == 0) throw UsageError("cutoff k must be >= 1");
  EvalReport report;
  report.cutoff = k;

  double rr_sum = 0.0;
  double recall_sum = 0.0;
  double ap_sum = 0.0;
  for (const auto& [qid, docs] : group_by_query(run)) {
    auto judged = qrels.judgments.find(qid);
    if (judged == qrels.judgments.end()) {
      ++report.num_queries_unjudged;
      continue;
    }
    const QueryMetrics m = evaluate_query(docs, judged->second, k);
    report.per_query_rr[qid] = m.rr;
    report.per_query_recall[qid] = m.recall;
    report.per_query_ap[qid] = m.ap;
    report.num_relevant_retrieved += m.relevant_retrieved;
    rr_sum += m.rr;
    recall_sum += m.recall;
    ap_sum += m.ap;
    ++report.num_queries_evaluated;
  }

  if (report.num_queries_evaluated == 0) {
    throw DataError("no run query has relevance judgments (" +
                    std::to_string(report.num_queries_unjudged) + " unjudged queries)");
  }
  const auto n = static_cast<double>(report.num_queries_evaluated);
  report.aggregates[mrr_name(k)] = rr_sum / n;
  report.aggregates[recall_name(k)] = recall_sum / n;
  report.aggregates[map_name(k)] = ap_sum / n;
  return report;
}

void write_text_report(const EvalReport& report, std::ostream& out) {
  const std::size_t k = report.cutoff;
  out << "num_q\t" << report.num_queries_evaluated << '\n';
  out << "num_unjudged\t" << report.num_queries_unjudged << '\n';
  out << "num_rel_ret\t" << report.num_relevant_retrieved << '\n';
  out << mrr_name(k) << '\t' << fixed(report.aggregates.at(mrr_name(k)), 4) << '\n';
  out << mrr_name(k) << "_pct\t" << fixed(100.0 * report.aggregates.at(mrr_name(k)), 2) << '\n';
  out << recall_name(k) << '\t' << fixed(report.aggregates.at(recall_name(k)), 4) << '\n';
  out << map_name(k) << '\t' << fixed(report.aggregates.at(map_name(k)), 4) << '\n';
}

void write_machine_report(const EvalReport& report, std::ostream& out) {
  out << "cutoff=" << report.cutoff << " num_q=" << report.num_queries_evaluated
      << " num_unjudged=" << report.num_queries_unjudged
      << " num_rel_ret=" << report.num_relevant_retrieved << '\n';
  for (const auto& [name, value] : report.aggregates) {
    out << "metric=" << name << " value=" << full(value) << '\n';
  }
  for (const auto& [qid, rr] : report.per_query_rr) {
    out << "query=" << qid << " recip_rank=" << full(rr)
        << " recall=" << full(report.per_query_recall.at(qid))
        << " ap=" << full(report.per_query_ap.at(qid)) << '\n';
  }
}

}  // namespace dense_eval
