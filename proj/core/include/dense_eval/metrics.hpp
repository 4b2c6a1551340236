#pragma once

#include <cstddef>
#include <map>
#include <ostream>
#include <span>
#include <string>

#include "dense_eval/types.hpp"

namespace dense_eval {

/// Result of evaluating a run against qrels at cutoff k.
///
/// Only queries that appear in both the run and the qrels are evaluated
/// (trec_eval's default). Aggregates are plain means over evaluated queries,
/// summed in ascending query id order.
struct EvalReport {
  std::size_t cutoff = 0;
  std::size_t num_queries_evaluated = 0;
  // Run queries without any judgments; excluded from every aggregate.
  std::size_t num_queries_unjudged = 0;
  std::size_t num_relevant_retrieved = 0;
  std::map<std::string, double> per_query_rr;
  std::map<std::string, double> per_query_recall;
  std::map<std::string, double> per_query_ap;
  // "mrr@k", "recall@k", "map@k".
  std::map<std::string, double> aggregates;

  double mrr() const;
};

/// Metric names used as aggregate keys, e.g. "mrr@100".
std::string mrr_name(std::size_t k);
std::string recall_name(std::size_t k);
std::string map_name(std::size_t k);

/// Re-sorts `docs` by (score desc, doc_id desc), ignoring any stated ranks,
/// truncates at k, and returns 1/r for the first document with grade >= 1,
/// or 0 if there is none.
double reciprocal_rank(std::span<const ScoredDoc> docs,
                       const std::map<std::string, int>& judgments, std::size_t k);

double reciprocal_rank(const RankedList& list, const Qrels& qrels, std::size_t k);

/// Throws DataError if no run query has judgments.
EvalReport evaluate(const RunFile& run, const Qrels& qrels, std::size_t k = 100);

/// trec_eval-style text: "name\tvalue" per line, 4 decimals.
void write_text_report(const EvalReport& report, std::ostream& out);

/// Line-delimited key=value records, full precision:
///   metric=mrr@100 value=0.37561234
///   query=1048554 recip_rank=0.5 recall=1 ap=0.5
void write_machine_report(const EvalReport& report, std::ostream& out);

}  // namespace dense_eval
