#pragma once

#include <cstddef>
#include <map>
#include <string>
#include <vector>

namespace dense_eval {

struct ScoredDoc {
  std::string doc_id;
  double score = 0.0;

  friend bool operator==(const ScoredDoc&, const ScoredDoc&) = default;
};

/// Canonical ranking order: score descending, then doc_id descending. This is
/// the order trec_eval re-sorts runs into before evaluating them.
inline bool ranks_before(double score_a, const std::string& doc_a, double score_b,
                         const std::string& doc_b) {
  if (score_a != score_b) return score_a > score_b;
  return doc_a > doc_b;
}

inline bool ranks_before(const ScoredDoc& a, const ScoredDoc& b) {
  return ranks_before(a.score, a.doc_id, b.score, b.doc_id);
}

/// Reranked candidates for one query, in canonical ranking order.
struct RankedList {
  std::string query_id;
  std::vector<ScoredDoc> entries;
  std::size_t cutoff = 0;
  // Candidates dropped because their embedding was missing (skip policy).
  std::size_t skipped = 0;

  friend bool operator==(const RankedList&, const RankedList&) = default;
};

/// First-stage candidates per query, in file order.
struct CandidateSet {
  std::map<std::string, std::vector<std::string>> candidates;
  // Repeated (qid, docid) lines dropped while parsing.
  std::size_t duplicates_dropped = 0;
};

/// Relevance judgments: query_id -> doc_id -> grade. Grade >= 1 is relevant.
struct Qrels {
  std::map<std::string, std::map<std::string, int>> judgments;

  bool has_query(const std::string& qid) const { return judgments.contains(qid); }
};

struct RunRecord {
  std::string query_id;
  std::string doc_id;
  std::size_t rank = 0;
  double score = 0.0;
  std::string tag;

  friend bool operator==(const RunRecord&, const RunRecord&) = default;
};

/// TREC run: records in file order.
struct RunFile {
  std::vector<RunRecord> records;
};

}  // namespace dense_eval
