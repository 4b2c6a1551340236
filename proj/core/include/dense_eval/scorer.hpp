#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "dense_eval/embed_store.hpp"
#include "dense_eval/types.hpp"

namespace dense_eval {

enum class Metric { dot, cosine };

/// What to do when a candidate has no document embedding.
enum class MissingPolicy { fail, skip };

Metric parse_metric(std::string_view name);
std::string_view to_string(Metric metric);
MissingPolicy parse_missing_policy(std::string_view name);

/// Inner product accumulated in double, left to right.
double dot(std::span<const float> u, std::span<const float> v);

double l2_norm(std::span<const float> u);

/// dot(u, v) / (|u| |v|). Throws DataError on a zero-norm input.
double cosine(std::span<const float> u, std::span<const float> v);

double similarity(Metric metric, std::span<const float> u, std::span<const float> v);

struct RerankOptions {
  Metric metric = Metric::dot;
  std::size_t k = 1000;
  MissingPolicy missing = MissingPolicy::fail;
  std::size_t threads = 1;
};

/// Scores every candidate against `query_vec` and keeps the top k in
/// canonical order (score desc, doc_id desc). Pure; safe to call
/// concurrently on a shared store.
RankedList rerank_query(std::string_view query_id, std::span<const float> query_vec,
                        std::span<const std::string> candidates,
                        const EmbeddingStore& docs, const RerankOptions& options);

struct RerankResult {
  // One list per query, ordered by ascending query id.
  std::vector<RankedList> lists;
  std::size_t skipped_candidates = 0;
};

/// Reranks every query of `candidate_sets`. Output does not depend on
/// options.threads. Errors are rethrown tagged with the query id.
RerankResult rerank_all(const EmbeddingStore& queries, const CandidateSet& candidate_sets,
                        const EmbeddingStore& docs, const RerankOptions& options);

}  // namespace dense_eval
