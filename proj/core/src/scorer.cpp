#include "dense_eval/scorer.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_set>

#include "dense_eval/error.hpp"
#include "dense_eval/parallel.hpp"

namespace dense_eval {

namespace {

void check_dims(std::span<const float> u, std::span<const float> v) {
  if (u.size() != v.size()) {
    throw DataError("dimension mismatch: " + std::to_string(u.size()) + " vs " +
                    std::to_string(v.size()));
  }
  if (u.empty()) throw DataError("empty vectors");
}

}  // namespace

Metric parse_metric(std::string_view name) {
  if (name == "dot") return Metric::dot;
  if (name == "cosine") return Metric::cosine;
  throw UsageError("unknown metric '" + std::string(name) + "' (expected dot|cosine)");
}

std::string_view to_string(Metric metric) {
  return metric == Metric::dot ? "dot" : "cosine";
}

MissingPolicy parse_missing_policy(std::string_view name) {
  if (name == "fail") return MissingPolicy::fail;
  if (name == "skip") return MissingPolicy::skip;
  throw UsageError("unknown missing-embedding policy '" + std::string(name) +
                   "' (expected fail|skip)");
}

double dot(std::span<const float> u, std::span<const float> v) {
  check_dims(u, v);
  double sum = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) {
    sum += static_cast<double>(u[i]) * static_cast<double>(v[i]);
  }
  return sum;
}

double l2_norm(std::span<const float> u) {
  double sum = 0.0;
  for (float x : u) sum += static_cast<double>(x) * static_cast<double>(x);
  return std::sqrt(sum);
}

double cosine(std::span<const float> u, std::span<const float> v) {
  check_dims(u, v);
  const double nu = l2_norm(u);
  const double nv = l2_norm(v);
  if (nu == 0.0 || nv == 0.0) throw DataError("cosine: zero-norm vector");
  return dot(u, v) / (nu * nv);
}

double similarity(Metric metric, std::span<const float> u, std::span<const float> v) {
  return metric == Metric::dot ? dot(u, v) : cosine(u, v);
}

RankedList rerank_query(std::string_view query_id, std::span<const float> query_vec,
                        std::span<const std::string> candidates,
                        const EmbeddingStore& docs, const RerankOptions& options) {
  if (options.k == 0) throw UsageError("rerank: k must be >= 1");
  if (query_vec.size() != docs.dim()) {
    throw DataError("query '" + std::string(query_id) + "' has dim " +
                    std::to_string(query_vec.size()) + ", document store has dim " +
                    std::to_string(docs.dim()));
  }

  RankedList out;
  out.query_id = query_id;
  out.cutoff = options.k;

  std::vector<ScoredDoc> scored;
  scored.reserve(candidates.size());
  std::unordered_set<std::string_view> seen;
  seen.reserve(candidates.size());
  std::vector<float> row(docs.dim());

  for (const auto& doc_id : candidates) {
    if (!seen.insert(doc_id).second) {
      throw DataError("duplicate candidate '" + doc_id + "'");
    }
    const std::size_t r = docs.find(doc_id);
    if (r == EmbeddingStore::npos) {
      if (options.missing == MissingPolicy::skip) {
        ++out.skipped;
        continue;
      }
      throw LookupError(doc_id);
    }
    docs.copy_row(r, row);
    const double score = similarity(options.metric, query_vec, row);
    if (!std::isfinite(score)) {
      throw DataError("non-finite score for document '" + doc_id + "'");
    }
    scored.push_back({doc_id, score});
  }

  const std::size_t keep = std::min(options.k, scored.size());
  auto order = [](const ScoredDoc& a, const ScoredDoc& b) { return ranks_before(a, b); };
  std::partial_sort(scored.begin(), scored.begin() + static_cast<std::ptrdiff_t>(keep),
                    scored.end(), order);
  scored.resize(keep);
  out.entries = std::move(scored);
  return out;
}

RerankResult rerank_all(const EmbeddingStore& queries, const CandidateSet& candidate_sets,
                        const EmbeddingStore& docs, const RerankOptions& options) {
  if (queries.dim() != docs.dim()) {
    throw DataError("query store dim " + std::to_string(queries.dim()) +
                    " != document store dim " + std::to_string(docs.dim()));
  }

  // std::map iteration gives ascending query id order.
  std::vector<const std::pair<const std::string, std::vector<std::string>>*> work;
  work.reserve(candidate_sets.candidates.size());
  for (const auto& entry : candidate_sets.candidates) work.push_back(&entry);

  RerankResult result;
  result.lists.resize(work.size());
  parallel_for(work.size(), options.threads, [&](std::size_t i) {
    const auto& [qid, cands] = *work[i];
    if (!queries.contains(qid)) throw DataError("query '" + qid + "': no query embedding");
    try {
      const std::vector<float> qvec = queries.get_vector(qid);
      result.lists[i] = rerank_query(qid, qvec, cands, docs, options);
    } catch (const LookupError& e) {
      throw DataError("query '" + qid + "': missing document embedding '" + e.id() + "'");
    } catch (const DataError& e) {
      throw DataError("query '" + qid + "': " + e.what());
    }
  });

  for (const auto& list : result.lists) result.skipped_candidates += list.skipped;
  return result;
}

}  // namespace dense_eval
