#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <istream>
#include <ostream>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "dense_eval/embed_store.hpp"

namespace dense_eval {

struct KMeansOptions {
  std::size_t k = 0;
  std::uint64_t seed = 0;
  std::size_t max_iters = 100;
  // Stop once one Lloyd step improves inertia by less than this.
  double tol = 1e-6;
  // L2-normalize query vectors before clustering.
  bool normalize = false;
  std::size_t threads = 1;
};

/// k-means topics over query embeddings.
struct TopicClustering {
  std::size_t k = 0;
  std::size_t dim = 0;
  std::uint64_t seed = 0;
  std::vector<float> centroids;  // k x dim, row-major
  std::vector<std::string> query_ids;
  std::vector<std::uint32_t> topic_of;  // parallel to query_ids
  double inertia = 0.0;
  // inertia after the initial assignment and after every Lloyd step.
  std::vector<double> inertia_history;
  std::size_t iterations_run = 0;

  std::span<const float> centroid(std::size_t topic) const {
    return std::span<const float>(centroids).subspan(topic * dim, dim);
  }

  /// Query indices per topic, each list in ascending index order.
  std::vector<std::vector<std::size_t>> members() const;
};

/// k-means++ seeding followed by Lloyd iterations. Squared Euclidean
/// distance; assignment ties go to the lowest topic index. An empty cluster
/// is re-seeded with the point farthest from its current centroid.
/// Deterministic for fixed inputs regardless of options.threads.
TopicClustering kmeans(const EmbeddingStore& queries, const KMeansOptions& options);

/// Same, over an in-memory row-major matrix.
TopicClustering kmeans(std::span<const std::string> ids, std::span<const float> matrix,
                       std::size_t dim, const KMeansOptions& options);

struct BatchSpec {
  std::size_t batch_size = 0;       // b
  std::size_t topics_per_batch = 0;  // n

  std::size_t per_topic() const { return batch_size / topics_per_batch; }
};

enum class TopicPolicy {
  // Fewer than n topics with floor(b/n) members is an error.
  strict,
  // Fall back to drawing topics with replacement from all non-empty topics.
  relaxed,
};

TopicPolicy parse_topic_policy(std::string_view name);

struct Batch {
  std::vector<std::uint32_t> topic_ids;
  std::vector<std::string> query_ids;
  // Slot s holds query_ids drawn from topic_ids[s].
  std::vector<std::size_t> slot_sizes;
  // b - |query_ids|: floor(b/n) never pads up to b.
  std::size_t shortfall = 0;
  bool relaxed = false;
};

/// Picks n distinct topics uniformly among topics holding at least
/// floor(b/n) queries, then floor(b/n) queries uniformly without replacement
/// from each. Pure given `seed`.
Batch compose_batch(const TopicClustering& clustering, const BatchSpec& spec,
                    std::uint64_t seed, TopicPolicy policy = TopicPolicy::strict);

/// Seed for batch `index` of a sequence started from `seed`.
std::uint64_t batch_seed(std::uint64_t seed, std::uint64_t index);

// Clustering text file: "k dim seed", then k centroid lines, then one
// "query_id topic" line per query.
void write_clustering(const TopicClustering& clustering, std::ostream& out);
TopicClustering read_clustering(std::istream& in, std::string_view source = "<clustering>");

// Batch line: "index t1,t2,... q1,q2,..."
void write_batch(std::size_t index, const Batch& batch, std::ostream& out);

}  // namespace dense_eval
