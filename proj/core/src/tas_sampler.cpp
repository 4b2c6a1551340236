#include "dense_eval/tas_sampler.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <limits>
#include <random>
#include <sstream>

#include "dense_eval/error.hpp"
#include "dense_eval/parallel.hpp"

namespace dense_eval {

namespace {

// std::mt19937_64 has a standardized output sequence; the distributions in
// <random> do not, so draws are derived from raw outputs here.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  double uniform01() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  std::size_t index(std::size_t n) {
    const std::uint64_t range = n;
    const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                                std::numeric_limits<std::uint64_t>::max() % range;
    std::uint64_t x;
    do {
      x = engine_();
    } while (x >= limit);
    return static_cast<std::size_t>(x % range);
  }

  // Moves a uniform sample of `count` elements to the front of `pool`.
  template <typename T>
  void partial_shuffle(std::vector<T>& pool, std::size_t count) {
    for (std::size_t i = 0; i < count; ++i) {
      std::swap(pool[i], pool[i + index(pool.size() - i)]);
    }
  }

 private:
  std::mt19937_64 engine_;
};

double squared_distance(const float* a, const float* b, std::size_t dim) {
  double sum = 0.0;
  for (std::size_t i = 0; i < dim; ++i) {
    const double d = static_cast<double>(a[i]) - static_cast<double>(b[i]);
    sum += d * d;
  }
  return sum;
}

struct Points {
  const float* data;
  std::size_t count;
  std::size_t dim;
  const float* row(std::size_t i) const { return data + i * dim; }
};

std::vector<float> seed_centroids(const Points& pts, std::size_t k, Rng& rng,
                                  std::size_t threads) {
  std::vector<float> centroids;
  centroids.reserve(k * pts.dim);
  std::vector<char> chosen(pts.count, 0);
  auto take = [&](std::size_t i) {
    chosen[i] = 1;
    centroids.insert(centroids.end(), pts.row(i), pts.row(i) + pts.dim);
  };

  take(rng.index(pts.count));
  std::vector<double> d2(pts.count);
  parallel_for(pts.count, threads, [&](std::size_t i) {
    d2[i] = squared_distance(pts.row(i), centroids.data(), pts.dim);
  });

  for (std::size_t c = 1; c < k; ++c) {
    double total = 0.0;
    for (double d : d2) total += d;
    std::size_t pick = pts.count;
    if (total > 0.0) {
      const double target = rng.uniform01() * total;
      double cum = 0.0;
      for (std::size_t i = 0; i < pts.count; ++i) {
        if (d2[i] <= 0.0) continue;
        cum += d2[i];
        pick = i;
        if (cum > target) break;
      }
    } else {
      // Every point coincides with a centroid; pick among the unused ones.
      std::vector<std::size_t> unused;
      for (std::size_t i = 0; i < pts.count; ++i) {
        if (!chosen[i]) unused.push_back(i);
      }
      pick = unused[rng.index(unused.size())];
    }
    take(pick);
    const float* centre = centroids.data() + c * pts.dim;
    parallel_for(pts.count, threads, [&](std::size_t i) {
      d2[i] = std::min(d2[i], squared_distance(pts.row(i), centre, pts.dim));
    });
  }
  return centroids;
}

// Nearest centroid per point (ties to the lowest index). Returns the number
// of points whose topic changed.
std::size_t assign(const Points& pts, std::span<const float> centroids, std::size_t k,
                   std::vector<std::uint32_t>& topic, std::vector<double>& dist,
                   std::size_t threads) {
  std::vector<char> changed(pts.count, 0);
  parallel_for(pts.count, threads, [&](std::size_t i) {
    double best = std::numeric_limits<double>::infinity();
    std::uint32_t best_c = 0;
    for (std::size_t c = 0; c < k; ++c) {
      const double d = squared_distance(pts.row(i), centroids.data() + c * pts.dim, pts.dim);
      if (d < best) {
        best = d;
        best_c = static_cast<std::uint32_t>(c);
      }
    }
    changed[i] = topic[i] != best_c;
    topic[i] = best_c;
    dist[i] = best;
  });
  return static_cast<std::size_t>(std::count(changed.begin(), changed.end(), 1));
}

double sum_in_order(const std::vector<double>& values) {
  double total = 0.0;
  for (double v : values) total += v;
  return total;
}

// Moves each non-empty centroid to the mean of its members and re-seeds
// empty ones. Returns the number of re-seeded clusters.
std::size_t update_centroids(const Points& pts, std::size_t k,
                             const std::vector<std::uint32_t>& topic,
                             std::vector<double>& dist, std::vector<float>& centroids) {
  const std::size_t dim = pts.dim;
  std::vector<double> sums(k * dim, 0.0);
  std::vector<std::size_t> sizes(k, 0);
  for (std::size_t i = 0; i < pts.count; ++i) {
    const float* p = pts.row(i);
    double* s = sums.data() + topic[i] * dim;
    for (std::size_t j = 0; j < dim; ++j) s[j] += static_cast<double>(p[j]);
    ++sizes[topic[i]];
  }

  std::vector<float> candidate(k * dim);
  for (std::size_t c = 0; c < k; ++c) {
    if (sizes[c] == 0) continue;
    for (std::size_t j = 0; j < dim; ++j) {
      candidate[c * dim + j] =
          static_cast<float>(sums[c * dim + j] / static_cast<double>(sizes[c]));
    }
  }

  // The float-rounded mean can cost marginally more than the old centroid
  // once the cluster has settled; keep the old one in that case so inertia
  // never goes up.
  std::vector<double> old_cost(k, 0.0);
  std::vector<double> new_cost(k, 0.0);
  for (std::size_t i = 0; i < pts.count; ++i) {
    const std::uint32_t c = topic[i];
    old_cost[c] += dist[i];
    new_cost[c] += squared_distance(pts.row(i), candidate.data() + c * dim, dim);
  }
  for (std::size_t c = 0; c < k; ++c) {
    if (sizes[c] > 0 && new_cost[c] < old_cost[c]) {
      std::copy_n(candidate.data() + c * dim, dim, centroids.data() + c * dim);
    }
  }

  std::size_t reseeded = 0;
  for (std::size_t c = 0; c < k; ++c) {
    if (sizes[c] != 0) continue;
    std::size_t far = 0;
    for (std::size_t i = 1; i < pts.count; ++i) {
      if (dist[i] > dist[far]) far = i;
    }
    std::copy_n(pts.row(far), dim, centroids.data() + c * dim);
    dist[far] = 0.0;
    ++reseeded;
  }
  return reseeded;
}

std::string shortest(float value) {
  char buf[32];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, value);
  return std::string(buf, ptr);
}

}  // namespace

std::vector<std::vector<std::size_t>> TopicClustering::members() const {
  std::vector<std::vector<std::size_t>> out(k);
  for (std::size_t i = 0; i < topic_of.size(); ++i) out[topic_of[i]].push_back(i);
  return out;
}

TopicClustering kmeans(std::span<const std::string> ids, std::span<const float> matrix,
                       std::size_t dim, const KMeansOptions& options) {
  const std::size_t k = options.k;
  if (k == 0) throw UsageError("kmeans: k must be >= 1");
  if (dim == 0) throw DataError("kmeans: dim must be >= 1");
  if (matrix.size() != ids.size() * dim) throw DataError("kmeans: matrix shape mismatch");
  if (ids.size() < k) {
    throw DataError("kmeans: " + std::to_string(ids.size()) + " queries but k = " +
                    std::to_string(k));
  }

  std::vector<float> storage(matrix.begin(), matrix.end());
  if (options.normalize) {
    for (std::size_t i = 0; i < ids.size(); ++i) {
      float* row = storage.data() + i * dim;
      double norm = 0.0;
      for (std::size_t j = 0; j < dim; ++j) norm += static_cast<double>(row[j]) * row[j];
      norm = std::sqrt(norm);
      if (norm == 0.0) throw DataError("kmeans: cannot normalize zero vector '" + ids[i] + "'");
      for (std::size_t j = 0; j < dim; ++j) row[j] = static_cast<float>(row[j] / norm);
    }
  }
  const Points pts{storage.data(), ids.size(), dim};
  const std::size_t threads = std::max<std::size_t>(1, options.threads);

  TopicClustering out;
  out.k = k;
  out.dim = dim;
  out.seed = options.seed;
  out.query_ids.assign(ids.begin(), ids.end());

  Rng rng(options.seed);
  out.centroids = seed_centroids(pts, k, rng, threads);

  out.topic_of.assign(pts.count, 0);
  std::vector<double> dist(pts.count);
  assign(pts, out.centroids, k, out.topic_of, dist, threads);
  out.inertia = sum_in_order(dist);
  out.inertia_history.push_back(out.inertia);

  for (std::size_t iter = 0; iter < options.max_iters; ++iter) {
    const std::size_t reseeded = update_centroids(pts, k, out.topic_of, dist, out.centroids);
    const std::size_t changed = assign(pts, out.centroids, k, out.topic_of, dist, threads);
    const double previous = out.inertia;
    out.inertia = sum_in_order(dist);
    out.inertia_history.push_back(out.inertia);
    out.iterations_run = iter + 1;
    if (changed == 0 && reseeded == 0) break;
    if (previous - out.inertia < options.tol) break;
  }
  return out;
}

TopicClustering kmeans(const EmbeddingStore& queries, const KMeansOptions& options) {
  std::vector<float> matrix(queries.count() * std::size_t{queries.dim()});
  for (std::size_t r = 0; r < queries.count(); ++r) {
    queries.copy_row(r, std::span<float>(matrix).subspan(r * queries.dim(), queries.dim()));
  }
  for (float x : matrix) {
    if (!std::isfinite(x)) throw DataError("kmeans: non-finite value in query store");
  }
  return kmeans(queries.ids(), matrix, queries.dim(), options);
}

TopicPolicy parse_topic_policy(std::string_view name) {
  if (name == "strict") return TopicPolicy::strict;
  if (name == "relaxed") return TopicPolicy::relaxed;
  throw UsageError("unknown topic policy '" + std::string(name) + "' (expected strict|relaxed)");
}

Batch compose_batch(const TopicClustering& clustering, const BatchSpec& spec,
                    std::uint64_t seed, TopicPolicy policy) {
  const std::size_t b = spec.batch_size;
  const std::size_t n = spec.topics_per_batch;
  if (b == 0 || n == 0) throw UsageError("batch size and topics per batch must be >= 1");
  if (n > clustering.k) {
    throw UsageError("topics per batch (" + std::to_string(n) + ") exceeds k (" +
                     std::to_string(clustering.k) + ")");
  }
  if (b < n) throw UsageError("batch size must be >= topics per batch");
  const std::size_t per = spec.per_topic();

  const auto members = clustering.members();
  std::vector<std::uint32_t> eligible;
  for (std::size_t t = 0; t < members.size(); ++t) {
    if (members[t].size() >= per) eligible.push_back(static_cast<std::uint32_t>(t));
  }

  Rng rng(seed);
  Batch batch;
  if (eligible.size() >= n) {
    rng.partial_shuffle(eligible, n);
    for (std::size_t s = 0; s < n; ++s) {
      const std::uint32_t topic = eligible[s];
      std::vector<std::size_t> pool = members[topic];
      rng.partial_shuffle(pool, per);
      batch.topic_ids.push_back(topic);
      for (std::size_t j = 0; j < per; ++j) {
        batch.query_ids.push_back(clustering.query_ids[pool[j]]);
      }
      batch.slot_sizes.push_back(per);
    }
  } else if (policy == TopicPolicy::strict) {
    throw DataError("only " + std::to_string(eligible.size()) + " topics have >= " +
                    std::to_string(per) + " queries; " + std::to_string(n) + " needed");
  } else {
    std::vector<std::uint32_t> nonempty;
    for (std::size_t t = 0; t < members.size(); ++t) {
      if (!members[t].empty()) nonempty.push_back(static_cast<std::uint32_t>(t));
    }
    std::vector<char> used(clustering.query_ids.size(), 0);
    batch.relaxed = true;
    for (std::size_t s = 0; s < n; ++s) {
      const std::uint32_t topic = nonempty[rng.index(nonempty.size())];
      std::vector<std::size_t> pool;
      for (std::size_t q : members[topic]) {
        if (!used[q]) pool.push_back(q);
      }
      const std::size_t take = std::min(per, pool.size());
      rng.partial_shuffle(pool, take);
      batch.topic_ids.push_back(topic);
      for (std::size_t j = 0; j < take; ++j) {
        used[pool[j]] = 1;
        batch.query_ids.push_back(clustering.query_ids[pool[j]]);
      }
      batch.slot_sizes.push_back(take);
    }
  }
  batch.shortfall = b - batch.query_ids.size();
  return batch;
}

std::uint64_t batch_seed(std::uint64_t seed, std::uint64_t index) {
  // splitmix64 finalizer
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (index + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

void write_clustering(const TopicClustering& clustering, std::ostream& out) {
  out << clustering.k << ' ' << clustering.dim << ' ' << clustering.seed << '\n';
  for (std::size_t c = 0; c < clustering.k; ++c) {
    const auto row = clustering.centroid(c);
    for (std::size_t j = 0; j < row.size(); ++j) {
      if (j) out << ' ';
      out << shortest(row[j]);
    }
    out << '\n';
  }
  for (std::size_t i = 0; i < clustering.query_ids.size(); ++i) {
    out << clustering.query_ids[i] << ' ' << clustering.topic_of[i] << '\n';
  }
}

TopicClustering read_clustering(std::istream& in, std::string_view source) {
  const std::string src(source);
  TopicClustering out;
  std::string line;
  std::size_t lineno = 0;
  auto next_line = [&]() -> bool {
    while (std::getline(in, line)) {
      ++lineno;
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (!line.empty()) return true;
    }
    return false;
  };

  if (!next_line()) throw ParseError(src, 1, "missing header");
  {
    std::istringstream header(line);
    std::string extra;
    if (!(header >> out.k >> out.dim >> out.seed) || (header >> extra) || out.k == 0 ||
        out.dim == 0) {
      throw ParseError(src, lineno, "header must be 'k dim seed' with k, dim >= 1");
    }
  }
  out.centroids.reserve(out.k * out.dim);
  for (std::size_t c = 0; c < out.k; ++c) {
    if (!next_line()) throw ParseError(src, lineno + 1, "missing centroid line");
    std::size_t fields = 0;
    std::size_t pos = 0;
    while (pos < line.size()) {
      while (pos < line.size() && line[pos] == ' ') ++pos;
      if (pos >= line.size()) break;
      const std::size_t end = std::min(line.find(' ', pos), line.size());
      float v = 0.0f;
      auto [ptr, ec] = std::from_chars(line.data() + pos, line.data() + end, v);
      if (ec != std::errc() || ptr != line.data() + end || !std::isfinite(v)) {
        throw ParseError(src, lineno, "bad centroid value");
      }
      out.centroids.push_back(v);
      ++fields;
      pos = end;
    }
    if (fields != out.dim) {
      throw ParseError(src, lineno, "centroid has " + std::to_string(fields) +
                                        " values, expected " + std::to_string(out.dim));
    }
  }
  while (next_line()) {
    std::istringstream rec(line);
    std::string qid;
    std::size_t topic = 0;
    std::string extra;
    if (!(rec >> qid >> topic) || (rec >> extra) || topic >= out.k) {
      throw ParseError(src, lineno, "expected 'query_id topic' with topic < k");
    }
    out.query_ids.push_back(std::move(qid));
    out.topic_of.push_back(static_cast<std::uint32_t>(topic));
  }
  return out;
}

void write_batch(std::size_t index, const Batch& batch, std::ostream& out) {
  out << index << ' ';
  for (std::size_t i = 0; i < batch.topic_ids.size(); ++i) {
    if (i) out << ',';
    out << batch.topic_ids[i];
  }
  out << ' ';
  for (std::size_t i = 0; i < batch.query_ids.size(); ++i) {
    if (i) out << ',';
    out << batch.query_ids[i];
  }
  out << '\n';
}

}  // namespace dense_eval
