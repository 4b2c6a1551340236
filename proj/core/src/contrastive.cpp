#include "dense_eval/contrastive.hpp"

#include <algorithm>
#include <cmath>

#include "dense_eval/error.hpp"

namespace dense_eval {

namespace {

void check_instance(const ContrastiveInstance& instance) {
  if (instance.negatives.empty()) throw DataError("contrastive instance needs >= 1 negative");
  const std::size_t dim = instance.query.size();
  if (dim == 0) throw DataError("contrastive instance has empty query vector");
  auto check = [&](const std::vector<float>& v, const char* what) {
    if (v.size() != dim) {
      throw DataError(std::string("dimension mismatch: ") + what + " has " +
                      std::to_string(v.size()) + " values, query has " + std::to_string(dim));
    }
  };
  check(instance.positive, "positive");
  for (const auto& neg : instance.negatives) check(neg, "negative");
}

double checked_similarity(const ContrastiveInstance& instance, const std::vector<float>& doc) {
  const double s = similarity(instance.metric, instance.query, doc);
  if (!std::isfinite(s)) throw DataError("non-finite similarity");
  return s;
}

}  // namespace

double info_nce_from_similarities(double positive, std::span<const double> negatives,
                                  double temperature) {
  if (!(temperature > 0.0) || !std::isfinite(temperature)) {
    throw UsageError("temperature must be a positive finite number");
  }
  if (negatives.empty()) throw DataError("info_nce: need >= 1 negative");
  if (!std::isfinite(positive)) throw DataError("non-finite similarity");

  const double pos = positive / temperature;
  double top = pos;
  for (double s : negatives) {
    if (!std::isfinite(s)) throw DataError("non-finite similarity");
    top = std::max(top, s / temperature);
  }
  double sum = std::exp(pos - top);
  for (double s : negatives) sum += std::exp(s / temperature - top);
  // log-sum-exp minus the positive logit
  return (top - pos) + std::log(sum);
}

double info_nce_loss(const ContrastiveInstance& instance, double temperature) {
  check_instance(instance);
  const double pos = checked_similarity(instance, instance.positive);
  std::vector<double> negs;
  negs.reserve(instance.negatives.size());
  for (const auto& neg : instance.negatives) negs.push_back(checked_similarity(instance, neg));
  return info_nce_from_similarities(pos, negs, temperature);
}

double positive_probability(const ContrastiveInstance& instance, double temperature) {
  return std::exp(-info_nce_loss(instance, temperature));
}

double batch_contrastive(std::span<const ContrastiveInstance> batch, double temperature) {
  if (batch.empty()) throw DataError("batch_contrastive: empty batch");
  std::vector<double> losses;
  losses.reserve(batch.size());
  for (const auto& instance : batch) losses.push_back(info_nce_loss(instance, temperature));
  std::sort(losses.begin(), losses.end());
  double sum = 0.0;
  for (double l : losses) sum += l;
  return sum / static_cast<double>(batch.size());
}

}  // namespace dense_eval
