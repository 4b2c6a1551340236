#pragma once

#include <span>
#include <vector>

#include "dense_eval/scorer.hpp"

namespace dense_eval {

/// One query with a positive document and N >= 1 negatives.
struct ContrastiveInstance {
  std::vector<float> query;
  std::vector<float> positive;
  std::vector<std::vector<float>> negatives;
  Metric metric = Metric::dot;
};

/// InfoNCE from precomputed similarities:
///   -log( e^{pos/t} / (e^{pos/t} + sum_i e^{neg_i/t}) )
/// evaluated as a log-sum-exp shifted by the largest term.
double info_nce_from_similarities(double positive, std::span<const double> negatives,
                                  double temperature = 1.0);

double info_nce_loss(const ContrastiveInstance& instance, double temperature = 1.0);

/// The softmax ratio itself, with the positive counted as the i = 0 term of
/// the denominator. Equals exp(-info_nce_loss).
double positive_probability(const ContrastiveInstance& instance, double temperature = 1.0);

/// Mean loss over a non-empty batch. Losses are summed in sorted order, so
/// the result is exactly invariant to the order of `batch`.
double batch_contrastive(std::span<const ContrastiveInstance> batch, double temperature = 1.0);

}  // namespace dense_eval
