#include "modelsmc/resampling.hpp"

#include <stdexcept>

namespace modelsmc {

namespace {

// Inverse-CDF draw from an unnormalized nonnegative weight vector with known
// total mass; `skip[i]` marks indices that carry no mass anymore.
std::size_t draw_index(const std::vector<double>& weights, const std::vector<bool>& skip,
                       double total, RngStream& rng) {
  const double u = rng.uniform() * total;
  double acc = 0.0;
  std::size_t last_positive = weights.size();
  for (std::size_t i = 0; i < weights.size(); ++i) {
    if (skip[i] || weights[i] <= 0.0) continue;
    acc += weights[i];
    last_positive = i;
    if (u < acc) return i;
  }
  // Rounding can leave u marginally above the accumulated mass.
  if (last_positive == weights.size()) {
    throw std::runtime_error("categorical_sample: no positive weight");
  }
  return last_positive;
}

}  // namespace

AncestorIndices categorical_sample(const std::vector<double>& weights, std::size_t n,
                                   RngStream& rng) {
  double total = 0.0;
  for (double w : weights) {
    if (w < 0.0) throw std::invalid_argument("categorical_sample: negative weight");
    total += w;
  }
  if (total <= 0.0) throw std::runtime_error("categorical_sample: no positive weight");

  std::vector<bool> skip(weights.size(), false);
  AncestorIndices out;
  out.mode = ResampleMode::WithReplacement;
  out.indices.reserve(n);
  for (std::size_t k = 0; k < n; ++k) {
    out.indices.push_back(draw_index(weights, skip, total, rng));
  }
  return out;
}

AncestorIndices weighted_sample_without_replacement(const std::vector<double>& weights,
                                                    std::size_t n, RngStream& rng) {
  std::size_t positive = 0;
  double total = 0.0;
  for (double w : weights) {
    if (w < 0.0) {
      throw std::invalid_argument("weighted_sample_without_replacement: negative weight");
    }
    if (w > 0.0) ++positive;
    total += w;
  }
  if (n > positive) {
    throw std::runtime_error(
        "weighted_sample_without_replacement: n exceeds positive-weight count");
  }

  std::vector<bool> taken(weights.size(), false);
  AncestorIndices out;
  out.mode = ResampleMode::WithoutReplacement;
  out.indices.reserve(n);
  for (std::size_t k = 0; k < n; ++k) {
    const std::size_t i = draw_index(weights, taken, total, rng);
    taken[i] = true;
    total -= weights[i];
    out.indices.push_back(i);
  }
  return out;
}

double effective_sample_size(const std::vector<double>& weights) {
  double sum_sq = 0.0;
  for (double w : weights) sum_sq += w * w;
  if (sum_sq <= 0.0) return 0.0;
  return 1.0 / sum_sq;
}

}  // namespace modelsmc
