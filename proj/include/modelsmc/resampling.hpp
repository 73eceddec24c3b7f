#ifndef MODELSMC_RESAMPLING_HPP
#define MODELSMC_RESAMPLING_HPP

#include <cstddef>
#include <vector>

#include "modelsmc/rng.hpp"

namespace modelsmc {

enum class ResampleMode { WithReplacement, WithoutReplacement };

struct AncestorIndices {
  std::vector<std::size_t> indices;
  ResampleMode mode = ResampleMode::WithReplacement;
};

// n iid draws from Cat(weights). Weights must be normalized; throws if all
// weights are zero.
AncestorIndices categorical_sample(const std::vector<double>& weights, std::size_t n,
                                   RngStream& rng);

// n distinct indices by successive renormalized categorical draws. Requires
// n <= number of strictly positive weights.
AncestorIndices weighted_sample_without_replacement(const std::vector<double>& weights,
                                                    std::size_t n, RngStream& rng);

// 1 / sum(w_i^2), in [1, N] for normalized weights.
double effective_sample_size(const std::vector<double>& weights);

}  // namespace modelsmc

#endif  // MODELSMC_RESAMPLING_HPP
