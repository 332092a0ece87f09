#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace cobra {

struct MeanCi {
  double mean = 0.0;
  double half_width = 0.0;  // NaN when fewer than 2 samples
  size_t n = 0;
};

// Sample mean with a Student-t confidence interval:
// half_width = t(level, n-1) * sample_stddev / sqrt(n).
MeanCi mean_ci(std::span<const double> samples, double level = 0.95);

// exp(mean(log(factors))); rejects non-positive factors.
double geo_mean(std::span<const double> factors);

// Expected slowdown of a checkpoint-restart system under n failures spread
// evenly over the run: 1 + n/2 (the restart itself assumed free).
double checkpoint_model(uint64_t n_failures);

}  // namespace cobra
