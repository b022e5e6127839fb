#pragma once

#include <cstddef>
#include <span>

namespace scsb {

// Pairwise (cascade) summation; result does not depend on thread partitioning.
double pairwise_sum(std::span<const double> values) noexcept;

struct Estimate {
  double mean = 0.0;
  double stderr_ = 0.0;
};

Estimate mean_and_stderr(std::span<const double> samples);

struct LinearFit {
  double slope = 0.0;
  double intercept = 0.0;
  double r2 = 0.0;
};

// Ordinary least squares y = intercept + slope * x.
LinearFit fit_line(std::span<const double> x, std::span<const double> y);

}  // namespace scsb
