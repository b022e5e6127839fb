#include "scsb/stats.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include "scsb/error.hpp"

namespace scsb {

double pairwise_sum(std::span<const double> values) noexcept {
  constexpr std::size_t block = 32;
  if (values.size() <= block) {
    double s = 0.0;
    for (double v : values) s += v;
    return s;
  }
  const std::size_t half = values.size() / 2;
  return pairwise_sum(values.first(half)) + pairwise_sum(values.subspan(half));
}

Estimate mean_and_stderr(std::span<const double> samples) {
  require(!samples.empty(), ErrorCode::InvalidArgument, "no samples");
  const double n = static_cast<double>(samples.size());
  const double mean = pairwise_sum(samples) / n;
  std::vector<double> sq(samples.size());
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const double d = samples[i] - mean;
    sq[i] = d * d;
  }
  const double var = samples.size() > 1 ? pairwise_sum(sq) / (n - 1.0) : 0.0;
  return {mean, std::sqrt(var / n)};
}

LinearFit fit_line(std::span<const double> x, std::span<const double> y) {
  require(x.size() == y.size(), ErrorCode::InvalidArgument, "fit arrays differ in length");
  require(x.size() >= 2, ErrorCode::FitDegenerate, "need at least two points to fit a slope");
  const double n = static_cast<double>(x.size());
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxx = 0.0, sxy = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
    syy += (y[i] - my) * (y[i] - my);
  }
  require(sxx > 0.0, ErrorCode::FitDegenerate, "abscissae are all equal");
  LinearFit fit;
  fit.slope = sxy / sxx;
  fit.intercept = my - fit.slope * mx;
  fit.r2 = syy > 0.0 ? std::clamp(sxy * sxy / (sxx * syy), 0.0, 1.0) : 1.0;
  return fit;
}

}  // namespace scsb
