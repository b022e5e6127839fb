#include "scsb/grid.hpp"

#include <cmath>
#include <string>

#include "scsb/error.hpp"
#include "scsb/stats.hpp"

namespace scsb {

Grid::Grid(double lower, double upper, std::size_t n)
    : lower_(lower), upper_(upper), n_(n) {
  require(std::isfinite(lower) && std::isfinite(upper) && upper > lower,
          ErrorCode::InvalidArgument, "grid bounds must satisfy lower < upper");
  require(n >= 2, ErrorCode::InvalidArgument, "grid needs at least 2 points");
  spacing_ = (upper - lower) / static_cast<double>(n - 1);
  nodes_.resize(n);
  weights_.assign(n, spacing_);
  for (std::size_t i = 0; i < n; ++i) nodes_[i] = node(i);
  nodes_[n - 1] = upper;
  weights_[0] = weights_[n - 1] = 0.5 * spacing_;
}

bool Grid::contains(double x) const noexcept {
  const double slack = 1e-12 * spacing_;
  return x >= lower_ - slack && x <= upper_ + slack;
}

bool Grid::node_index(double x, std::size_t& index) const noexcept {
  if (!contains(x)) return false;
  const double r = (x - lower_) / spacing_;
  const double i = std::round(r);
  if (std::abs(r - i) > 1e-9) return false;
  index = static_cast<std::size_t>(i);
  if (index >= n_) index = n_ - 1;
  return true;
}

std::pair<std::size_t, double> Grid::locate(double x) const noexcept {
  if (x <= lower_) return {0, 0.0};
  if (x >= upper_) return {n_ - 2, 1.0};
  const double r = (x - lower_) / spacing_;
  auto i = static_cast<std::size_t>(r);
  if (i >= n_ - 1) i = n_ - 2;
  return {i, r - static_cast<double>(i)};
}

double Grid::interpolate(std::span<const double> values, double x) const noexcept {
  const auto [i, s] = locate(x);
  return (1.0 - s) * values[i] + s * values[i + 1];
}

double Grid::integrate(std::span<const double> f) const {
  require(f.size() == n_, ErrorCode::GridMismatch, "integrand length differs from grid size");
  std::vector<double> terms(n_);
  for (std::size_t i = 0; i < n_; ++i) terms[i] = weights_[i] * f[i];
  return pairwise_sum(terms);
}

std::vector<double> Grid::cumulative(std::span<const double> f) const {
  require(f.size() == n_, ErrorCode::GridMismatch, "integrand length differs from grid size");
  std::vector<double> F(n_, 0.0);
  for (std::size_t i = 1; i < n_; ++i) F[i] = F[i - 1] + 0.5 * spacing_ * (f[i - 1] + f[i]);
  return F;
}

void require_same_grid(const Grid& a, const Grid& b, const char* context) {
  if (!(a == b)) {
    fail(ErrorCode::GridMismatch, std::string(context) + ": measures live on different grids");
  }
}

}  // namespace scsb
