#pragma once

#include <cstddef>
#include <span>
#include <utility>
#include <vector>

namespace scsb {

// Uniform 1-D grid on [lower, upper] with trapezoid quadrature weights.
class Grid {
 public:
  Grid() = default;
  Grid(double lower, double upper, std::size_t n);

  double lower() const noexcept { return lower_; }
  double upper() const noexcept { return upper_; }
  double spacing() const noexcept { return spacing_; }
  std::size_t size() const noexcept { return n_; }
  double node(std::size_t i) const noexcept { return lower_ + static_cast<double>(i) * spacing_; }
  const std::vector<double>& nodes() const noexcept { return nodes_; }
  const std::vector<double>& weights() const noexcept { return weights_; }
  double weight(std::size_t i) const noexcept { return weights_[i]; }

  bool contains(double x) const noexcept;
  // Index of the node equal to x within 1e-9 spacing, if any.
  bool node_index(double x, std::size_t& index) const noexcept;
  // Cell index i and offset s in [0,1] with x = node(i) + s * spacing; x is clamped to the grid.
  std::pair<std::size_t, double> locate(double x) const noexcept;
  // Linear interpolation of nodal values at x (clamped at the ends).
  double interpolate(std::span<const double> values, double x) const noexcept;

  double integrate(std::span<const double> f) const;
  // Trapezoid running integral, F[0] = 0.
  std::vector<double> cumulative(std::span<const double> f) const;

  bool operator==(const Grid& other) const noexcept {
    return lower_ == other.lower_ && upper_ == other.upper_ && n_ == other.n_;
  }

 private:
  double lower_ = 0.0;
  double upper_ = 1.0;
  std::size_t n_ = 0;
  double spacing_ = 0.0;
  std::vector<double> nodes_;
  std::vector<double> weights_;
};

void require_same_grid(const Grid& a, const Grid& b, const char* context);

}  // namespace scsb
