#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "scsb/grid.hpp"

namespace scsb {

// Densities below this floor are treated as exact zeros before taking logs.
inline constexpr double kDensityFloor = 1e-300;

// Probability density on a uniform grid, renormalized to unit trapezoid mass.
class GridMeasure {
 public:
  GridMeasure() = default;
  GridMeasure(Grid grid, std::vector<double> density);

  static GridMeasure gaussian(const Grid& grid, double mean, double sd);
  // log-density up to a constant; exponentiated after subtracting the maximum.
  static GridMeasure from_log_density(const Grid& grid, const std::function<double(double)>& log_f);
  static GridMeasure uniform(const Grid& grid);

  const Grid& grid() const noexcept { return grid_; }
  std::size_t size() const noexcept { return density_.size(); }
  const std::vector<double>& density() const noexcept { return density_; }
  double operator[](std::size_t i) const noexcept { return density_[i]; }
  // Trapezoid mass of the input before renormalization.
  double raw_mass() const noexcept { return raw_mass_; }

  double mean() const;
  double variance() const;
  std::vector<double> cdf() const;

 private:
  Grid grid_;
  std::vector<double> density_;
  double raw_mass_ = 1.0;
};

struct MixtureComponent {
  double weight = 1.0;
  double mean = 0.0;
  double sd = 1.0;
};

GridMeasure gaussian_mixture(const Grid& grid, std::span<const MixtureComponent> components);

// Density-level convex combination (1 - theta) * a + theta * b.
GridMeasure mix(const GridMeasure& a, const GridMeasure& b, double theta);

double l1_distance(const GridMeasure& a, const GridMeasure& b);
double sup_distance(const GridMeasure& a, const GridMeasure& b);

// D_KL(mu || nu); +infinity when nu vanishes where mu carries mass.
double kl_divergence(const GridMeasure& mu, const GridMeasure& nu);

inline constexpr std::size_t kQuantileNodes = 4096;

// Quantile function at the midpoints (j + 1/2) / nodes, by piecewise-linear CDF inversion.
std::vector<double> quantiles(const GridMeasure& mu, std::size_t nodes = kQuantileNodes);

// 1-D Wasserstein distance of order p in {1, 2} from quantile functions.
double wasserstein(const GridMeasure& mu, const GridMeasure& nu, int p = 2);

void write_measure_csv(const std::string& path, const GridMeasure& mu);
// Reads an `x,density` CSV; the x column must form a uniform grid.
GridMeasure read_measure_csv(const std::string& path);

}  // namespace scsb
