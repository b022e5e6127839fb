#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "scsb/grid.hpp"
#include "scsb/kernel.hpp"
#include "scsb/measure.hpp"

namespace scsb {

// Table of h(t_j, x_i) and alpha(t_j, x_i) = d/dx log h on a time mesh starting at 0.
class ControlField {
 public:
  ControlField() = default;
  ControlField(Grid grid, double horizon, std::vector<double> times, std::vector<double> h,
               std::vector<double> alpha, std::vector<double> terminal);
  // The zero control on the given mesh (h = 1).
  static ControlField zero(const Grid& grid, double horizon, std::vector<double> times);

  const Grid& grid() const noexcept { return grid_; }
  double horizon() const noexcept { return horizon_; }
  const std::vector<double>& times() const noexcept { return times_; }
  std::size_t rows() const noexcept { return times_.size(); }
  // Terminal data the field was built from (g or rho).
  const std::vector<double>& terminal() const noexcept { return terminal_; }

  double h(std::size_t j, std::size_t i) const noexcept { return h_[j * grid_.size() + i]; }
  double alpha(std::size_t j, std::size_t i) const noexcept { return alpha_[j * grid_.size() + i]; }
  std::span<const double> h_row(std::size_t j) const noexcept {
    return {h_.data() + j * grid_.size(), grid_.size()};
  }
  std::span<const double> alpha_row(std::size_t j) const noexcept {
    return {alpha_.data() + j * grid_.size(), grid_.size()};
  }

  // Largest j with times[j] <= t (left-constant lookup).
  std::size_t row_at(double t) const noexcept;
  // alpha(t_j, x) by linear interpolation in x; the edge value is held beyond the grid.
  double alpha_at(std::size_t j, double x) const noexcept { return grid_.interpolate(alpha_row(j), x); }

  double max_abs_alpha() const noexcept;
  // Largest |d alpha / dx| over the table, from neighboring nodes.
  double lipschitz_estimate() const noexcept;

  void write_csv(const std::string& path) const;

 private:
  Grid grid_;
  double horizon_ = 1.0;
  std::vector<double> times_;
  std::vector<double> h_;
  std::vector<double> alpha_;
  std::vector<double> terminal_;
};

// points uniform times j * T / points, j = 0 .. points - 1 (T itself is excluded).
std::vector<double> uniform_time_mesh(double horizon, std::size_t points);

using InitialLaw = std::variant<double, GridMeasure>;

// Bridge from a point mass at x0 to `terminal`: g = f_tar / K_{0->T}(x0, .).
ControlField solve_bridge_delta(const TransitionKernel& kernel, double x0, const GridMeasure& terminal,
                                std::span<const double> times, unsigned workers = 1);

// h(t, x) = integral of K_{t->T}(x, z) rho(z) dz.
ControlField solve_bridge_general(const TransitionKernel& kernel, std::span<const double> rho,
                                  std::span<const double> times, unsigned workers = 1);

// Integral over [0, T - eps] of |alphaA(t, x) - alphaB(t, x)| dt.
double control_l1_time_gap(const ControlField& a, const ControlField& b, double x, double eps);

// integral log(rho) dmu_tar - integral log h(0, .) dmu_ini.
double bridge_value_general(const TransitionKernel& kernel, const GridMeasure& mu_ini,
                            const GridMeasure& mu_tar, std::span<const double> rho);

// Law of the controlled state at time t for a field built from terminal data g:
// q_t(y) = integral f_ini(x) K_{0->t}(x, y) h(t, y) / h(0, x) dx.
GridMeasure controlled_marginal(const TransitionKernel& kernel, std::span<const double> terminal,
                                const InitialLaw& init, double t);

// Expected running cost integral over [0, T - eps] of 1/2 |alpha|^2 under the controlled marginals,
// trapezoid in time on the field mesh.
double running_cost_quadrature(const TransitionKernel& kernel, const ControlField& field,
                               const InitialLaw& init, double eps);

// max_i |h(t_j, x_i) - sum_l K_{t_j -> t_{j+1}}(x_i, z_l) h(t_{j+1}, z_l) w_l| over nodes in [lo, hi].
double backward_residual(const TransitionKernel& kernel, const ControlField& field, std::size_t j,
                         double lo, double hi);

}  // namespace scsb
