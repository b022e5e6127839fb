#pragma once

#include <Eigen/Dense>
#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "scsb/grid.hpp"
#include "scsb/measure.hpp"

namespace scsb {

enum class KernelVariant { Brownian, OrnsteinUhlenbeck, Tabulated };

const char* to_string(KernelVariant v) noexcept;

// Drift b(t, x) of the reference diffusion dX = b dt + dW, with its x-derivative.
struct Drift {
  std::string name = "zero";
  std::function<double(double, double)> value;
  std::function<double(double, double)> dx;
  double lipschitz = 0.0;
  bool time_homogeneous = true;
};

// Builtins: "zero", "ou" (b = -theta x), "tanh" (b = -theta tanh x).
Drift builtin_drift(const std::string& name, double theta = 1.0);

// E[f(X_s) | X_t = x_i] under the grid-truncated kernel and the x-derivative of its log.
struct BackwardResult {
  std::vector<double> value;
  std::vector<double> log_gradient;
};

struct ForwardResult {
  std::vector<double> density;
  // Mass kept by the untruncated kernel; 1 means no loss through the grid edges.
  double retained_mass = 1.0;
};

// Transition density p(s, y; t, x) of the reference diffusion on a truncated grid.
// All quadratures use rows renormalized to unit trapezoid mass on the grid.
class TransitionKernel {
 public:
  static TransitionKernel brownian(double horizon, Grid grid);
  static TransitionKernel ornstein_uhlenbeck(double horizon, double theta, Grid grid);
  // Chapman-Kolmogorov composition of one-step Euler kernels N(y; x + b(t,x) dt, dt).
  static TransitionKernel tabulated(Drift drift, double horizon, Grid grid, std::size_t n_steps);

  KernelVariant variant() const noexcept { return variant_; }
  bool analytic() const noexcept { return variant_ != KernelVariant::Tabulated; }
  double horizon() const noexcept { return horizon_; }
  double theta() const noexcept { return theta_; }
  const Grid& grid() const noexcept { return grid_; }
  const Drift& drift() const noexcept { return drift_; }
  // Time mesh of a tabulated kernel (n_steps + 1 points); empty for analytic kernels.
  const std::vector<double>& time_mesh() const noexcept { return mesh_; }

  double density(double s, double y, double t, double x) const;
  double grad_log_density(double s, double y, double t, double x) const;

  // Normalized row y -> K_{t->s}(x, y) on the grid. Tabulated kernels need x on a node.
  std::vector<double> row(double t, double x, double s) const;
  // Raw (untruncated) trapezoid mass of p(s, .; t, x) on the grid, analytic kernels only.
  double row_mass(double t, double x, double s) const;

  ForwardResult forward(double t, double s, std::span<const double> f) const;
  BackwardResult backward(double t, double s, std::span<const double> f) const;
  // Backward solves for several start times sharing the same end time s.
  std::vector<BackwardResult> backward_rows(std::span<const double> times, double s,
                                            std::span<const double> f, unsigned workers = 1) const;

  // log K_{t->s}(x_i, y_l) for all node pairs.
  Eigen::MatrixXd log_matrix(double t, double s) const;

 private:
  struct Table;

  TransitionKernel() = default;
  void check_times(double t, double s) const;
  std::size_t mesh_index(double t) const;
  std::size_t node_of(double x) const;
  // Mean coefficient c and variance v with X_s | X_t = x ~ N(c x, v).
  void gaussian_moments(double tau, double& c, double& v) const;
  BackwardResult backward_analytic(double t, double s, std::span<const double> f) const;
  std::vector<double> tabulated_row(std::size_t i, std::size_t j0, std::size_t j1) const;
  const Eigen::MatrixXd& horizon_matrix() const;

  KernelVariant variant_ = KernelVariant::Brownian;
  double horizon_ = 1.0;
  double theta_ = 0.0;
  Grid grid_;
  Drift drift_;
  std::vector<double> mesh_;
  std::shared_ptr<Table> table_;
};

struct Pushforward {
  GridMeasure measure;
  double renormalization = 1.0;  // retained mass of the untruncated kernel
};

// Law of X_s given X_t ~ mu; fails with a truncation error when more than 1e-3 of the
// mass leaves the grid.
Pushforward pushforward(const TransitionKernel& kernel, const GridMeasure& mu, double t, double s);

}  // namespace scsb
