#pragma once

#include <Eigen/Dense>
#include <cstddef>
#include <span>
#include <vector>

#include "scsb/error.hpp"
#include "scsb/kernel.hpp"
#include "scsb/measure.hpp"

namespace scsb {

struct SchrodingerPotentials {
  std::vector<double> phi;  // on the initial grid
  std::vector<double> psi;  // on the terminal grid
  double normalization_residual = 0.0;  // |int phi dmu_ini - int psi dmu|
};

struct CouplingReport {
  double transport_cost = 0.0;  // int c dpi
  double kl_term = 0.0;         // KL(pi || mu_ini x mu)
  double total = 0.0;
  double row_error = 0.0;  // L1 error of the first marginal
  double col_error = 0.0;  // L1 error of the second marginal
  std::size_t iterations = 0;
};

struct SinkhornOptions {
  double tol = 1e-8;
  std::size_t max_iter = 10000;
  // Optional starting phi (its size must match the initial marginal).
  const std::vector<double>* warm_phi = nullptr;
};

struct SinkhornResult {
  SchrodingerPotentials potentials;
  CouplingReport report;
};

using SinkhornError = PayloadError<SinkhornResult>;

// Log kernel L = -c for the entropic problem, stored in both orientations.
class EntropicCost {
 public:
  EntropicCost() = default;
  explicit EntropicCost(Eigen::MatrixXd log_kernel);
  // -c(x_i, y_l) = log p(T, y_l; 0, x_i) for the grid-truncated kernel.
  static EntropicCost from_kernel(const TransitionKernel& kernel);

  const Eigen::MatrixXd& log_kernel() const noexcept { return L_; }
  const Eigen::MatrixXd& log_kernel_t() const noexcept { return Lt_; }
  std::size_t rows() const noexcept { return static_cast<std::size_t>(L_.rows()); }
  std::size_t cols() const noexcept { return static_cast<std::size_t>(L_.cols()); }

 private:
  Eigen::MatrixXd L_;
  Eigen::MatrixXd Lt_;
};

// Log-domain Sinkhorn for pi_ij = exp(L_ij + phi_i + psi_j) a_i b_j with marginals a, b
// (probability vectors), followed by the symmetric-normalization shift.
SinkhornResult sinkhorn_discrete(const EntropicCost& cost, std::span<const double> a,
                                 std::span<const double> b, const SinkhornOptions& opts = {});

SinkhornResult sinkhorn(const TransitionKernel& kernel, const GridMeasure& mu_ini,
                        const GridMeasure& mu, const SinkhornOptions& opts = {});
SinkhornResult sinkhorn(const EntropicCost& cost, const GridMeasure& mu_ini, const GridMeasure& mu,
                        const SinkhornOptions& opts = {});

struct Gamma1Result {
  std::vector<double> rho;   // e^psi f_mu, in the gauge int rho0 = 1
  std::vector<double> rho0;  // e^phi f_ini
  SinkhornResult sinkhorn;
  double terminal_factorization_error = 0.0;  // L1 of rho * K^T rho0 - f_mu
  double initial_factorization_error = 0.0;   // L1 of rho0 * K rho - f_ini
};

Gamma1Result gamma1(const EntropicCost& cost, const GridMeasure& mu_ini, const GridMeasure& mu,
                    const SinkhornOptions& opts = {});
Gamma1Result gamma1(const TransitionKernel& kernel, const GridMeasure& mu_ini, const GridMeasure& mu,
                    const SinkhornOptions& opts = {});

// xi(y) = integral c(x, y) mu_ini(dx).
std::vector<double> xi_bound(const TransitionKernel& kernel, const GridMeasure& mu_ini);

// (sup|phi1 - phi2| + sup|psi1 - psi2|) / W2(mu1, mu2) on points where the densities exceed 1e-8.
double stability_ratio(const TransitionKernel& kernel, const GridMeasure& mu_ini,
                       const GridMeasure& mu1, const GridMeasure& mu2,
                       const SinkhornOptions& opts = {});

}  // namespace scsb
