#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "scsb/error.hpp"
#include "scsb/measure.hpp"
#include "scsb/penalty.hpp"

namespace scsb {

struct OptimizerConfig {
  double eta0 = 1.0;    // initial step, in units of the problem's natural scale
  double decay = 0.0;   // step cap eta0 / (1 + decay * iteration)
  std::size_t max_iter = 2000;
  double tol_objective = 1e-13;
  double tol_l1 = 1e-11;
  double tol_variation = 1e-8;
  std::size_t stall_limit = 50;
};

void validate(const OptimizerConfig& cfg);

struct OptimizationResult {
  GridMeasure measure;
  double objective = 0.0;
  std::size_t iterations = 0;
  bool converged = false;
  // max |variation - mean| on {f > 1e-12} at the returned point.
  double certificate = 0.0;
  std::vector<double> objective_trace;  // accepted iterates
};

using StallError = PayloadError<OptimizationResult>;

struct DkResult {
  OptimizationResult opt;
  double m = 0.0;        // D_KL(mu_tar || prior) = D_k(mu_tar)
  double dk = 0.0;       // D_k at the returned measure
  double penalty = 0.0;  // G at the returned measure
  bool bound_holds = false;  // G <= m / k
  bool restarted = false;    // rerun from mu_tar because the first run ended above m
};

// argmin over the grid simplex of D_KL(mu || prior) + k G(mu).
DkResult minimize_dk(const GridMeasure& prior, const Penalty& G, double k,
                     const OptimizerConfig& cfg = {});

// argmin over the grid simplex of k G(mu) + integral log(rho) dmu.
OptimizationResult gamma2(std::span<const double> rho, const Penalty& G, double k,
                          const OptimizerConfig& cfg = {});

}  // namespace scsb
