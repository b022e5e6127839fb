#pragma once

#include <cstddef>
#include <optional>
#include <vector>

#include "scsb/eot.hpp"
#include "scsb/error.hpp"
#include "scsb/htransform.hpp"
#include "scsb/kernel.hpp"
#include "scsb/measure.hpp"
#include "scsb/penalty.hpp"
#include "scsb/staticopt.hpp"

namespace scsb {

struct FixedPointOptions {
  double tol = 1e-6;          // on W2 between successive iterates
  std::size_t max_outer = 200;
  double damping = 0.5;       // theta in (0, 1]
  double sinkhorn_tol = 1e-11;
  std::size_t sinkhorn_max_iter = 10000;
  OptimizerConfig optimizer;
  std::optional<GridMeasure> init;  // defaults to mu_tar
  std::vector<double> times;        // field mesh; defaults to 64 uniform points
  unsigned workers = 1;
};

struct FixedPointStep {
  std::size_t iter = 0;
  double w2_step = 0.0;
  double l1_step = 0.0;
  double jk = 0.0;       // J^k of the iterate before the step
  double residual = 0.0; // L1 distance between the iterate and its image under Gamma
};

struct FixedPointTrace {
  std::vector<FixedPointStep> steps;
  double damping = 0.5;
  bool converged = false;
  double residual_l1 = 0.0;
  std::size_t sinkhorn_iterations = 0;
};

using FixedPointError = PayloadError<FixedPointTrace>;

struct ScsbpSolution {
  GridMeasure mu_hat;
  ControlField field;
  FixedPointTrace trace;
  std::vector<double> rho;  // Gamma1(mu_hat)
  double objective = 0.0;   // J^k(mu_hat)
  double penalty = 0.0;     // G(mu_hat)
};

// Damped iteration mu <- (1 - theta) mu + theta Gamma2(Gamma1(mu)).
ScsbpSolution solve_scsbp_general(const TransitionKernel& kernel, const GridMeasure& mu_ini,
                                  const Penalty& G, double k, const FixedPointOptions& opts = {});

// J^k(mu) = k G(mu) + int log rho^mu dmu - int log h^mu(0) dmu_ini.
double objective_jk(const TransitionKernel& kernel, const GridMeasure& mu_ini, const Penalty& G,
                    double k, const GridMeasure& candidate, const SinkhornOptions& opts = {});
double objective_jk(const EntropicCost& cost, const GridMeasure& mu_ini, const Penalty& G, double k,
                    const GridMeasure& candidate, const SinkhornOptions& opts = {});

struct MultiStartReport {
  ScsbpSolution from_target;
  ScsbpSolution from_pushforward;
  double distance = 0.0;  // W2 between the two fixed points
  bool multiple = false;  // distance > 100 tol
};

// Runs the iteration from mu_tar and from the pushforward of mu_ini and compares the limits.
MultiStartReport probe_fixed_points(const TransitionKernel& kernel, const GridMeasure& mu_ini,
                                    const Penalty& G, double k, const FixedPointOptions& opts = {});

}  // namespace scsb
