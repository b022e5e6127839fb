#include "scsb/fixedpoint.hpp"

#include <cmath>
#include <string>

#include "scsb/stats.hpp"

namespace scsb {

namespace {

// J^k from a computed Gamma1 result; h(0) = f_ini / rho0 by the first-marginal identity.
double objective_from(const Gamma1Result& g1, const GridMeasure& mu_ini, const Penalty& G, double k,
                      const GridMeasure& mu) {
  const std::size_t n = mu.size();
  std::vector<double> a(n, 0.0), b(mu_ini.size(), 0.0);
  for (std::size_t j = 0; j < n; ++j) {
    if (mu[j] > 0.0) {
      require(g1.rho[j] > 0.0, ErrorCode::Support, "log rho = -inf where the candidate has mass");
      a[j] = std::log(g1.rho[j]) * mu[j];
    }
  }
  for (std::size_t i = 0; i < mu_ini.size(); ++i) {
    if (mu_ini[i] > 0.0) b[i] = (std::log(mu_ini[i]) - std::log(g1.rho0[i])) * mu_ini[i];
  }
  const double penalty = k == 0.0 ? 0.0 : k * G.eval(mu);
  return penalty + mu.grid().integrate(a) - mu_ini.grid().integrate(b);
}

}  // namespace

double objective_jk(const EntropicCost& cost, const GridMeasure& mu_ini, const Penalty& G, double k,
                    const GridMeasure& candidate, const SinkhornOptions& opts) {
  const auto g1 = gamma1(cost, mu_ini, candidate, opts);
  return objective_from(g1, mu_ini, G, k, candidate);
}

double objective_jk(const TransitionKernel& kernel, const GridMeasure& mu_ini, const Penalty& G,
                    double k, const GridMeasure& candidate, const SinkhornOptions& opts) {
  require_same_grid(kernel.grid(), mu_ini.grid(), "objective_jk");
  require_same_grid(kernel.grid(), candidate.grid(), "objective_jk");
  return objective_jk(EntropicCost::from_kernel(kernel), mu_ini, G, k, candidate, opts);
}

ScsbpSolution solve_scsbp_general(const TransitionKernel& kernel, const GridMeasure& mu_ini,
                                  const Penalty& G, double k, const FixedPointOptions& opts) {
  require_same_grid(kernel.grid(), mu_ini.grid(), "solve_scsbp_general");
  require_same_grid(kernel.grid(), G.target().grid(), "solve_scsbp_general");
  require(k >= 1.0 && std::isfinite(k), ErrorCode::InvalidArgument, "fixed point needs k >= 1");
  require(opts.damping > 0.0 && opts.damping <= 1.0, ErrorCode::InvalidArgument,
          "damping must lie in (0, 1]");
  require(opts.tol > 0.0 && opts.max_outer >= 1, ErrorCode::InvalidArgument,
          "fixed point needs tol > 0 and max_outer >= 1");
  const EntropicCost cost = EntropicCost::from_kernel(kernel);
  SinkhornOptions sopts;
  sopts.tol = opts.sinkhorn_tol;
  sopts.max_iter = opts.sinkhorn_max_iter;

  FixedPointTrace trace;
  trace.damping = opts.damping;
  GridMeasure mu = opts.init ? *opts.init : G.target();
  require_same_grid(kernel.grid(), mu.grid(), "fixed point initialization");

  std::vector<double> warm;
  auto apply_gamma1 = [&](const GridMeasure& m) {
    if (!warm.empty()) sopts.warm_phi = &warm;
    auto g1 = gamma1(cost, mu_ini, m, sopts);
    warm = g1.sinkhorn.potentials.phi;
    trace.sinkhorn_iterations += g1.sinkhorn.report.iterations;
    return g1;
  };

  Gamma1Result g1 = apply_gamma1(mu);
  GridMeasure image = gamma2(g1.rho, G, k, opts.optimizer).measure;
  for (std::size_t it = 1; it <= opts.max_outer; ++it) {
    FixedPointStep step;
    step.iter = it;
    step.jk = objective_from(g1, mu_ini, G, k, mu);
    step.residual = l1_distance(image, mu);
    GridMeasure next = mix(mu, image, opts.damping);
    step.w2_step = wasserstein(next, mu, 2);
    step.l1_step = l1_distance(next, mu);
    trace.steps.push_back(step);
    if (step.w2_step < opts.tol && step.residual < 10.0 * opts.tol) {
      trace.converged = true;
      trace.residual_l1 = step.residual;
      break;
    }
    mu = std::move(next);
    g1 = apply_gamma1(mu);
    image = gamma2(g1.rho, G, k, opts.optimizer).measure;
  }
  if (!trace.converged) {
    trace.residual_l1 = trace.steps.empty() ? 0.0 : trace.steps.back().residual;
    throw FixedPointError(ErrorCode::NonConvergence,
                          "fixed-point iteration did not converge in " + std::to_string(opts.max_outer) +
                              " outer steps (last W2 step " +
                              std::to_string(trace.steps.back().w2_step) + ")",
                          trace);
  }
  ScsbpSolution sol;
  const std::vector<double> times =
      opts.times.empty() ? uniform_time_mesh(kernel.horizon(), 64) : opts.times;
  sol.field = solve_bridge_general(kernel, g1.rho, times, opts.workers);
  sol.objective = trace.steps.back().jk;
  sol.penalty = G.eval(mu);
  sol.rho = g1.rho;
  sol.mu_hat = std::move(mu);
  sol.trace = std::move(trace);
  return sol;
}

MultiStartReport probe_fixed_points(const TransitionKernel& kernel, const GridMeasure& mu_ini,
                                    const Penalty& G, double k, const FixedPointOptions& opts) {
  MultiStartReport rep;
  FixedPointOptions a = opts;
  a.init = G.target();
  rep.from_target = solve_scsbp_general(kernel, mu_ini, G, k, a);
  FixedPointOptions b = opts;
  b.init = pushforward(kernel, mu_ini, 0.0, kernel.horizon()).measure;
  rep.from_pushforward = solve_scsbp_general(kernel, mu_ini, G, k, b);
  rep.distance = wasserstein(rep.from_target.mu_hat, rep.from_pushforward.mu_hat, 2);
  rep.multiple = rep.distance > 100.0 * opts.tol;
  return rep;
}

}  // namespace scsb
