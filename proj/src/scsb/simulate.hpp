#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "scsb/error.hpp"
#include "scsb/grid.hpp"
#include "scsb/htransform.hpp"
#include "scsb/kernel.hpp"
#include "scsb/stats.hpp"

namespace scsb {

struct SimulationConfig {
  std::size_t n_steps = 256;  // Euler steps over the full horizon [0, T]
  std::size_t n_paths = 10000;
  std::uint64_t seed = 1;
  double stop_eps = 0.0;
  // Extra early-stop margins (>= stop_eps) at which the running cost is recorded.
  std::vector<double> cost_eps;
  bool keep_paths = false;
  unsigned workers = 1;
};

struct PathEnsemble {
  std::size_t n_paths = 0;
  std::size_t n_steps = 0;      // steps actually taken (the last one may be partial)
  double dt = 0.0;
  double horizon = 1.0;
  double stop_eps = 0.0;
  std::uint64_t seed = 0;
  std::vector<double> times;     // step times, size n_steps + 1
  std::vector<double> terminal;  // X at T - stop_eps
  std::vector<double> cost_eps;  // recorded margins, ascending; includes stop_eps
  std::vector<double> costs;     // [margin][path] running cost 1/2 int |alpha|^2 up to T - margin
  std::vector<double> paths;     // [path][step] when kept

  std::span<const double> cost_at(std::size_t margin) const noexcept {
    return {costs.data() + margin * n_paths, n_paths};
  }
  std::string summary_json() const;
  void write_paths_csv(const std::string& path) const;
};

using DivergenceError = PayloadError<std::size_t>;

// dX = (b + alpha) dt + dW from 0 to T - stop_eps; alpha is read from `field`
// (linear in x, left-constant in t) or zero when field is null. Paths leaving
// |x| < max(|a|, |b|) + 5 of `grid` abort the run.
PathEnsemble euler_maruyama(const Drift& drift, const ControlField* field, const InitialLaw& init,
                            double horizon, const Grid& grid, const SimulationConfig& cfg);

// J_eps estimate from the recorded running costs.
Estimate value_eval(const PathEnsemble& ensemble, double eps);

// Monte Carlo d/dx E[g(X_T) | X_t = x] = E[g(X_T) N_T], N_T = (1/(T-t)) int (dX/dx) dW.
// Brownian kernels sample X_T exactly; drifted kernels use n_steps Euler steps on [t, T].
Estimate bel_gradient(const TransitionKernel& kernel, std::span<const double> g, double t, double x,
                      std::size_t n_paths, std::uint64_t seed, std::size_t n_steps = 256,
                      unsigned workers = 1);

// Samples from a grid density by inverting its piecewise-linear CDF.
double sample_grid_measure(const GridMeasure& mu, const std::vector<double>& cdf, double u);

}  // namespace scsb
