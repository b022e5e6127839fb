#include "scsb/simulate.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <json.hpp>
#include <string>

#include "scsb/error.hpp"
#include "scsb/parallel.hpp"
#include "scsb/rng.hpp"

namespace scsb {

double sample_grid_measure(const GridMeasure& mu, const std::vector<double>& cdf, double u) {
  const auto it = std::upper_bound(cdf.begin(), cdf.end(), u);
  std::size_t i = it == cdf.begin() ? 0 : static_cast<std::size_t>(it - cdf.begin()) - 1;
  if (i + 1 >= cdf.size()) i = cdf.size() - 2;
  const double d = cdf[i + 1] - cdf[i];
  const double s = d > 0.0 ? std::clamp((u - cdf[i]) / d, 0.0, 1.0) : 0.0;
  return mu.grid().node(i) + s * mu.grid().spacing();
}

PathEnsemble euler_maruyama(const Drift& drift, const ControlField* field, const InitialLaw& init,
                            double horizon, const Grid& grid, const SimulationConfig& cfg) {
  require(horizon > 0.0, ErrorCode::InvalidArgument, "horizon must be positive");
  require(cfg.n_steps >= 16, ErrorCode::InvalidArgument, "simulation needs n_steps >= 16");
  require(cfg.n_paths >= 1, ErrorCode::InvalidArgument, "simulation needs at least one path");
  require(cfg.stop_eps >= 0.0 && cfg.stop_eps < horizon, ErrorCode::Domain,
          "stop_eps must lie in [0, T)");
  require(static_cast<bool>(drift.value), ErrorCode::InvalidArgument, "drift has no value function");
  const double end = horizon - cfg.stop_eps;
  if (field != nullptr) {
    require(field->grid() == grid, ErrorCode::GridMismatch, "field grid differs from simulation grid");
    require(std::abs(field->times().front()) <= 1e-12 * horizon, ErrorCode::InvalidArgument,
            "field must start at t = 0");
  }

  PathEnsemble ens;
  ens.n_paths = cfg.n_paths;
  ens.dt = horizon / static_cast<double>(cfg.n_steps);
  ens.horizon = horizon;
  ens.stop_eps = cfg.stop_eps;
  ens.seed = cfg.seed;
  ens.times.push_back(0.0);
  while (ens.times.back() < end - 1e-12 * horizon) {
    const double next = std::min(end, ens.dt * static_cast<double>(ens.times.size()));
    ens.times.push_back(next);
  }
  ens.times.back() = end;
  ens.n_steps = ens.times.size() - 1;

  ens.cost_eps = cfg.cost_eps;
  ens.cost_eps.push_back(cfg.stop_eps);
  std::sort(ens.cost_eps.begin(), ens.cost_eps.end());
  ens.cost_eps.erase(std::unique(ens.cost_eps.begin(), ens.cost_eps.end(),
                                 [&](double a, double b) { return std::abs(a - b) <= 1e-12 * horizon; }),
                     ens.cost_eps.end());
  for (double e : ens.cost_eps) {
    require(e >= cfg.stop_eps - 1e-12 * horizon && e <= horizon, ErrorCode::TruncationMismatch,
            "cost margins must lie in [stop_eps, T]");
  }
  // Margins ascend, so recording times descend; paths consume them from the back.
  const std::size_t n_marg = ens.cost_eps.size();
  std::vector<double> record_time(n_marg);
  for (std::size_t m = 0; m < n_marg; ++m) record_time[m] = horizon - ens.cost_eps[m];

  std::vector<std::size_t> rows(ens.n_steps, 0);
  if (field != nullptr) {
    for (std::size_t s = 0; s < ens.n_steps; ++s) rows[s] = field->row_at(ens.times[s]);
  }
  const double bound = std::max(std::abs(grid.lower()), std::abs(grid.upper())) + 5.0;
  const GridMeasure* mu0 = std::get_if<GridMeasure>(&init);
  std::vector<double> cdf;
  if (mu0 != nullptr) cdf = mu0->cdf();
  const double x_start = mu0 == nullptr ? std::get<double>(init) : 0.0;

  ens.terminal.assign(cfg.n_paths, 0.0);
  ens.costs.assign(n_marg * cfg.n_paths, 0.0);
  if (cfg.keep_paths) ens.paths.assign(cfg.n_paths * (ens.n_steps + 1), 0.0);

  constexpr std::size_t chunk = 256;
  const std::size_t chunks = (cfg.n_paths + chunk - 1) / chunk;
  parallel_for(chunks, cfg.workers, [&](std::size_t c) {
    const std::size_t p_end = std::min(cfg.n_paths, (c + 1) * chunk);
    for (std::size_t p = c * chunk; p < p_end; ++p) {
      StreamRng rng(cfg.seed, p);
      double x = mu0 == nullptr ? x_start : sample_grid_measure(*mu0, cdf, rng.uniform());
      double cost = 0.0;
      std::size_t next_record = n_marg;
      while (next_record > 0 && record_time[next_record - 1] <= 1e-12 * horizon) {
        ens.costs[(next_record - 1) * cfg.n_paths + p] = 0.0;
        --next_record;
      }
      if (cfg.keep_paths) ens.paths[p * (ens.n_steps + 1)] = x;
      for (std::size_t s = 0; s < ens.n_steps; ++s) {
        const double t = ens.times[s];
        const double h = ens.times[s + 1] - t;
        const double a = field != nullptr ? field->alpha_at(rows[s], x) : 0.0;
        const double running = 0.5 * a * a;
        // Record margins that fall inside this step (control is constant on the step).
        while (next_record > 0 && record_time[next_record - 1] <= ens.times[s + 1] + 1e-12 * horizon) {
          const double part = std::max(0.0, record_time[next_record - 1] - t);
          ens.costs[(next_record - 1) * cfg.n_paths + p] = cost + running * part;
          --next_record;
        }
        cost += running * h;
        x += (drift.value(t, x) + a) * h + std::sqrt(h) * rng.normal();
        if (!(std::abs(x) < bound)) {
          throw DivergenceError(ErrorCode::Divergence,
                                "divergence: path " + std::to_string(p) + " left the guard band |x| < " +
                                    std::to_string(bound) + " at t = " + std::to_string(ens.times[s + 1]),
                                p);
        }
        if (cfg.keep_paths) ens.paths[p * (ens.n_steps + 1) + s + 1] = x;
      }
      ens.terminal[p] = x;
    }
  });
  return ens;
}

Estimate value_eval(const PathEnsemble& ensemble, double eps) {
  const double slack = 1e-12 * ensemble.horizon;
  if (eps < ensemble.stop_eps - slack) {
    fail(ErrorCode::TruncationMismatch, "eps is smaller than the ensemble's stop_eps");
  }
  for (std::size_t m = 0; m < ensemble.cost_eps.size(); ++m) {
    if (std::abs(ensemble.cost_eps[m] - eps) <= slack) return mean_and_stderr(ensemble.cost_at(m));
  }
  fail(ErrorCode::InvalidArgument, "running cost was not recorded at eps = " + std::to_string(eps) +
                                       "; add it to SimulationConfig::cost_eps");
}

std::string PathEnsemble::summary_json() const {
  nlohmann::json j;
  j["n_paths"] = n_paths;
  j["n_steps"] = n_steps;
  j["dt"] = dt;
  j["horizon"] = horizon;
  j["stop_eps"] = stop_eps;
  j["seed"] = seed;
  const auto m = mean_and_stderr(terminal);
  std::vector<double> sq(terminal.size());
  for (std::size_t i = 0; i < sq.size(); ++i) sq[i] = (terminal[i] - m.mean) * (terminal[i] - m.mean);
  j["terminal_mean"] = m.mean;
  j["terminal_mean_stderr"] = m.stderr_;
  j["terminal_variance"] = terminal.size() > 1 ? pairwise_sum(sq) / static_cast<double>(terminal.size() - 1) : 0.0;
  nlohmann::json costs_j = nlohmann::json::array();
  for (std::size_t k = 0; k < cost_eps.size(); ++k) {
    const auto e = mean_and_stderr(cost_at(k));
    costs_j.push_back({{"eps", cost_eps[k]}, {"mean", e.mean}, {"stderr", e.stderr_}});
  }
  j["running_cost"] = costs_j;
  return j.dump(2);
}

void PathEnsemble::write_paths_csv(const std::string& path) const {
  require(!paths.empty(), ErrorCode::InvalidArgument, "paths were not kept; enable keep_paths");
  std::ofstream out(path);
  require(static_cast<bool>(out), ErrorCode::Io, "cannot open " + path + " for writing");
  out << "path,t,x\n" << std::setprecision(17);
  for (std::size_t p = 0; p < n_paths; ++p) {
    for (std::size_t s = 0; s <= n_steps; ++s) out << p << ',' << times[s] << ',' << paths[p * (n_steps + 1) + s] << '\n';
  }
  require(static_cast<bool>(out), ErrorCode::Io, "write failed for " + path);
}

Estimate bel_gradient(const TransitionKernel& kernel, std::span<const double> g, double t, double x,
                      std::size_t n_paths, std::uint64_t seed, std::size_t n_steps, unsigned workers) {
  const double T = kernel.horizon();
  require(t >= 0.0 && t < T, ErrorCode::Domain, "BEL estimator needs 0 <= t < T");
  require(g.size() == kernel.grid().size(), ErrorCode::GridMismatch, "g length differs from grid");
  require(n_paths >= 2, ErrorCode::InvalidArgument, "BEL estimator needs at least two paths");
  for (double v : g) require(std::isfinite(v), ErrorCode::InvalidArgument, "g must be finite");
  const Grid& grid = kernel.grid();
  const double tau = T - t;
  const double bound = std::max(std::abs(grid.lower()), std::abs(grid.upper())) + 5.0;
  auto g_at = [&](double y) { return grid.contains(y) ? grid.interpolate(g, y) : 0.0; };
  const bool exact = kernel.variant() == KernelVariant::Brownian;
  require(exact || n_steps >= 1, ErrorCode::InvalidArgument, "BEL Euler scheme needs n_steps >= 1");
  const Drift& b = kernel.drift();
  std::vector<double> samples(n_paths);
  constexpr std::size_t chunk = 512;
  const std::size_t chunks = (n_paths + chunk - 1) / chunk;
  parallel_for(chunks, workers, [&](std::size_t c) {
    const std::size_t p_end = std::min(n_paths, (c + 1) * chunk);
    for (std::size_t p = c * chunk; p < p_end; ++p) {
      StreamRng rng(seed, p);
      if (exact) {
        const double z = rng.normal();
        samples[p] = g_at(x + std::sqrt(tau) * z) * z / std::sqrt(tau);
        continue;
      }
      const double h = tau / static_cast<double>(n_steps);
      const double sh = std::sqrt(h);
      double X = x, J = 1.0, N = 0.0;
      for (std::size_t s = 0; s < n_steps; ++s) {
        const double ts = t + h * static_cast<double>(s);
        const double dW = sh * rng.normal();
        N += J * dW;
        const double bx = b.dx(ts, X);
        X += b.value(ts, X) * h + dW;
        J += bx * J * h;
        if (!(std::abs(X) < bound)) {
          throw DivergenceError(ErrorCode::Divergence,
                                "divergence: BEL path " + std::to_string(p) + " left the guard band", p);
        }
      }
      samples[p] = g_at(X) * N / tau;
    }
  });
  return mean_and_stderr(samples);
}

}  // namespace scsb
