#include "scsb/staticopt.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>

#include "scsb/stats.hpp"

namespace scsb {

void validate(const OptimizerConfig& cfg) {
  require(cfg.eta0 > 0.0 && std::isfinite(cfg.eta0), ErrorCode::InvalidArgument, "eta0 must be > 0");
  require(cfg.decay >= 0.0, ErrorCode::InvalidArgument, "step decay must be >= 0");
  require(cfg.tol_objective > 0.0 && cfg.tol_l1 > 0.0 && cfg.tol_variation > 0.0,
          ErrorCode::InvalidArgument, "optimizer tolerances must be > 0");
  require(cfg.max_iter >= 1 && cfg.stall_limit >= 1, ErrorCode::InvalidArgument,
          "max_iter and stall_limit must be >= 1");
}

namespace {

using Objective = std::function<double(const GridMeasure&)>;
using Variation = std::function<std::vector<double>(const GridMeasure&)>;

double weighted_mean(const GridMeasure& mu, const std::vector<double>& v) {
  std::vector<double> t(v.size(), 0.0);
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (mu[i] > 0.0) t[i] = mu[i] * v[i];
  }
  return mu.grid().integrate(t);
}

double certificate(const GridMeasure& mu, const std::vector<double>& v) {
  const double mean = weighted_mean(mu, v);
  double worst = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (mu[i] > 1e-12) worst = std::max(worst, std::abs(v[i] - mean));
  }
  return worst;
}

// Exponentiated-gradient mirror descent on the grid simplex with backtracking.
OptimizationResult mirror_descent(GridMeasure start, const Objective& objective,
                                  const Variation& variation, double scale,
                                  const OptimizerConfig& cfg) {
  validate(cfg);
  OptimizationResult res;
  GridMeasure f = std::move(start);
  double F = objective(f);
  require(std::isfinite(F), ErrorCode::Infeasible, "objective is infinite at the starting point");
  std::vector<double> v = variation(f);
  res.objective_trace.push_back(F);
  double eta = cfg.eta0;
  std::size_t flat = 0;
  const std::size_t n = f.size();
  std::vector<double> proposal(n);
  for (std::size_t it = 1; it <= cfg.max_iter; ++it) {
    res.iterations = it;
    res.certificate = certificate(f, v);
    if (res.certificate <= cfg.tol_variation) {
      res.converged = true;
      break;
    }
    const double mean = weighted_mean(f, v);
    double top = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < n; ++i) {
      if (f[i] > 0.0) top = std::max(top, -eta * scale * (v[i] - mean));
    }
    for (std::size_t i = 0; i < n; ++i) {
      proposal[i] = f[i] > 0.0 ? f[i] * std::exp(-eta * scale * (v[i] - mean) - top) : 0.0;
    }
    GridMeasure trial(f.grid(), proposal);
    const double Ft = objective(trial);
    if (std::isfinite(Ft) && Ft <= F) {
      const double dF = F - Ft;
      const double dl1 = l1_distance(trial, f);
      flat = dF > 0.0 ? 0 : flat + 1;
      f = std::move(trial);
      F = Ft;
      v = variation(f);
      res.objective_trace.push_back(F);
      if (flat >= cfg.stall_limit) {
        res.measure = f;
        res.objective = F;
        res.certificate = certificate(f, v);
        throw StallError(ErrorCode::Stall,
                         "stall: objective did not decrease for " + std::to_string(flat) +
                             " consecutive steps",
                         res);
      }
      if (dF < cfg.tol_objective && dl1 < cfg.tol_l1) {
        res.certificate = certificate(f, v);
        res.converged = res.certificate <= 10.0 * cfg.tol_variation || dl1 == 0.0;
        if (res.converged) break;
      }
      const double cap = cfg.eta0 / (1.0 + cfg.decay * static_cast<double>(it));
      eta = std::min(2.0 * eta, cap);
    } else {
      eta *= 0.5;
      double spread = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        if (f[i] > 0.0) spread = std::max(spread, std::abs(v[i] - mean));
      }
      if (eta * scale * spread < 1e-15) {
        // No representable multiplicative step lowers the objective any further.
        res.converged = true;
        break;
      }
    }
  }
  res.certificate = certificate(f, v);
  res.measure = std::move(f);
  res.objective = F;
  return res;
}


// KL(mu || prior) + k WeightedL1 is separable up to the mass constraint: for a multiplier lam each node
// solves log(f / prior) + 1 + k w sign(f - f_tar) = lam, with f = f_tar on the kink. Bisection on lam.
OptimizationResult weighted_l1_exact(const GridMeasure& prior, const Penalty& G, double k,
                                     const Objective& objective) {
  const Grid& g = prior.grid();
  const GridMeasure& tar = G.target();
  const std::size_t n = g.size();
  std::vector<double> lp(n), kw(n), f(n);
  for (std::size_t i = 0; i < n; ++i) {
    lp[i] = std::log(prior[i]);
    kw[i] = k * std::pow(std::abs(g.node(i)), G.params().exponent);
  }
  auto fill = [&](double lam) {
    for (std::size_t i = 0; i < n; ++i) {
      const double hi = lp[i] + lam - 1.0 - kw[i];
      const double lo = lp[i] + lam - 1.0 + kw[i];
      if (tar[i] <= 0.0 || hi > std::log(tar[i])) f[i] = std::exp(hi);
      else if (lo < std::log(tar[i])) f[i] = std::exp(lo);
      else f[i] = tar[i];
    }
    return g.integrate(f);
  };
  double a = 1.0, b = 1.0;
  std::size_t iters = 0;
  while (fill(a) > 1.0 && iters < 2000) a -= std::max(1.0, std::abs(a)), ++iters;
  while (fill(b) < 1.0 && iters < 2000) b += std::max(1.0, std::abs(b)), ++iters;
  require(fill(a) <= 1.0 && fill(b) >= 1.0, ErrorCode::NonConvergence, "weighted-L1 multiplier bracket failed");
  for (int it = 0; it < 200 && b - a > 4.0 * std::numeric_limits<double>::epsilon() * std::max(1.0, std::abs(b));
       ++it, ++iters) {
    const double mid = 0.5 * (a + b);
    if (fill(mid) < 1.0) a = mid;
    else b = mid;
  }
  const double lam = 0.5 * (a + b);
  fill(lam);
  OptimizationResult res;
  res.measure = GridMeasure(g, f);
  res.objective = objective(res.measure);
  res.objective_trace = {objective(prior), res.objective};
  res.iterations = iters;
  double worst = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double r = lam - 1.0 - std::log(res.measure[i] / prior[i]);
    const double d = res.measure[i] - tar[i];
    double gap = 0.0;
    if (r > kw[i]) gap = r - kw[i];
    else if (r < -kw[i]) gap = -kw[i] - r;
    if (d > 1e-14 * tar[i] && std::abs(r - kw[i]) > gap) gap = std::abs(r - kw[i]);
    if (d < -1e-14 * tar[i] && std::abs(r + kw[i]) > gap) gap = std::abs(r + kw[i]);
    worst = std::max(worst, gap);
  }
  res.certificate = worst;
  res.converged = true;
  return res;
}

}  // namespace

DkResult minimize_dk(const GridMeasure& prior, const Penalty& G, double k, const OptimizerConfig& cfg) {
  require_same_grid(prior.grid(), G.target().grid(), "minimize_dk");
  require(k >= 0.0 && std::isfinite(k), ErrorCode::InvalidArgument, "penalty level k must be >= 0");
  for (std::size_t i = 0; i < prior.size(); ++i) {
    require(prior[i] > kDensityFloor, ErrorCode::InvalidArgument,
            "prior must be strictly positive on the grid");
  }
  DkResult out;
  out.m = kl_divergence(G.target(), prior);
  require(std::isfinite(out.m), ErrorCode::Infeasible, "D_KL(mu_tar || prior) is infinite");

  const Objective objective = [&](const GridMeasure& mu) {
    const double kl = kl_divergence(mu, prior);
    return k == 0.0 ? kl : kl + k * G.eval(mu);
  };
  const Variation variation = [&](const GridMeasure& mu) {
    std::vector<double> v(mu.size());
    for (std::size_t i = 0; i < v.size(); ++i) {
      v[i] = mu[i] > 0.0 ? std::log(mu[i] / prior[i]) + 1.0 : 0.0;
    }
    if (k > 0.0) {
      const auto g = G.first_variation(mu);
      for (std::size_t i = 0; i < v.size(); ++i) v[i] += k * g[i];
    }
    return v;
  };
  const double scale = 1.0 / (1.0 + k);
  const GridMeasure& start = std::isfinite(objective(prior)) ? prior : G.target();
  if (G.kind() == PenaltyKind::WeightedL1 && k > 0.0) {
    out.opt = weighted_l1_exact(prior, G, k, objective);
  } else {
    out.opt = mirror_descent(start, objective, variation, scale, cfg);
  }
  if (out.opt.objective > out.m * (1.0 + 1e-12) + 1e-15 && &start != &G.target()) {
    out.opt = mirror_descent(G.target(), objective, variation, scale, cfg);
    out.restarted = true;
  }
  out.dk = out.opt.objective;
  out.penalty = G.eval(out.opt.measure);
  out.bound_holds = k == 0.0 || out.penalty <= out.m / k * (1.0 + 1e-9) + 1e-14;
  return out;
}

OptimizationResult gamma2(std::span<const double> rho, const Penalty& G, double k,
                          const OptimizerConfig& cfg) {
  const GridMeasure& target = G.target();
  require(rho.size() == target.size(), ErrorCode::GridMismatch, "rho length differs from grid");
  require(k > 0.0 && std::isfinite(k), ErrorCode::InvalidArgument, "gamma2 needs k > 0");
  std::vector<double> log_rho(rho.size());
  for (std::size_t i = 0; i < rho.size(); ++i) {
    require(rho[i] > 0.0 && std::isfinite(rho[i]), ErrorCode::InvalidArgument,
            "rho must be positive and finite on the grid");
    log_rho[i] = std::log(std::max(rho[i], kDensityFloor));
  }
  const Grid& grid = target.grid();
  const Objective objective = [&](const GridMeasure& mu) {
    std::vector<double> t(mu.size());
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = mu[i] * log_rho[i];
    return k * G.eval(mu) + grid.integrate(t);
  };
  const Variation variation = [&](const GridMeasure& mu) {
    auto v = G.first_variation(mu);
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = k * v[i] + log_rho[i];
    return v;
  };
  return mirror_descent(target, objective, variation, 1.0 / k, cfg);
}

}  // namespace scsb
