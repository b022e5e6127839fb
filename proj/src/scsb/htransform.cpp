#include "scsb/htransform.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>

#include "scsb/error.hpp"
#include "scsb/stats.hpp"

namespace scsb {

ControlField::ControlField(Grid grid, double horizon, std::vector<double> times, std::vector<double> h,
                           std::vector<double> alpha, std::vector<double> terminal)
    : grid_(std::move(grid)),
      horizon_(horizon),
      times_(std::move(times)),
      h_(std::move(h)),
      alpha_(std::move(alpha)),
      terminal_(std::move(terminal)) {
  require(!times_.empty(), ErrorCode::InvalidArgument, "control field needs at least one time");
  require(h_.size() == times_.size() * grid_.size() && alpha_.size() == h_.size(),
          ErrorCode::InvalidArgument, "control field tables have the wrong size");
}

ControlField ControlField::zero(const Grid& grid, double horizon, std::vector<double> times) {
  const std::size_t cells = times.size() * grid.size();
  return ControlField(grid, horizon, std::move(times), std::vector<double>(cells, 1.0),
                      std::vector<double>(cells, 0.0), std::vector<double>(grid.size(), 1.0));
}

std::size_t ControlField::row_at(double t) const noexcept {
  const double slack = 1e-12 * horizon_;
  auto it = std::upper_bound(times_.begin(), times_.end(), t + slack);
  if (it == times_.begin()) return 0;
  return static_cast<std::size_t>(it - times_.begin()) - 1;
}

double ControlField::max_abs_alpha() const noexcept {
  double m = 0.0;
  for (double a : alpha_) m = std::max(m, std::abs(a));
  return m;
}

double ControlField::lipschitz_estimate() const noexcept {
  double kappa = 0.0;
  const std::size_t n = grid_.size();
  for (std::size_t j = 0; j < rows(); ++j) {
    for (std::size_t i = 0; i + 1 < n; ++i) {
      kappa = std::max(kappa, std::abs(alpha(j, i + 1) - alpha(j, i)) / grid_.spacing());
    }
  }
  return kappa;
}

void ControlField::write_csv(const std::string& path) const {
  std::ofstream out(path);
  require(static_cast<bool>(out), ErrorCode::Io, "cannot open " + path + " for writing");
  out << "t,x,h,alpha\n" << std::setprecision(17);
  for (std::size_t j = 0; j < rows(); ++j) {
    for (std::size_t i = 0; i < grid_.size(); ++i) {
      out << times_[j] << ',' << grid_.node(i) << ',' << h(j, i) << ',' << alpha(j, i) << '\n';
    }
  }
  require(static_cast<bool>(out), ErrorCode::Io, "write failed for " + path);
}

std::vector<double> uniform_time_mesh(double horizon, std::size_t points) {
  require(points >= 1, ErrorCode::InvalidArgument, "time mesh needs at least one point");
  std::vector<double> t(points);
  for (std::size_t j = 0; j < points; ++j) {
    t[j] = horizon * static_cast<double>(j) / static_cast<double>(points);
  }
  return t;
}

namespace {

ControlField build_field(const TransitionKernel& kernel, std::span<const double> terminal,
                         std::span<const double> times, unsigned workers) {
  require(!times.empty(), ErrorCode::InvalidArgument, "empty time mesh");
  require(std::abs(times.front()) <= 1e-12 * kernel.horizon(), ErrorCode::InvalidArgument,
          "time mesh must start at 0");
  for (std::size_t j = 1; j < times.size(); ++j) {
    require(times[j] > times[j - 1], ErrorCode::InvalidArgument, "time mesh must be increasing");
  }
  const auto rows = kernel.backward_rows(times, kernel.horizon(), terminal, workers);
  const std::size_t n = kernel.grid().size();
  std::vector<double> h(times.size() * n), alpha(times.size() * n);
  for (std::size_t j = 0; j < rows.size(); ++j) {
    for (std::size_t i = 0; i < n; ++i) {
      const double v = rows[j].value[i];
      const double a = rows[j].log_gradient[i];
      if (!(v > 0.0) || !std::isfinite(v) || !std::isfinite(a)) {
        fail(ErrorCode::RatioUnbounded,
             "h is not positive and finite on the grid (terminal ratio violates delta <= g <= C)");
      }
      h[j * n + i] = v;
      alpha[j * n + i] = a;
    }
  }
  return ControlField(kernel.grid(), kernel.horizon(), std::vector<double>(times.begin(), times.end()),
                      std::move(h), std::move(alpha),
                      std::vector<double>(terminal.begin(), terminal.end()));
}

}  // namespace

ControlField solve_bridge_delta(const TransitionKernel& kernel, double x0, const GridMeasure& terminal,
                                std::span<const double> times, unsigned workers) {
  require_same_grid(kernel.grid(), terminal.grid(), "solve_bridge_delta");
  const auto prior = kernel.row(0.0, x0, kernel.horizon());
  std::vector<double> g(prior.size());
  for (std::size_t i = 0; i < g.size(); ++i) {
    if (terminal[i] == 0.0) {
      g[i] = 0.0;
      continue;
    }
    g[i] = prior[i] > 0.0 ? terminal[i] / prior[i] : std::numeric_limits<double>::infinity();
    if (!std::isfinite(g[i]) || g[i] > 1e250) {
      fail(ErrorCode::RatioUnbounded,
           "g = f_tar / p(T,.;0,x0) overflows on the grid; the target is too heavy-tailed "
           "for the bounded-ratio hypothesis delta <= g <= C");
    }
  }
  return build_field(kernel, g, times, workers);
}

ControlField solve_bridge_general(const TransitionKernel& kernel, std::span<const double> rho,
                                  std::span<const double> times, unsigned workers) {
  require(rho.size() == kernel.grid().size(), ErrorCode::GridMismatch, "rho length differs from grid");
  bool any = false;
  for (double r : rho) {
    require(std::isfinite(r) && r >= 0.0, ErrorCode::InvalidArgument, "rho must be finite and >= 0");
    any = any || r > 0.0;
  }
  require(any, ErrorCode::Degenerate, "rho is identically zero");
  return build_field(kernel, rho, times, workers);
}

double control_l1_time_gap(const ControlField& a, const ControlField& b, double x, double eps) {
  require_same_grid(a.grid(), b.grid(), "control_l1_time_gap");
  require(a.times() == b.times(), ErrorCode::GridMismatch, "fields have different time meshes");
  const double T = a.horizon();
  require(eps >= 0.0 && eps <= T, ErrorCode::Domain, "eps must lie in [0, T]");
  require(a.grid().contains(x), ErrorCode::Domain, "probe state lies outside the grid");
  const double end = T - eps;
  const auto& t = a.times();
  if (end <= t.front()) return 0.0;
  auto gap = [&](std::size_t j) { return std::abs(a.alpha_at(j, x) - b.alpha_at(j, x)); };
  double total = 0.0;
  std::size_t j = 0;
  for (; j + 1 < t.size() && t[j + 1] <= end; ++j) total += 0.5 * (gap(j) + gap(j + 1)) * (t[j + 1] - t[j]);
  if (end > t[j]) {
    if (j + 1 < t.size()) {
      const double s = (end - t[j]) / (t[j + 1] - t[j]);
      const double ge = (1.0 - s) * gap(j) + s * gap(j + 1);
      total += 0.5 * (gap(j) + ge) * (end - t[j]);
    } else {
      // Past the last row: |gap| ~ C / sqrt(T - t), matched at the last row.
      const double c = gap(j) * std::sqrt(T - t[j]);
      total += 2.0 * c * (std::sqrt(T - t[j]) - std::sqrt(std::max(0.0, eps)));
    }
  }
  return total;
}

double bridge_value_general(const TransitionKernel& kernel, const GridMeasure& mu_ini,
                            const GridMeasure& mu_tar, std::span<const double> rho) {
  require_same_grid(kernel.grid(), mu_ini.grid(), "bridge_value_general");
  require_same_grid(kernel.grid(), mu_tar.grid(), "bridge_value_general");
  const auto h0 = kernel.backward(0.0, kernel.horizon(), rho).value;
  const std::size_t n = rho.size();
  std::vector<double> a(n, 0.0), b(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    if (mu_tar[i] > 0.0) {
      require(rho[i] > 0.0, ErrorCode::Support, "log rho = -inf where the target has mass");
      a[i] = std::log(rho[i]) * mu_tar[i];
    }
    if (mu_ini[i] > 0.0) {
      require(h0[i] > 0.0, ErrorCode::Support, "log h(0) = -inf where the initial law has mass");
      b[i] = std::log(h0[i]) * mu_ini[i];
    }
  }
  return kernel.grid().integrate(a) - kernel.grid().integrate(b);
}

namespace {

// Uncontrolled part of the marginal: integral f_ini(x) K_{0->t}(x, .) / h(0, x) dx.
std::vector<double> reference_part(const TransitionKernel& kernel, std::span<const double> terminal,
                                   std::span<const double> h0, const InitialLaw& init, double t) {
  if (const double* x0 = std::get_if<double>(&init)) {
    auto r = kernel.row(0.0, *x0, t);
    const auto prior = kernel.row(0.0, *x0, kernel.horizon());
    std::vector<double> terms(prior.size());
    for (std::size_t i = 0; i < prior.size(); ++i) terms[i] = kernel.grid().weight(i) * prior[i] * terminal[i];
    const double hx0 = pairwise_sum(terms);
    for (double& v : r) v /= hx0;
    return r;
  }
  const auto& mu = std::get<GridMeasure>(init);
  require_same_grid(kernel.grid(), mu.grid(), "controlled marginal");
  std::vector<double> f(mu.size());
  for (std::size_t i = 0; i < f.size(); ++i) f[i] = mu[i] > 0.0 ? mu[i] / h0[i] : 0.0;
  return kernel.forward(0.0, t, f).density;
}

}  // namespace

GridMeasure controlled_marginal(const TransitionKernel& kernel, std::span<const double> terminal,
                                const InitialLaw& init, double t) {
  require(t > 0.0 && t < kernel.horizon() + 1e-12 * kernel.horizon(), ErrorCode::Domain,
          "controlled marginal needs 0 < t <= T");
  std::vector<double> h0;
  if (std::holds_alternative<GridMeasure>(init)) h0 = kernel.backward(0.0, kernel.horizon(), terminal).value;
  auto q = reference_part(kernel, terminal, h0, init, t);
  if (t < kernel.horizon() * (1.0 - 1e-12)) {
    const auto h = kernel.backward(t, kernel.horizon(), terminal).value;
    for (std::size_t i = 0; i < q.size(); ++i) q[i] *= h[i];
  } else {
    for (std::size_t i = 0; i < q.size(); ++i) q[i] *= terminal[i];
  }
  return GridMeasure(kernel.grid(), std::move(q));
}

double running_cost_quadrature(const TransitionKernel& kernel, const ControlField& field,
                               const InitialLaw& init, double eps) {
  require_same_grid(kernel.grid(), field.grid(), "running_cost_quadrature");
  const double T = field.horizon();
  require(eps >= 0.0 && eps <= T, ErrorCode::Domain, "eps must lie in [0, T]");
  const double end = T - eps;
  const auto& t = field.times();
  const Grid& g = field.grid();
  const auto h0 = field.h_row(0);
  auto cost_at = [&](std::size_t j) {
    if (j == 0) {
      if (const double* x0 = std::get_if<double>(&init)) {
        const double a = field.alpha_at(0, *x0);
        return 0.5 * a * a;
      }
      const auto& mu = std::get<GridMeasure>(init);
      std::vector<double> c(g.size());
      for (std::size_t i = 0; i < c.size(); ++i) c[i] = 0.5 * field.alpha(0, i) * field.alpha(0, i) * mu[i];
      return g.integrate(c);
    }
    auto q = reference_part(kernel, field.terminal(), h0, init, t[j]);
    std::vector<double> c(g.size());
    for (std::size_t i = 0; i < c.size(); ++i) {
      c[i] = 0.5 * field.alpha(j, i) * field.alpha(j, i) * q[i] * field.h(j, i);
    }
    return g.integrate(c);
  };
  if (end <= t.front()) return 0.0;
  std::vector<double> cost;
  std::size_t j = 0;
  cost.push_back(cost_at(0));
  double total = 0.0;
  for (; j + 1 < t.size() && t[j + 1] <= end; ++j) {
    cost.push_back(cost_at(j + 1));
    total += 0.5 * (cost[j] + cost[j + 1]) * (t[j + 1] - t[j]);
  }
  if (end > t[j]) {
    require(j + 1 < t.size(), ErrorCode::Domain,
            "field mesh ends before T - eps; extend the mesh or raise eps");
    const double next = cost_at(j + 1);
    const double s = (end - t[j]) / (t[j + 1] - t[j]);
    const double ce = (1.0 - s) * cost[j] + s * next;
    total += 0.5 * (cost[j] + ce) * (end - t[j]);
  }
  return total;
}

double backward_residual(const TransitionKernel& kernel, const ControlField& field, std::size_t j,
                         double lo, double hi) {
  require(j + 1 < field.rows(), ErrorCode::InvalidArgument, "residual needs a following row");
  const auto next = field.h_row(j + 1);
  const auto step = kernel.backward(field.times()[j], field.times()[j + 1], next).value;
  double worst = 0.0;
  for (std::size_t i = 0; i < field.grid().size(); ++i) {
    const double x = field.grid().node(i);
    if (x < lo || x > hi) continue;
    worst = std::max(worst, std::abs(field.h(j, i) - step[i]));
  }
  return worst;
}

}  // namespace scsb
