#include "scsb/kernel.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <mutex>
#include <numbers>
#include <string>

#include "scsb/error.hpp"
#include "scsb/parallel.hpp"
#include "scsb/stats.hpp"

namespace scsb {

const char* to_string(KernelVariant v) noexcept {
  switch (v) {
    case KernelVariant::Brownian: return "brownian";
    case KernelVariant::OrnsteinUhlenbeck: return "ou";
    case KernelVariant::Tabulated: return "tabulated";
  }
  return "unknown";
}

Drift builtin_drift(const std::string& name, double theta) {
  Drift d;
  d.name = name;
  if (name == "zero") {
    d.value = [](double, double) { return 0.0; };
    d.dx = [](double, double) { return 0.0; };
    d.lipschitz = 0.0;
  } else if (name == "ou") {
    d.value = [theta](double, double x) { return -theta * x; };
    d.dx = [theta](double, double) { return -theta; };
    d.lipschitz = std::abs(theta);
  } else if (name == "tanh") {
    d.value = [theta](double, double x) { return -theta * std::tanh(x); };
    d.dx = [theta](double, double x) {
      const double c = std::cosh(x);
      return -theta / (c * c);
    };
    d.lipschitz = std::abs(theta);
  } else {
    fail(ErrorCode::Config, "unknown drift '" + name + "' (expected zero, ou or tanh)");
  }
  return d;
}

struct TransitionKernel::Table {
  std::vector<Eigen::MatrixXd> steps;     // row-normalized one-step densities
  std::vector<Eigen::VectorXd> raw_mass;  // untruncated row masses per step kernel
  std::vector<std::size_t> step_of;       // mesh step j -> index into steps
  Eigen::VectorXd weights;
  mutable std::once_flag horizon_once;
  mutable Eigen::MatrixXd horizon;  // p(T, y_l; 0, x_i)
};

namespace {

constexpr double kTimeSlack = 1e-12;

double log_sum_exp(const double* v, std::size_t n, std::size_t stride = 1) {
  double top = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < n; ++i) top = std::max(top, v[i * stride]);
  if (!std::isfinite(top)) return top;
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += std::exp(v[i * stride] - top);
  return top + std::log(s);
}

}  // namespace

TransitionKernel TransitionKernel::brownian(double horizon, Grid grid) {
  require(horizon > 0.0 && std::isfinite(horizon), ErrorCode::InvalidArgument,
          "horizon must be positive");
  TransitionKernel k;
  k.variant_ = KernelVariant::Brownian;
  k.horizon_ = horizon;
  k.grid_ = std::move(grid);
  k.drift_ = builtin_drift("zero");
  return k;
}

TransitionKernel TransitionKernel::ornstein_uhlenbeck(double horizon, double theta, Grid grid) {
  require(horizon > 0.0 && std::isfinite(horizon), ErrorCode::InvalidArgument,
          "horizon must be positive");
  require(theta > 0.0 && std::isfinite(theta), ErrorCode::InvalidArgument,
          "OU rate theta must be positive");
  TransitionKernel k;
  k.variant_ = KernelVariant::OrnsteinUhlenbeck;
  k.horizon_ = horizon;
  k.theta_ = theta;
  k.grid_ = std::move(grid);
  k.drift_ = builtin_drift("ou", theta);
  return k;
}

TransitionKernel TransitionKernel::tabulated(Drift drift, double horizon, Grid grid,
                                             std::size_t n_steps) {
  require(horizon > 0.0 && std::isfinite(horizon), ErrorCode::InvalidArgument,
          "horizon must be positive");
  require(n_steps >= 8, ErrorCode::InvalidArgument, "tabulated kernel needs n_steps >= 8");
  require(static_cast<bool>(drift.value), ErrorCode::InvalidArgument, "drift has no value function");
  TransitionKernel k;
  k.variant_ = KernelVariant::Tabulated;
  k.horizon_ = horizon;
  k.grid_ = std::move(grid);
  k.drift_ = std::move(drift);
  const std::size_t n = k.grid_.size();
  const double dt = horizon / static_cast<double>(n_steps);
  k.mesh_.resize(n_steps + 1);
  for (std::size_t j = 0; j <= n_steps; ++j) k.mesh_[j] = dt * static_cast<double>(j);
  k.mesh_.back() = horizon;

  auto table = std::make_shared<Table>();
  table->weights = Eigen::Map<const Eigen::VectorXd>(k.grid_.weights().data(), n);
  const std::size_t distinct = k.drift_.time_homogeneous ? 1 : n_steps;
  const double norm = 1.0 / std::sqrt(2.0 * std::numbers::pi * dt);
  for (std::size_t j = 0; j < distinct; ++j) {
    Eigen::MatrixXd K(n, n);
    Eigen::VectorXd mass(n);
    const double t = k.mesh_[j];
    for (std::size_t i = 0; i < n; ++i) {
      const double x = k.grid_.node(i);
      const double m = x + k.drift_.value(t, x) * dt;
      require(std::isfinite(m), ErrorCode::InvalidArgument, "drift is not finite on the grid");
      double r = 0.0;
      for (std::size_t l = 0; l < n; ++l) {
        const double d = k.grid_.node(l) - m;
        const double p = norm * std::exp(-0.5 * d * d / dt);
        K(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(l)) = p;
        r += k.grid_.weight(l) * p;
      }
      require(r > 0.0, ErrorCode::GridTooNarrow, "one-step kernel row has no mass on the grid");
      K.row(static_cast<Eigen::Index>(i)) /= r;
      mass(static_cast<Eigen::Index>(i)) = r;
    }
    table->steps.push_back(std::move(K));
    table->raw_mass.push_back(std::move(mass));
  }
  table->step_of.resize(n_steps);
  for (std::size_t j = 0; j < n_steps; ++j) table->step_of[j] = distinct == 1 ? 0 : j;
  k.table_ = table;

  // Mass that leaves the grid from its center over the whole horizon.
  Eigen::VectorXd v = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n));
  v(static_cast<Eigen::Index>(n / 2)) = 1.0 / k.grid_.weight(n / 2);
  for (std::size_t j = 0; j < n_steps; ++j) {
    const std::size_t s = table->step_of[j];
    v = table->steps[s].transpose() *
        (table->weights.cwiseProduct(table->raw_mass[s]).cwiseProduct(v)).eval();
  }
  const double lost = 1.0 - table->weights.dot(v);
  if (lost > 1e-8) {
    fail(ErrorCode::GridTooNarrow, "grid too narrow: the tabulated kernel loses " +
                                       std::to_string(lost) + " mass through the edges");
  }
  return k;
}

void TransitionKernel::check_times(double t, double s) const {
  const double slack = kTimeSlack * horizon_;
  require(std::isfinite(t) && std::isfinite(s), ErrorCode::Domain, "times must be finite");
  require(s > t, ErrorCode::Domain, "transition requires s > t");
  require(t >= -slack && s <= horizon_ + slack, ErrorCode::Domain,
          "transition times must lie in [0, T]");
}

std::size_t TransitionKernel::mesh_index(double t) const {
  const double dt = mesh_[1] - mesh_[0];
  const double r = t / dt;
  const double j = std::round(r);
  if (std::abs(r - j) > 1e-9 || j < 0.0 || j > static_cast<double>(mesh_.size() - 1)) {
    fail(ErrorCode::InterpolationRefused,
         "time " + std::to_string(t) + " is not on the tabulated kernel's time mesh");
  }
  return static_cast<std::size_t>(j);
}

std::size_t TransitionKernel::node_of(double x) const {
  std::size_t i = 0;
  if (!grid_.node_index(x, i)) {
    fail(ErrorCode::InterpolationRefused,
         "state " + std::to_string(x) + " is not a node of the tabulated kernel's grid");
  }
  return i;
}

void TransitionKernel::gaussian_moments(double tau, double& c, double& v) const {
  if (variant_ == KernelVariant::OrnsteinUhlenbeck) {
    c = std::exp(-theta_ * tau);
    v = -std::expm1(-2.0 * theta_ * tau) / (2.0 * theta_);
  } else {
    c = 1.0;
    v = tau;
  }
}

std::vector<double> TransitionKernel::tabulated_row(std::size_t i, std::size_t j0,
                                                    std::size_t j1) const {
  const auto& tab = *table_;
  Eigen::VectorXd r = tab.steps[tab.step_of[j0]].row(static_cast<Eigen::Index>(i)).transpose();
  for (std::size_t j = j0 + 1; j < j1; ++j) {
    r = tab.steps[tab.step_of[j]].transpose() * tab.weights.cwiseProduct(r).eval();
  }
  return std::vector<double>(r.data(), r.data() + r.size());
}

double TransitionKernel::density(double s, double y, double t, double x) const {
  check_times(t, s);
  if (variant_ == KernelVariant::Tabulated) {
    const std::size_t j0 = mesh_index(t), j1 = mesh_index(s);
    const std::size_t i = node_of(x), l = node_of(y);
    return tabulated_row(i, j0, j1)[l];
  }
  double c = 1.0, v = 1.0;
  gaussian_moments(s - t, c, v);
  const double d = y - c * x;
  return std::exp(-0.5 * d * d / v) / std::sqrt(2.0 * std::numbers::pi * v);
}

double TransitionKernel::grad_log_density(double s, double y, double t, double x) const {
  check_times(t, s);
  if (variant_ == KernelVariant::Tabulated) {
    const std::size_t j0 = mesh_index(t), j1 = mesh_index(s);
    const std::size_t i = node_of(x), l = node_of(y);
    const std::size_t lo = i == 0 ? 0 : i - 1;
    const std::size_t hi = i + 1 == grid_.size() ? i : i + 1;
    const double a = tabulated_row(lo, j0, j1)[l];
    const double b = tabulated_row(hi, j0, j1)[l];
    require(a > 0.0 && b > 0.0, ErrorCode::Domain, "tabulated density underflows at this pair");
    return (std::log(b) - std::log(a)) / (grid_.spacing() * static_cast<double>(hi - lo));
  }
  double c = 1.0, v = 1.0;
  gaussian_moments(s - t, c, v);
  return c * (y - c * x) / v;
}

double TransitionKernel::row_mass(double t, double x, double s) const {
  check_times(t, s);
  require(analytic(), ErrorCode::InvalidArgument, "row_mass needs an analytic kernel");
  double c = 1.0, v = 1.0;
  gaussian_moments(s - t, c, v);
  const double norm = 1.0 / std::sqrt(2.0 * std::numbers::pi * v);
  std::vector<double> terms(grid_.size());
  for (std::size_t l = 0; l < grid_.size(); ++l) {
    const double d = grid_.node(l) - c * x;
    terms[l] = grid_.weight(l) * norm * std::exp(-0.5 * d * d / v);
  }
  return pairwise_sum(terms);
}

std::vector<double> TransitionKernel::row(double t, double x, double s) const {
  check_times(t, s);
  if (variant_ == KernelVariant::Tabulated) {
    return tabulated_row(node_of(x), mesh_index(t), mesh_index(s));
  }
  double c = 1.0, v = 1.0;
  gaussian_moments(s - t, c, v);
  std::vector<double> r(grid_.size());
  double mass = 0.0;
  for (std::size_t l = 0; l < grid_.size(); ++l) {
    const double d = grid_.node(l) - c * x;
    r[l] = std::exp(-0.5 * d * d / v);
    mass += grid_.weight(l) * r[l];
  }
  require(mass > 0.0, ErrorCode::Truncation, "transition row has no mass on the grid");
  for (double& e : r) e /= mass;
  return r;
}

ForwardResult TransitionKernel::forward(double t, double s, std::span<const double> f) const {
  check_times(t, s);
  const std::size_t n = grid_.size();
  require(f.size() == n, ErrorCode::GridMismatch, "function length differs from kernel grid");
  ForwardResult out;
  if (variant_ == KernelVariant::Tabulated) {
    const auto& tab = *table_;
    const std::size_t j0 = mesh_index(t), j1 = mesh_index(s);
    Eigen::VectorXd v = Eigen::Map<const Eigen::VectorXd>(f.data(), static_cast<Eigen::Index>(n));
    Eigen::VectorXd raw = v;
    for (std::size_t j = j0; j < j1; ++j) {
      const std::size_t k = tab.step_of[j];
      v = tab.steps[k].transpose() * tab.weights.cwiseProduct(v).eval();
      raw = tab.steps[k].transpose() *
            tab.weights.cwiseProduct(tab.raw_mass[k]).cwiseProduct(raw).eval();
    }
    out.density.assign(v.data(), v.data() + v.size());
    const double in_mass = grid_.integrate(f);
    out.retained_mass = in_mass > 0.0 ? tab.weights.dot(raw) / in_mass : 1.0;
    return out;
  }
  double c = 1.0, v = 1.0;
  gaussian_moments(s - t, c, v);
  const double norm = 1.0 / std::sqrt(2.0 * std::numbers::pi * v);
  Eigen::MatrixXd P(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    const double m = c * grid_.node(i);
    for (std::size_t l = 0; l < n; ++l) {
      const double d = grid_.node(l) - m;
      P(static_cast<Eigen::Index>(l), static_cast<Eigen::Index>(i)) = norm * std::exp(-0.5 * d * d / v);
    }
  }
  Eigen::Map<const Eigen::VectorXd> w(grid_.weights().data(), static_cast<Eigen::Index>(n));
  const Eigen::VectorXd mass = P.transpose() * w;  // mass(i) = sum_l w_l p_il
  Eigen::VectorXd coef(n);
  double in_mass = 0.0, kept = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const auto ii = static_cast<Eigen::Index>(i);
    coef(ii) = mass(ii) > 0.0 ? grid_.weight(i) * f[i] / mass(ii) : 0.0;
    in_mass += grid_.weight(i) * f[i];
    kept += grid_.weight(i) * f[i] * mass(ii);
  }
  const Eigen::VectorXd r = P * coef;
  out.density.assign(r.data(), r.data() + r.size());
  out.retained_mass = in_mass > 0.0 ? kept / in_mass : 1.0;
  return out;
}

BackwardResult TransitionKernel::backward_analytic(double t, double s,
                                                   std::span<const double> f) const {
  const std::size_t n = grid_.size();
  double c = 1.0, v = 1.0;
  gaussian_moments(s - t, c, v);
  const double c1 = c / v;
  std::vector<double> fw(n), w(grid_.weights());
  for (std::size_t l = 0; l < n; ++l) fw[l] = f[l] * w[l];
  BackwardResult out;
  out.value.resize(n);
  out.log_gradient.resize(n);
  auto finish = [&](std::size_t i, double s0f, double s1f, double s0, double s1) {
    const double value = s0f / s0;
    const double grad = c1 * (s1f / s0 - value * s1 / s0);
    out.value[i] = value;
    out.log_gradient[i] = value > 0.0 ? grad / value : std::numeric_limits<double>::quiet_NaN();
  };
  if (variant_ == KernelVariant::Brownian) {
    // Toeplitz structure: p depends on l - i only.
    const double h = grid_.spacing();
    std::vector<double> e0(n), e1(n);
    std::size_t reach = n;
    for (std::size_t d = 0; d < n; ++d) {
      const double z = static_cast<double>(d) * h;
      e0[d] = std::exp(-0.5 * z * z / v);
      e1[d] = z * e0[d];
      if (e0[d] == 0.0) {
        reach = d;
        break;
      }
    }
    for (std::size_t i = 0; i < n; ++i) {
      double s0f = 0.0, s1f = 0.0, s0 = 0.0, s1 = 0.0;
      const std::size_t hi = std::min(n, i + reach);
      for (std::size_t l = i; l < hi; ++l) {
        const std::size_t d = l - i;
        s0f += e0[d] * fw[l];
        s1f += e1[d] * fw[l];
        s0 += e0[d] * w[l];
        s1 += e1[d] * w[l];
      }
      const std::size_t lo = i + 1 > reach ? i + 1 - reach : 0;
      for (std::size_t l = lo; l < i; ++l) {
        const std::size_t d = i - l;
        s0f += e0[d] * fw[l];
        s1f -= e1[d] * fw[l];
        s0 += e0[d] * w[l];
        s1 -= e1[d] * w[l];
      }
      finish(i, s0f, s1f, s0, s1);
    }
    return out;
  }
  for (std::size_t i = 0; i < n; ++i) {
    const double m = c * grid_.node(i);
    double s0f = 0.0, s1f = 0.0, s0 = 0.0, s1 = 0.0;
    for (std::size_t l = 0; l < n; ++l) {
      const double d = grid_.node(l) - m;
      const double e = std::exp(-0.5 * d * d / v);
      s0f += e * fw[l];
      s1f += e * d * fw[l];
      s0 += e * w[l];
      s1 += e * d * w[l];
    }
    finish(i, s0f, s1f, s0, s1);
  }
  return out;
}

namespace {

std::vector<double> central_log_gradient(const Grid& g, const std::vector<double>& value) {
  const std::size_t n = value.size();
  std::vector<double> out(n, std::numeric_limits<double>::quiet_NaN());
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t lo = i == 0 ? 0 : i - 1;
    const std::size_t hi = i + 1 == n ? i : i + 1;
    if (value[lo] > 0.0 && value[hi] > 0.0) {
      out[i] = (std::log(value[hi]) - std::log(value[lo])) /
               (g.spacing() * static_cast<double>(hi - lo));
    }
  }
  return out;
}

}  // namespace

BackwardResult TransitionKernel::backward(double t, double s, std::span<const double> f) const {
  const double times[1] = {t};
  return std::move(backward_rows(times, s, f).front());
}

std::vector<BackwardResult> TransitionKernel::backward_rows(std::span<const double> times, double s,
                                                            std::span<const double> f,
                                                            unsigned workers) const {
  const std::size_t n = grid_.size();
  require(f.size() == n, ErrorCode::GridMismatch, "function length differs from kernel grid");
  for (double t : times) check_times(t, s);
  std::vector<BackwardResult> out(times.size());
  if (analytic()) {
    parallel_for(times.size(), workers, [&](std::size_t r) { out[r] = backward_analytic(times[r], s, f); });
    return out;
  }
  const auto& tab = *table_;
  const std::size_t j1 = mesh_index(s);
  std::vector<std::size_t> idx(times.size());
  for (std::size_t r = 0; r < times.size(); ++r) idx[r] = mesh_index(times[r]);
  Eigen::VectorXd v = Eigen::Map<const Eigen::VectorXd>(f.data(), static_cast<Eigen::Index>(n));
  std::size_t jmin = j1;
  for (std::size_t j : idx) jmin = std::min(jmin, j);
  for (std::size_t j = j1; j-- > jmin;) {
    v = tab.steps[tab.step_of[j]] * tab.weights.cwiseProduct(v).eval();
    for (std::size_t r = 0; r < idx.size(); ++r) {
      if (idx[r] != j) continue;
      out[r].value.assign(v.data(), v.data() + v.size());
      out[r].log_gradient = central_log_gradient(grid_, out[r].value);
    }
  }
  return out;
}

const Eigen::MatrixXd& TransitionKernel::horizon_matrix() const {
  const auto& tab = *table_;
  std::call_once(tab.horizon_once, [&] {
    const std::size_t steps = mesh_.size() - 1;
    const Eigen::MatrixXd W = tab.weights.asDiagonal();
    Eigen::MatrixXd result;
    if (tab.steps.size() == 1) {
      Eigen::MatrixXd base = tab.steps[0] * W;
      result = Eigen::MatrixXd::Identity(base.rows(), base.cols());
      for (std::size_t e = steps; e > 0; e >>= 1) {
        if (e & 1U) result = (result * base).eval();
        if (e > 1) base = (base * base).eval();
      }
    } else {
      result = tab.steps[0] * W;
      for (std::size_t j = 1; j < steps; ++j) result = (result * (tab.steps[j] * W)).eval();
    }
    tab.horizon = result * tab.weights.cwiseInverse().asDiagonal();
  });
  return tab.horizon;
}

Eigen::MatrixXd TransitionKernel::log_matrix(double t, double s) const {
  check_times(t, s);
  const std::size_t n = grid_.size();
  const auto N = static_cast<Eigen::Index>(n);
  Eigen::MatrixXd L(N, N);
  if (variant_ == KernelVariant::Tabulated) {
    const std::size_t j0 = mesh_index(t), j1 = mesh_index(s);
    if (j0 == 0 && j1 + 1 == mesh_.size()) {
      L = horizon_matrix().array().log().matrix();
    } else {
      for (std::size_t i = 0; i < n; ++i) {
        const auto r = tabulated_row(i, j0, j1);
        for (std::size_t l = 0; l < n; ++l) {
          L(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(l)) = std::log(r[l]);
        }
      }
    }
    return L;
  }
  double c = 1.0, v = 1.0;
  gaussian_moments(s - t, c, v);
  const double lognorm = -0.5 * std::log(2.0 * std::numbers::pi * v);
  std::vector<double> buf(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double m = c * grid_.node(i);
    for (std::size_t l = 0; l < n; ++l) {
      const double d = grid_.node(l) - m;
      buf[l] = lognorm - 0.5 * d * d / v;
    }
    std::vector<double> lw(n);
    for (std::size_t l = 0; l < n; ++l) lw[l] = buf[l] + std::log(grid_.weight(l));
    const double log_mass = log_sum_exp(lw.data(), n);
    for (std::size_t l = 0; l < n; ++l) {
      L(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(l)) = buf[l] - log_mass;
    }
  }
  return L;
}

Pushforward pushforward(const TransitionKernel& kernel, const GridMeasure& mu, double t, double s) {
  require_same_grid(kernel.grid(), mu.grid(), "pushforward");
  auto fwd = kernel.forward(t, s, mu.density());
  if (std::abs(fwd.retained_mass - 1.0) > 1e-3) {
    fail(ErrorCode::Truncation, "pushforward loses " + std::to_string(1.0 - fwd.retained_mass) +
                                    " of its mass through the grid edges; widen the grid");
  }
  return {GridMeasure(kernel.grid(), std::move(fwd.density)), fwd.retained_mass};
}

}  // namespace scsb
