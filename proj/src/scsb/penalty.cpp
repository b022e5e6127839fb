#include "scsb/penalty.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "scsb/error.hpp"
#include "scsb/stats.hpp"

namespace scsb {

Penalty::Penalty(PenaltyKind kind, GridMeasure target, PenaltyParams params)
    : kind_(kind), target_(std::move(target)), params_(params) {
  if (kind_ == PenaltyKind::W2Guardrail) target_quantiles_ = quantiles(target_);
}

Penalty Penalty::kl(GridMeasure target) {
  return Penalty(PenaltyKind::KL, std::move(target), PenaltyParams{});
}

Penalty Penalty::weighted_l1(GridMeasure target, double exponent) {
  require(exponent >= 0.0 && std::isfinite(exponent), ErrorCode::InvalidArgument,
          "weighted-L1 exponent must be finite and >= 0");
  PenaltyParams p;
  p.exponent = exponent;
  return Penalty(PenaltyKind::WeightedL1, std::move(target), p);
}

Penalty Penalty::w2_guardrail(GridMeasure target, double guardrail, double decay, double center) {
  require(guardrail >= 0.0 && decay >= 0.0, ErrorCode::InvalidArgument,
          "guardrail constant and decay must be >= 0");
  PenaltyParams p;
  p.guardrail = guardrail;
  p.decay = decay;
  p.center = center;
  return Penalty(PenaltyKind::W2Guardrail, std::move(target), p);
}

std::string Penalty::name() const {
  switch (kind_) {
    case PenaltyKind::KL: return "kl";
    case PenaltyKind::WeightedL1: return "weighted_l1";
    case PenaltyKind::W2Guardrail: return "w2_guardrail";
  }
  return "unknown";
}

double Penalty::weight(double x) const {
  const double d = x - params_.center;
  return std::exp(-params_.decay * d * d);
}

double Penalty::eval(const GridMeasure& mu) const {
  require_same_grid(mu.grid(), target_.grid(), "penalty");
  const Grid& g = mu.grid();
  switch (kind_) {
    case PenaltyKind::KL:
      return kl_divergence(mu, target_);
    case PenaltyKind::WeightedL1: {
      std::vector<double> t(mu.size());
      for (std::size_t i = 0; i < t.size(); ++i) {
        t[i] = std::pow(std::abs(g.node(i)), params_.exponent) * std::abs(mu[i] - target_[i]);
      }
      return g.integrate(t);
    }
    case PenaltyKind::W2Guardrail: {
      double sup = 0.0;
      for (std::size_t i = 0; i < mu.size(); ++i) {
        sup = std::max(sup, std::abs(mu[i] - target_[i]) / weight(g.node(i)));
      }
      return wasserstein(mu, target_, 2) + params_.guardrail * sup;
    }
  }
  return 0.0;
}

namespace {

// Derivative of the quantile-based W2 with respect to the (unnormalized) density
// values, expressed per unit density.
std::vector<double> w2_first_variation(const GridMeasure& mu, std::span<const double> target_q) {
  const Grid& g = mu.grid();
  const std::size_t n = g.size();
  const std::size_t m = target_q.size();
  const auto qa = quantiles(mu, m);
  std::vector<double> sq(m);
  for (std::size_t j = 0; j < m; ++j) sq[j] = (qa[j] - target_q[j]) * (qa[j] - target_q[j]);
  const double w2 = std::sqrt(pairwise_sum(sq) / static_cast<double>(m));
  std::vector<double> variation(n, 0.0);
  if (w2 <= 0.0) return variation;  // zero subgradient at the target

  // A[i] = dW2/dF_i where F is the trapezoid cumulative distribution.
  const auto F = mu.cdf();
  std::vector<double> A(n, 0.0);
  std::size_t i = 0;
  const std::size_t last = n - 1;
  for (std::size_t j = 0; j < m; ++j) {
    const double u = (static_cast<double>(j) + 0.5) / static_cast<double>(m);
    while (i + 1 < last && F[i + 1] <= u) ++i;
    const double d = F[i + 1] - F[i];
    if (d <= 0.0) continue;
    const double s = std::clamp((u - F[i]) / d, 0.0, 1.0);
    const double c = (qa[j] - target_q[j]) / (w2 * static_cast<double>(m));
    A[i] += c * (-g.spacing() * (1.0 - s) / d);
    A[i + 1] += c * (-g.spacing() * s / d);
  }
  // dF_i/df_l: spacing/2 for l = 0 or l = i, spacing for 0 < l < i.
  double tail = 0.0;  // sum of A[i] for i > l
  for (std::size_t l = n; l-- > 1;) {
    variation[l] = l == last ? A[l] : 0.5 * A[l] + tail;
    tail += A[l];
  }
  variation[0] = tail;
  return variation;
}

}  // namespace

std::vector<double> Penalty::first_variation(const GridMeasure& mu) const {
  require_same_grid(mu.grid(), target_.grid(), "penalty gradient");
  const Grid& g = mu.grid();
  const std::size_t n = mu.size();
  std::vector<double> v(n, 0.0);
  switch (kind_) {
    case PenaltyKind::KL:
      for (std::size_t i = 0; i < n; ++i) {
        const bool mu_pos = mu[i] > kDensityFloor;
        const bool tar_pos = target_[i] > kDensityFloor;
        if (mu_pos != tar_pos) {
          fail(ErrorCode::Nondifferentiable,
               "KL penalty is not differentiable where the supports of mu and target differ");
        }
        v[i] = mu_pos ? std::log(mu[i] / target_[i]) + 1.0 : 0.0;
      }
      return v;
    case PenaltyKind::WeightedL1:
      for (std::size_t i = 0; i < n; ++i) {
        const double d = mu[i] - target_[i];
        const double sign = d > 0.0 ? 1.0 : (d < 0.0 ? -1.0 : 0.0);
        v[i] = std::pow(std::abs(g.node(i)), params_.exponent) * sign;
      }
      return v;
    case PenaltyKind::W2Guardrail: {
      v = w2_first_variation(mu, target_quantiles_);
      if (params_.guardrail == 0.0) return v;
      std::vector<double> r(n);
      double top = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        r[i] = std::abs(mu[i] - target_[i]) / weight(g.node(i));
        top = std::max(top, r[i]);
      }
      if (top == 0.0) return v;
      std::vector<double> soft(n);
      for (std::size_t i = 0; i < n; ++i) soft[i] = std::exp((r[i] - top) / params_.temperature);
      const double z = pairwise_sum(soft);
      for (std::size_t i = 0; i < n; ++i) {
        const double d = mu[i] - target_[i];
        const double sign = d > 0.0 ? 1.0 : (d < 0.0 ? -1.0 : 0.0);
        v[i] += params_.guardrail * (soft[i] / z) * sign / weight(g.node(i)) / g.weight(i);
      }
      return v;
    }
  }
  return v;
}

ClassEReport check_class_e(const GridMeasure& mu, double curvature, double density_bound,
                           std::span<const double> control) {
  require(control.size() == mu.size(), ErrorCode::GridMismatch, "control length differs from grid");
  ClassEReport report;
  const Grid& g = mu.grid();
  for (std::size_t i = 0; i < mu.size(); ++i) {
    const double x = g.node(i);
    const double f = mu[i];
    const double logf = f > kDensityFloor ? std::log(f) : -std::numeric_limits<double>::infinity();
    if (!(std::abs(logf) <= curvature * (1.0 + x * x))) report.log_growth_violations.push_back(i);
    if (!(f <= density_bound * control[i] * control[i])) report.density_bound_violations.push_back(i);
  }
  report.log_growth_ok = report.log_growth_violations.empty();
  report.density_bound_ok = report.density_bound_violations.empty();
  return report;
}

}  // namespace scsb
