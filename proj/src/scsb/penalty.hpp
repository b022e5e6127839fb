#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "scsb/measure.hpp"

namespace scsb {

enum class PenaltyKind { KL, WeightedL1, W2Guardrail };

struct PenaltyParams {
  double exponent = 2.0;      // WeightedL1: p
  double guardrail = 0.1;     // W2Guardrail: c
  double decay = 0.05;        // W2Guardrail: lambda
  double center = 0.0;        // W2Guardrail: x0
  double temperature = 1e-3;  // smoothed sup in the W2Guardrail gradient
};

// Terminal penalty G(mu; mu_tar), vanishing exactly at the target.
class Penalty {
 public:
  static Penalty kl(GridMeasure target);
  static Penalty weighted_l1(GridMeasure target, double exponent);
  static Penalty w2_guardrail(GridMeasure target, double guardrail, double decay, double center);

  PenaltyKind kind() const noexcept { return kind_; }
  const PenaltyParams& params() const noexcept { return params_; }
  const GridMeasure& target() const noexcept { return target_; }
  std::string name() const;

  double eval(const GridMeasure& mu) const;
  // First variation dG/df at mu, per unit density: for mass-preserving eta,
  // G(mu + s eta) - G(mu) = s * integral(variation * eta) + o(s).
  std::vector<double> first_variation(const GridMeasure& mu) const;
  // Guardrail weight phi(x) = exp(-lambda |x - x0|^2).
  double weight(double x) const;

 private:
  Penalty(PenaltyKind kind, GridMeasure target, PenaltyParams params);

  PenaltyKind kind_;
  GridMeasure target_;
  PenaltyParams params_;
  std::vector<double> target_quantiles_;
};

struct ClassEReport {
  bool log_growth_ok = true;
  bool density_bound_ok = true;
  std::vector<std::size_t> log_growth_violations;
  std::vector<std::size_t> density_bound_violations;
  bool passed() const noexcept { return log_growth_ok && density_bound_ok; }
};

// Pointwise membership test: |log f(x)| <= C (1 + |x|^2) and f(x) <= K g(x)^2 on every node.
ClassEReport check_class_e(const GridMeasure& mu, double curvature, double density_bound,
                           std::span<const double> control);

}  // namespace scsb
