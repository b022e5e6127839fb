#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numbers>
#include <random>
#include <vector>

#include "scsb/grid.hpp"
#include "scsb/measure.hpp"

namespace testing {

inline double normal_pdf(double x, double mean, double var) {
  const double d = x - mean;
  return std::exp(-0.5 * d * d / var) / std::sqrt(2.0 * std::numbers::pi * var);
}

// Plain trapezoid rule on equally spaced samples, independent of scsb::Grid.
inline double trapz(const std::vector<double>& f, double h) {
  double s = 0.0;
  for (std::size_t i = 0; i + 1 < f.size(); ++i) s += 0.5 * (f[i] + f[i + 1]);
  return s * h;
}

inline std::vector<double> sample(const scsb::Grid& g, auto&& f) {
  std::vector<double> v(g.size());
  for (std::size_t i = 0; i < g.size(); ++i) v[i] = f(g.node(i));
  return v;
}

inline double l1(const std::vector<double>& a, const std::vector<double>& b, double h) {
  std::vector<double> d(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) d[i] = std::abs(a[i] - b[i]);
  return trapz(d, h);
}

// Random two-component Gaussian mixture, strictly positive on the grid.
inline scsb::GridMeasure random_mixture(const scsb::Grid& g, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> m(-2.0, 2.0), s(0.4, 1.5), w(0.2, 1.0);
  const double m1 = m(rng), m2 = m(rng), s1 = s(rng), s2 = s(rng), w1 = w(rng), w2 = w(rng);
  return scsb::GridMeasure(g, sample(g, [&](double x) {
    return w1 * normal_pdf(x, m1, s1 * s1) + w2 * normal_pdf(x, m2, s2 * s2);
  }));
}

// Mass-preserving perturbation direction with unit sup norm.
inline std::vector<double> random_direction(const scsb::Grid& g, std::mt19937_64& rng) {
  std::normal_distribution<double> z;
  const double a = z(rng), b = z(rng), c = z(rng);
  std::vector<double> eta = sample(g, [&](double x) {
    return (a + b * x + c * std::sin(2.0 * x)) * std::exp(-0.5 * x * x);
  });
  const double mean = g.integrate(eta) / (g.upper() - g.lower());
  double top = 0.0;
  for (auto& e : eta) {
    e -= mean;
    top = std::max(top, std::abs(e));
  }
  for (auto& e : eta) e /= top;
  return eta;
}

}  // namespace testing
