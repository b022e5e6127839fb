#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>

#include "scsb/eot.hpp"
#include "scsb/error.hpp"
#include "scsb/htransform.hpp"
#include "support.hpp"

using namespace scsb;
using testing::normal_pdf;

namespace {

Grid standard_grid(std::size_t n = 1024) { return Grid(-6.0, 6.0, n); }

// Brownian bridge from 0 to N(m, 1/4) at T = 1: alpha(t, x) = (4m/3 - x) / (1/3 + 1 - t).
double gaussian_bridge_alpha(double t, double x, double m) { return (4.0 * m / 3.0 - x) / (1.0 / 3.0 + 1.0 - t); }

// Static Gaussian Schrodinger value for a Brownian reference over [0, T]: minimize over the
// covariance c of the coupling the KL to N(m0, a) x N(y; x, T).
double gaussian_sb_value(double m0, double a, double m1, double b, double T) {
  auto kl = [&](double c) {
    const double v = b - c * c / a;
    const double r = c / a - 1.0;
    return 0.5 * (v / T + ((m1 - m0) * (m1 - m0) + r * r * a) / T - 1.0 + std::log(T / v));
  };
  double lo = 0.0, hi = std::sqrt(a * b) * (1.0 - 1e-12);
  for (int it = 0; it < 200; ++it) {
    const double m1_ = lo + (hi - lo) / 3.0, m2_ = hi - (hi - lo) / 3.0;
    if (kl(m1_) < kl(m2_)) hi = m2_;
    else lo = m1_;
  }
  return kl(0.5 * (lo + hi));
}

}  // namespace

TEST_SUITE("htransform") {

TEST_CASE("delta bridge to a gaussian matches the closed form") {
  auto g = Grid(-10.0, 10.0, 2001);
  auto k = TransitionKernel::brownian(1.0, g);
  auto times = uniform_time_mesh(1.0, 64);
  for (double m : {0.0, 0.5}) {
    auto f = solve_bridge_delta(k, 0.0, GridMeasure::gaussian(g, m, 0.5), times);
    CHECK(f.h(0, g.size() / 2) > 0.0);
    double err = 0.0;
    for (std::size_t j = 0; j < f.rows(); ++j) {
      for (std::size_t i = 0; i < g.size(); ++i) {
        if (std::abs(g.node(i)) > 3.0) continue;
        err = std::max(err, std::abs(f.alpha(j, i) - gaussian_bridge_alpha(times[j], g.node(i), m)));
      }
    }
    CHECK(err < 1e-6);
  }
}

TEST_CASE("delta bridge normalization and positivity") {
  auto times = uniform_time_mesh(1.0, 64);
  for (double x0 : {0.0, 0.5}) {
    auto gg = Grid(-6.0, 6.0, 1201);
    auto kk = TransitionKernel::brownian(1.0, gg);
    auto f = solve_bridge_delta(kk, x0, GridMeasure::gaussian(gg, 0.3, 0.6), times);
    std::size_t i0 = 0;
    REQUIRE(gg.node_index(x0, i0));
    CHECK(f.h(0, i0) == doctest::Approx(1.0).epsilon(1e-9));
    for (std::size_t j = 0; j < f.rows(); ++j) {
      for (double h : f.h_row(j)) REQUIRE(h > 0.0);
    }
  }
}

TEST_CASE("uncontrolled terminal law gives the zero control") {
  auto g = standard_grid();
  auto k = TransitionKernel::brownian(1.0, g);
  auto times = uniform_time_mesh(1.0, 64);
  auto f = solve_bridge_delta(k, 0.0, GridMeasure(g, k.row(0.0, 0.0, 1.0)), times);
  CHECK(f.max_abs_alpha() < 1e-8);
  for (double v : f.terminal()) CHECK(v == doctest::Approx(1.0).epsilon(1e-10));
}

TEST_CASE("general bridge closed forms") {
  auto g = Grid(-10.0, 10.0, 2001);
  auto k = TransitionKernel::brownian(1.0, g);
  auto times = uniform_time_mesh(1.0, 64);
  std::vector<double> ones(g.size(), 1.0);
  auto flat = solve_bridge_general(k, ones, times);
  CHECK(flat.max_abs_alpha() < 1e-10);
  for (std::size_t j = 0; j < flat.rows(); ++j) {
    for (std::size_t i = 0; i < g.size(); ++i) REQUIRE(std::abs(flat.h(j, i) - 1.0) < 1e-10);
  }

  const double m = 0.4, s = 0.3;
  auto rho = testing::sample(g, [&](double z) { return normal_pdf(z, m, s); });
  auto f = solve_bridge_general(k, rho, times);
  double herr = 0.0, aerr = 0.0;
  for (std::size_t j = 0; j < f.rows(); ++j) {
    const double tau = 1.0 - times[j];
    for (std::size_t i = 0; i < g.size(); ++i) {
      const double x = g.node(i);
      if (std::abs(x) > 3.0) continue;
      herr = std::max(herr, std::abs(f.h(j, i) - normal_pdf(x, m, s + tau)));
      aerr = std::max(aerr, std::abs(f.alpha(j, i) + (x - m) / (s + tau)));
    }
  }
  CHECK(herr < 1e-8);
  CHECK(aerr < 1e-6);
}

TEST_CASE("general bridge with the delta ratio reproduces the delta field") {
  auto g = standard_grid();
  auto k = TransitionKernel::brownian(1.0, g);
  auto times = uniform_time_mesh(1.0, 32);
  auto d = solve_bridge_delta(k, 0.0, GridMeasure::gaussian(g, 0.5, 0.5), times);
  auto r = solve_bridge_general(k, d.terminal(), times);
  for (std::size_t j = 0; j < d.rows(); ++j) {
    for (std::size_t i = 0; i < g.size(); ++i) {
      REQUIRE(r.h(j, i) == d.h(j, i));
      REQUIRE(r.alpha(j, i) == d.alpha(j, i));
    }
  }
}

TEST_CASE("bridge errors") {
  auto g = standard_grid(257);
  auto k = TransitionKernel::brownian(1.0, g);
  auto times = uniform_time_mesh(1.0, 16);
  std::vector<double> zero(g.size(), 0.0);
  CHECK_THROWS_WITH_AS(solve_bridge_general(k, zero, times), doctest::Contains("zero"), Error);
  try {
    solve_bridge_general(k, zero, times);
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::Degenerate);
  }
  auto narrow = TransitionKernel::brownian(0.01, g);
  auto fine = uniform_time_mesh(0.01, 16);
  try {
    solve_bridge_delta(narrow, 0.0, GridMeasure::uniform(g), fine);
    FAIL("expected a ratio error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::RatioUnbounded);
  }
}

TEST_CASE("feynman-kac residual on interior probes") {
  auto g = Grid(-10.0, 10.0, 2001);
  auto bm = TransitionKernel::brownian(1.0, g);
  auto ou = TransitionKernel::ornstein_uhlenbeck(1.0, 1.0, g);
  auto times = uniform_time_mesh(1.0, 64);
  for (const auto* k : {&bm, &ou}) {
    auto f = solve_bridge_delta(*k, 0.0, GridMeasure::gaussian(g, 0.5, 0.5), times);
    for (std::size_t j = 0; j + 1 < f.rows(); j += 7) CHECK(backward_residual(*k, f, j, -3.0, 3.0) <= 1e-6);
  }
}

TEST_CASE("maximum principle") {
  auto g = standard_grid();
  auto k = TransitionKernel::brownian(1.0, g);
  auto times = uniform_time_mesh(1.0, 64);
  auto f = solve_bridge_delta(k, 0.0, GridMeasure::gaussian(g, 0.2, 0.8), times);
  const auto& term = f.terminal();
  const double lo = *std::min_element(term.begin(), term.end());
  const double hi = *std::max_element(term.begin(), term.end());
  for (std::size_t j = 0; j < f.rows(); ++j) {
    for (double h : f.h_row(j)) {
      REQUIRE(h >= lo * (1.0 - 1e-12));
      REQUIRE(h <= hi * (1.0 + 1e-12));
    }
  }
}

TEST_CASE("analytic alpha agrees with finite differences of log h") {
  auto g = standard_grid();
  auto k = TransitionKernel::brownian(1.0, g);
  auto times = uniform_time_mesh(1.0, 64);
  auto f = solve_bridge_delta(k, 0.0, GridMeasure::gaussian(g, 0.5, 0.5), times);
  for (std::size_t j = 0; j < f.rows(); j += 9) {
    for (std::size_t i = 1; i + 1 < g.size(); ++i) {
      if (std::abs(g.node(i)) > 3.0) continue;
      const double fd = (std::log(f.h(j, i + 1)) - std::log(f.h(j, i - 1))) / (2.0 * g.spacing());
      REQUIRE(std::abs(fd - f.alpha(j, i)) <= 1e-4 * std::max(1.0, std::abs(f.alpha(j, i))));
    }
  }
}

TEST_CASE("control gap") {
  auto times = uniform_time_mesh(1.0, 64);
  auto gap_at = [&](std::size_t n) {
    auto g = Grid(-6.0, 6.0, n);
    auto k = TransitionKernel::brownian(1.0, g);
    auto a = solve_bridge_delta(k, 0.0, GridMeasure::gaussian(g, 0.0, 0.5), times);
    auto b = solve_bridge_delta(k, 0.0, GridMeasure::gaussian(g, 0.1, 0.5), times);
    CHECK(control_l1_time_gap(a, a, 0.0, 0.1) == 0.0);
    CHECK(control_l1_time_gap(a, b, 0.0, 1.0) == 0.0);
    return control_l1_time_gap(a, b, 0.0, 0.1);
  };
  const double coarse = gap_at(256), mid = gap_at(512), fine = gap_at(1024);
  CHECK(fine > 0.0);
  CHECK(std::abs(fine - mid) <= std::abs(mid - coarse) + 1e-12);
  // |alpha_a - alpha_b| = (0.4/3) / (4/3 - t).
  const double oracle = 0.4 / 3.0 * std::log((4.0 / 3.0) / (4.0 / 3.0 - 0.9));
  CHECK(std::abs(fine - oracle) < 1e-3 * oracle);
}

TEST_CASE("general bridge value") {
  auto g = Grid(-8.0, 8.0, 512);
  auto k = TransitionKernel::brownian(1.0, g);
  auto ini = GridMeasure::gaussian(g, 0.0, 0.5);
  auto pf = pushforward(k, ini, 0.0, 1.0).measure;
  std::vector<double> ones(g.size(), 1.0);
  CHECK(std::abs(bridge_value_general(k, ini, pf, ones)) < 1e-12);

  auto tar = GridMeasure::gaussian(g, 0.5, 0.7);
  auto g1 = gamma1(k, ini, tar, SinkhornOptions{1e-11, 20000, nullptr});
  const double v = bridge_value_general(k, ini, tar, g1.rho);
  const double oracle = gaussian_sb_value(0.0, 0.25, 0.5, 0.49, 1.0);
  CHECK(std::abs(v - oracle) < 1e-4);

  std::vector<double> holed = g1.rho;
  holed[g.size() / 2] = 0.0;
  try {
    bridge_value_general(k, ini, tar, holed);
    FAIL("expected a support error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::Support);
  }
}

TEST_CASE("quadrature running cost matches the delta bridge value") {
  auto g = standard_grid();
  auto k = TransitionKernel::brownian(1.0, g);
  auto times = uniform_time_mesh(1.0, 256);
  auto tar = GridMeasure::gaussian(g, 0.5, 0.5);
  auto f = solve_bridge_delta(k, 0.0, tar, times);
  const double j1 = running_cost_quadrature(k, f, InitialLaw{0.0}, 0.1);
  const double j2 = running_cost_quadrature(k, f, InitialLaw{0.0}, 0.05);
  CHECK(j1 > 0.0);
  CHECK(j2 > j1);
  CHECK(j2 < kl_divergence(tar, GridMeasure(g, k.row(0.0, 0.0, 1.0))));
}

TEST_CASE("field csv export") {
  auto g = Grid(-3.0, 3.0, 17);
  auto k = TransitionKernel::brownian(1.0, g);
  auto f = solve_bridge_delta(k, 0.0, GridMeasure::gaussian(g, 0.2, 0.8), uniform_time_mesh(1.0, 4));
  const auto path = (std::filesystem::temp_directory_path() / "scsb_field.csv").string();
  f.write_csv(path);
  std::ifstream in(path);
  std::string header;
  std::getline(in, header);
  CHECK(header == "t,x,h,alpha");
  std::size_t rows = 0;
  for (std::string line; std::getline(in, line);) ++rows;
  CHECK(rows == 4 * 17);
  std::filesystem::remove(path);
}

}
