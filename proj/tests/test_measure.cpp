#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <limits>
#include <random>

#include "scsb/error.hpp"
#include "scsb/measure.hpp"
#include "scsb/penalty.hpp"
#include "support.hpp"

using namespace scsb;
using testing::normal_pdf;

TEST_SUITE("measure") {

TEST_CASE("construction renormalizes and records the raw mass") {
  Grid g(-5.0, 5.0, 401);
  std::vector<double> f(g.size(), 3.0);
  GridMeasure mu(g, f);
  CHECK(mu.raw_mass() == doctest::Approx(30.0));
  CHECK(g.integrate(mu.density()) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK_THROWS_AS(GridMeasure(g, std::vector<double>(g.size(), 0.0)), Error);
  std::vector<double> neg(g.size(), 1.0);
  neg[3] = -0.1;
  CHECK_THROWS_AS(GridMeasure(g, neg), Error);
}

TEST_CASE("gaussian moments") {
  Grid g(-8.0, 8.0, 1024);
  auto mu = GridMeasure::gaussian(g, 0.4, 0.8);
  CHECK(mu.mean() == doctest::Approx(0.4).epsilon(1e-8));
  CHECK(mu.variance() == doctest::Approx(0.64).epsilon(1e-6));
}

TEST_CASE("kl divergence") {
  Grid g(-10.0, 10.0, 1024);
  auto a = GridMeasure::gaussian(g, 0.0, 1.0);
  auto b = GridMeasure::gaussian(g, 1.0, 1.0);
  CHECK(kl_divergence(a, a) == doctest::Approx(0.0));
  CHECK(std::abs(kl_divergence(a, b) - 0.5) < 1e-4);
  auto compact = GridMeasure(g, testing::sample(g, [](double x) { return std::abs(x) < 1.0 ? 1.0 : 0.0; }));
  CHECK(kl_divergence(a, compact) == std::numeric_limits<double>::infinity());
  CHECK(std::isfinite(kl_divergence(compact, a)));
  auto other = GridMeasure::gaussian(Grid(-10.0, 10.0, 512), 0.0, 1.0);
  CHECK_THROWS_AS(kl_divergence(a, other), Error);
}

TEST_CASE("wasserstein oracles") {
  Grid g(-10.0, 10.0, 1024);
  auto a = GridMeasure::gaussian(g, 0.0, 1.0);
  CHECK(wasserstein(a, a) == doctest::Approx(0.0));
  CHECK(std::abs(wasserstein(a, GridMeasure::gaussian(g, 0.7, 1.0)) - 0.7) < 1e-3);
  CHECK(std::abs(wasserstein(a, GridMeasure::gaussian(g, 0.7, 1.0), 1) - 0.7) < 1e-3);
  CHECK(std::abs(wasserstein(a, GridMeasure::gaussian(g, 0.0, 2.0)) - 1.0) < 1e-3);
  CHECK_THROWS_AS(wasserstein(a, a, 3), Error);
}

TEST_CASE("wasserstein metric axioms on random triples") {
  Grid g(-8.0, 8.0, 512);
  std::mt19937_64 rng(7);
  for (int rep = 0; rep < 10; ++rep) {
    auto a = testing::random_mixture(g, rng);
    auto b = testing::random_mixture(g, rng);
    auto c = testing::random_mixture(g, rng);
    for (int p : {1, 2}) {
      CHECK(wasserstein(a, b, p) == doctest::Approx(wasserstein(b, a, p)).epsilon(1e-12));
      CHECK(wasserstein(a, c, p) <= wasserstein(a, b, p) + wasserstein(b, c, p) + 1e-6);
      CHECK(wasserstein(a, b, p) > 0.0);
      CHECK(wasserstein(a, GridMeasure(g, a.density()), p) < 1e-8);
    }
  }
}

TEST_CASE("kl joint convexity on random instances") {
  Grid g(-8.0, 8.0, 512);
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> unit(0.05, 0.95);
  for (int rep = 0; rep < 20; ++rep) {
    auto m1 = testing::random_mixture(g, rng), m2 = testing::random_mixture(g, rng);
    auto n1 = testing::random_mixture(g, rng), n2 = testing::random_mixture(g, rng);
    const double t = unit(rng);
    const double lhs = kl_divergence(mix(m2, m1, t), mix(n2, n1, t));
    const double rhs = t * kl_divergence(m1, n1) + (1.0 - t) * kl_divergence(m2, n2);
    CHECK(lhs <= rhs + 1e-12);
  }
}

TEST_CASE("csv round trip keeps the density") {
  Grid g(-3.0, 4.0, 129);
  auto mu = GridMeasure::gaussian(g, 0.3, 0.9);
  const auto path = (std::filesystem::temp_directory_path() / "scsb_measure_roundtrip.csv").string();
  write_measure_csv(path, mu);
  auto back = read_measure_csv(path);
  std::remove(path.c_str());
  REQUIRE(back.grid() == g);
  for (std::size_t i = 0; i < g.size(); ++i) CHECK(back[i] == doctest::Approx(mu[i]).epsilon(1e-13));
  CHECK_THROWS_AS(read_measure_csv("/nonexistent/measure.csv"), Error);
}

TEST_CASE("class E membership") {
  Grid g(-6.0, 6.0, 241);
  auto mu = GridMeasure::gaussian(g, 0.0, 1.0);
  auto ctrl = testing::sample(g, [](double x) { return std::exp(-x * x / 4.0); });
  CHECK(check_class_e(mu, 2.0, 1.0, ctrl).passed());

  auto holed = mu.density();
  holed[130] = 0.0;
  auto r = check_class_e(GridMeasure(g, holed), 2.0, 1.0, ctrl);
  CHECK_FALSE(r.log_growth_ok);
  CHECK(r.log_growth_violations == std::vector<std::size_t>{130});

  auto small = check_class_e(mu, 2.0, 0.1, ctrl);
  CHECK_FALSE(small.density_bound_ok);
  CHECK_FALSE(small.density_bound_violations.empty());
  for (std::size_t i : small.density_bound_violations) CHECK(mu[i] > 0.1 * ctrl[i] * ctrl[i]);
}

TEST_CASE("class E family shares an L2 bound") {
  Grid g(-6.0, 6.0, 241);
  auto ctrl = testing::sample(g, [](double x) { return std::exp(-x * x / 8.0); });
  std::vector<double> c2(ctrl.size());
  for (std::size_t i = 0; i < c2.size(); ++i) c2[i] = ctrl[i] * ctrl[i];
  const double K = 1.0;
  const double bound = K * std::sqrt(g.integrate(c2));
  int members = 0;
  for (double m : {-0.5, 0.0, 0.4}) {
    for (double s : {0.8, 1.0, 1.3}) {
      auto mu = GridMeasure::gaussian(g, m, s);
      if (!check_class_e(mu, 3.0, K, ctrl).passed()) continue;
      ++members;
      std::vector<double> sq(mu.size());
      for (std::size_t i = 0; i < sq.size(); ++i) sq[i] = mu[i] * mu[i];
      CHECK(std::sqrt(g.integrate(sq)) <= bound);
    }
  }
  CHECK(members >= 5);
}

}

TEST_SUITE("penalty") {

TEST_CASE("every variant vanishes at the target and is nonnegative") {
  Grid g(-8.0, 8.0, 512);
  auto tar = GridMeasure::gaussian(g, 0.5, 0.7);
  std::mt19937_64 rng(3);
  for (const auto& G : {Penalty::kl(tar), Penalty::weighted_l1(tar, 2.0), Penalty::w2_guardrail(tar, 0.1, 0.05, 0.0)}) {
    CHECK(std::abs(G.eval(tar)) < 1e-10);
    for (int rep = 0; rep < 5; ++rep) CHECK(G.eval(testing::random_mixture(g, rng)) >= 0.0);
  }
}

TEST_CASE("kl penalty equals the divergence to the target") {
  Grid g(-8.0, 8.0, 512);
  auto tar = GridMeasure::gaussian(g, 0.5, 0.7);
  auto mu = GridMeasure::gaussian(g, -0.2, 1.1);
  CHECK(Penalty::kl(tar).eval(mu) == doctest::Approx(kl_divergence(mu, tar)));
}

TEST_CASE("weighted L1 against a fine independent quadrature") {
  Grid g(-10.0, 10.0, 1024);
  auto G = Penalty::weighted_l1(GridMeasure::gaussian(g, 0.5, 1.0), 3.0);
  const double value = G.eval(GridMeasure::gaussian(g, 0.0, 1.0));
  const std::size_t n = 8192;
  const double h = 20.0 / (n - 1);
  std::vector<double> f(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double x = -10.0 + h * i;
    f[i] = std::pow(std::abs(x), 3.0) * std::abs(normal_pdf(x, 0.0, 1.0) - normal_pdf(x, 0.5, 1.0));
  }
  const double oracle = testing::trapz(f, h);
  CHECK(std::abs(value - oracle) < 1e-3 * oracle);
}

TEST_CASE("guardrail penalty at the target density is its W2 term") {
  Grid g(-8.0, 8.0, 512);
  auto tar = GridMeasure::gaussian(g, 0.5, 0.7);
  auto G = Penalty::w2_guardrail(tar, 0.3, 0.05, 0.0);
  CHECK(G.eval(GridMeasure(g, tar.density())) == 0.0);
  auto mu = GridMeasure::gaussian(g, 0.2, 0.7);
  double sup = 0.0;
  for (std::size_t i = 0; i < g.size(); ++i) sup = std::max(sup, std::abs(mu[i] - tar[i]) / G.weight(g.node(i)));
  CHECK(G.eval(mu) == doctest::Approx(wasserstein(mu, tar) + 0.3 * sup));
}

TEST_CASE("kl first variation at the target is constant") {
  Grid g(-8.0, 8.0, 512);
  auto tar = GridMeasure::gaussian(g, 0.5, 0.7);
  for (double v : Penalty::kl(tar).first_variation(tar)) CHECK(v == doctest::Approx(1.0));
}

TEST_CASE("weighted L1 first variation where the sign is fixed") {
  Grid g(-8.0, 8.0, 512);
  auto tar = GridMeasure::gaussian(g, 0.0, 1.0);
  auto mu = GridMeasure::gaussian(g, 0.0, 2.0);
  auto G = Penalty::weighted_l1(tar, 1.5);
  auto v = G.first_variation(mu);
  for (std::size_t i = 0; i < g.size(); ++i) {
    if (std::abs(g.node(i)) > 2.5) CHECK(v[i] == doctest::Approx(std::pow(std::abs(g.node(i)), 1.5)));
  }
}

TEST_CASE("first variations match directional finite differences") {
  Grid g(-8.0, 8.0, 512);
  auto tar = GridMeasure::gaussian(g, 0.5, 0.7);
  auto mu = GridMeasure::gaussian(g, -0.3, 1.2);
  std::mt19937_64 rng(5);
  const Penalty penalties[] = {Penalty::kl(tar), Penalty::weighted_l1(tar, 2.0),
                               Penalty::w2_guardrail(tar, 0.0, 0.05, 0.0)};
  for (const auto& G : penalties) {
    CAPTURE(G.name());
    auto var = G.first_variation(mu);
    for (int rep = 0; rep < 10; ++rep) {
      auto eta = testing::random_direction(g, rng);
      const double s = 1e-6;
      std::vector<double> up(g.size()), dn(g.size()), prod(g.size());
      for (std::size_t i = 0; i < g.size(); ++i) {
        up[i] = mu[i] + s * eta[i] * mu[i];
        dn[i] = mu[i] - s * eta[i] * mu[i];
        prod[i] = var[i] * eta[i] * mu[i];
      }
      const double fd = (G.eval(GridMeasure(g, up)) - G.eval(GridMeasure(g, dn))) / (2.0 * s);
      // eta * mu carries a small net mass; the renormalized perturbation removes it.
      std::vector<double> em(g.size());
      for (std::size_t i = 0; i < g.size(); ++i) em[i] = eta[i] * mu[i];
      const double net = g.integrate(em);
      std::vector<double> vm(g.size());
      for (std::size_t i = 0; i < g.size(); ++i) vm[i] = var[i] * mu[i];
      const double an = g.integrate(prod) - net * g.integrate(vm);
      CHECK(std::abs(fd - an) <= 1e-5 * std::max(std::abs(an), 1e-3));
    }
  }
}

TEST_CASE("guardrail bounds W1 to the target") {
  Grid g(-8.0, 8.0, 512);
  auto tar = GridMeasure::gaussian(g, 0.5, 0.7);
  const double c = 0.2, lambda = 0.05;
  auto G = Penalty::w2_guardrail(tar, c, lambda, 0.0);
  auto phi = testing::sample(g, [&](double x) { return (1.0 + std::abs(x)) * G.weight(x); });
  const double constant = std::max(1.0, 1.0 / c) * g.integrate(phi);
  std::mt19937_64 rng(13);
  for (int rep = 0; rep < 20; ++rep) {
    auto mu = testing::random_mixture(g, rng);
    CHECK(wasserstein(mu, tar, 1) <= constant * G.eval(mu));
  }
}

}
