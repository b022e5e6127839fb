#include <doctest.h>

#include <cmath>
#include <random>

#include "scsb/error.hpp"
#include "scsb/fixedpoint.hpp"
#include "scsb/simulate.hpp"
#include "support.hpp"

using namespace scsb;

namespace {

Grid small_grid() { return Grid(-6.0, 6.0, 160); }

FixedPointOptions options(double tol = 1e-7) {
  FixedPointOptions o;
  o.tol = tol;
  o.times = uniform_time_mesh(1.0, 32);
  return o;
}

}  // namespace

TEST_SUITE("fixedpoint") {

TEST_CASE("narrow initial law reduces to the delta problem") {
  Grid g(-6.0, 6.0, 512);
  auto k = TransitionKernel::brownian(1.0, g);
  auto ini = GridMeasure(g, testing::sample(g, [](double x) { return testing::normal_pdf(x, 0.0, 1e-4); }));
  auto G = Penalty::kl(GridMeasure::gaussian(g, 0.5, 0.5));
  auto sol = solve_scsbp_general(k, ini, G, 4.0, options(1e-6));
  auto delta = minimize_dk(pushforward(k, ini, 0.0, 1.0).measure, G, 4.0);
  CHECK(l1_distance(sol.mu_hat, delta.opt.measure) < 2e-2);
  CHECK(sol.trace.converged);
  CHECK(sol.trace.residual_l1 < 10.0 * 1e-6);
}

TEST_CASE("penalty bound at large k") {
  auto g = small_grid();
  auto k = TransitionKernel::brownian(1.0, g);
  auto ini = GridMeasure::gaussian(g, -0.3, 0.6);
  auto tar = GridMeasure::gaussian(g, 0.5, 0.5);
  auto G = Penalty::kl(tar);
  const double m = kl_divergence(tar, pushforward(k, ini, 0.0, 1.0).measure);
  for (double kk : {10.0, 1000.0}) {
    auto sol = solve_scsbp_general(k, ini, G, kk, options());
    CHECK(sol.penalty <= m / kk);
  }
}

TEST_CASE("uncontrolled target is its own fixed point") {
  auto g = small_grid();
  auto k = TransitionKernel::brownian(1.0, g);
  auto ini = GridMeasure::gaussian(g, 0.2, 0.7);
  auto tar = pushforward(k, ini, 0.0, 1.0).measure;
  auto G = Penalty::kl(tar);
  CHECK(std::abs(objective_jk(k, ini, G, 3.0, tar)) < 1e-9);
  for (double kk : {1.0, 5.0}) {
    auto sol = solve_scsbp_general(k, ini, G, kk, options());
    CHECK(l1_distance(sol.mu_hat, tar) < 1e-8);
    CHECK(sol.field.max_abs_alpha() < 1e-6);
    CHECK(std::abs(sol.objective) < 1e-9);
  }
}

TEST_CASE("fixed point is optimal against the target and against perturbations") {
  auto g = small_grid();
  auto k = TransitionKernel::brownian(1.0, g);
  auto ini = GridMeasure::gaussian(g, -0.3, 0.6);
  auto tar = GridMeasure::gaussian(g, 0.6, 0.5);
  auto G = Penalty::kl(tar);
  const double kk = 3.0;
  auto sol = solve_scsbp_general(k, ini, G, kk, options(1e-8));
  SinkhornOptions so{1e-11, 20000, nullptr};
  const double j_hat = objective_jk(k, ini, G, kk, sol.mu_hat, so);
  CHECK(j_hat == doctest::Approx(sol.objective).epsilon(1e-6));
  CHECK(j_hat <= objective_jk(k, ini, G, kk, tar, so));

  std::mt19937_64 rng(23);
  for (int rep = 0; rep < 20; ++rep) {
    auto eta = testing::random_direction(g, rng);
    std::vector<double> f(g.size()), em(g.size());
    for (std::size_t i = 0; i < g.size(); ++i) em[i] = eta[i] * sol.mu_hat[i];
    const double net = g.integrate(em);
    for (std::size_t i = 0; i < g.size(); ++i) em[i] -= net * sol.mu_hat[i];
    std::vector<double> abs_em(g.size());
    for (std::size_t i = 0; i < g.size(); ++i) abs_em[i] = std::abs(em[i]);
    const double scale = 1e-2 / g.integrate(abs_em);
    for (std::size_t i = 0; i < g.size(); ++i) f[i] = std::max(sol.mu_hat[i] + scale * em[i], 0.0);
    CHECK(j_hat <= objective_jk(k, ini, G, kk, GridMeasure(g, f), so) + 1e-9);
  }
}

TEST_CASE("trace invariants") {
  auto g = small_grid();
  auto k = TransitionKernel::brownian(1.0, g);
  auto ini = GridMeasure::gaussian(g, -0.3, 0.6);
  auto G = Penalty::weighted_l1(GridMeasure::gaussian(g, 0.6, 0.5), 1.0);
  auto sol = solve_scsbp_general(k, ini, G, 5.0, options(1e-7));
  const auto& st = sol.trace.steps;
  REQUIRE(sol.trace.converged);
  CHECK(st.back().w2_step < 1e-7);
  CHECK(sol.trace.residual_l1 < 1e-6);
  for (const auto& s : st) {
    CHECK(s.w2_step >= 0.0);
    CHECK(s.l1_step >= 0.0);
  }
  for (std::size_t i = st.size() >= 5 ? st.size() - 5 : 1; i < st.size(); ++i) {
    if (i == 0) continue;
    CHECK(st[i].jk <= st[i - 1].jk + 1e-9);
  }
}

TEST_CASE("damped iterates stay in the class") {
  auto g = small_grid();
  auto k = TransitionKernel::brownian(1.0, g);
  auto ini = GridMeasure::gaussian(g, 0.0, 0.6);
  auto tar = GridMeasure::gaussian(g, 0.5, 0.5);
  auto ctrl = testing::sample(g, [](double x) { return std::exp(-x * x / 8.0); });
  const double C = 5.0, K = 2.0;
  REQUIRE(check_class_e(ini, C, K, ctrl).passed());
  REQUIRE(check_class_e(tar, C, K, ctrl).passed());
  auto G = Penalty::kl(tar);
  GridMeasure mu = tar;
  for (int it = 0; it < 12; ++it) {
    auto g1 = gamma1(k, ini, mu, SinkhornOptions{1e-11, 20000, nullptr});
    mu = mix(mu, gamma2(g1.rho, G, 2.0).measure, 0.5);
    CHECK(check_class_e(mu, C, K, ctrl).passed());
  }
}

TEST_CASE("both initializations reach the same fixed point") {
  auto g = small_grid();
  auto k = TransitionKernel::brownian(1.0, g);
  auto ini = GridMeasure::gaussian(g, -0.3, 0.6);
  auto G = Penalty::kl(GridMeasure::gaussian(g, 0.6, 0.5));
  auto rep = probe_fixed_points(k, ini, G, 4.0, options(1e-7));
  CHECK_FALSE(rep.multiple);
  CHECK(rep.distance < 1e-5);
}

TEST_CASE("monte carlo value of the fixed-point control") {
  auto g = Grid(-6.0, 6.0, 256);
  auto k = TransitionKernel::brownian(1.0, g);
  auto ini = GridMeasure::gaussian(g, -0.3, 0.6);
  auto G = Penalty::kl(GridMeasure::gaussian(g, 0.6, 0.5));
  auto opts = options(1e-8);
  opts.times = uniform_time_mesh(1.0, 512);
  auto sol = solve_scsbp_general(k, ini, G, 3.0, opts);
  SimulationConfig sc;
  sc.n_steps = 512;
  sc.n_paths = 40000;
  sc.seed = 9;
  auto ens = euler_maruyama(k.drift(), &sol.field, InitialLaw{ini}, 1.0, g, sc);
  auto est = value_eval(ens, 0.0);
  const double quad = sol.objective - 3.0 * sol.penalty;
  CAPTURE(est.mean);
  CAPTURE(est.stderr_);
  CAPTURE(quad);
  CHECK(std::abs(est.mean - quad) <= 3.0 * est.stderr_);
}

TEST_CASE("argument checks") {
  auto g = small_grid();
  auto k = TransitionKernel::brownian(1.0, g);
  auto ini = GridMeasure::gaussian(g, 0.0, 0.6);
  auto G = Penalty::kl(GridMeasure::gaussian(g, 0.5, 0.5));
  CHECK_THROWS_AS(solve_scsbp_general(k, ini, G, 0.5), Error);
  auto bad = options();
  bad.damping = 0.0;
  CHECK_THROWS_AS(solve_scsbp_general(k, ini, G, 2.0, bad), Error);
  auto few = options(1e-14);
  few.max_outer = 2;
  try {
    solve_scsbp_general(k, ini, G, 2.0, few);
    FAIL("expected non-convergence");
  } catch (const FixedPointError& e) {
    CHECK(e.code() == ErrorCode::NonConvergence);
    CHECK(e.payload().steps.size() == 2);
  }
}

}
