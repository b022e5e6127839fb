#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <random>

#include "scsb/error.hpp"
#include "scsb/harness.hpp"
#include "support.hpp"

using namespace scsb;
using nlohmann::json;

namespace {

json base_config() {
  return json::parse(R"({
    "kernel": {"variant": "brownian"},
    "horizon": 1.0,
    "grid": {"a": -6, "b": 6, "n": 512},
    "mu_ini": {"type": "point", "x0": 0},
    "mu_tar": {"type": "gaussian", "mean": 0.5, "sd": 0.5},
    "penalty": {"variant": "kl"},
    "k": [2, 4, 8, 16, 32, 64, 128, 256],
    "eps": 0.1,
    "probes": [-1, 0, 1],
    "time_points": 64,
    "workers": 2
  })");
}

ErrorCode config_error(json j, bool allow_zero = false) {
  try {
    parse_config(j, allow_zero);
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected a config error");
  return ErrorCode::InvalidArgument;
}

std::filesystem::path scratch_dir(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("scsb_test_" + name);
  std::filesystem::remove_all(p);
  return p;
}

}  // namespace

TEST_SUITE("harness") {

TEST_CASE("config validation") {
  CHECK_NOTHROW(parse_config(base_config()));
  auto j = base_config();
  j["kk"] = 1;
  CHECK(config_error(j) == ErrorCode::Config);
  j = base_config();
  j["k"] = {4, 2, 8};
  CHECK(config_error(j) == ErrorCode::Config);
  j["k"] = {0, 2};
  CHECK(config_error(j) == ErrorCode::Config);
  CHECK_NOTHROW(parse_config(j, true));
  j = base_config();
  j["eps"] = 1.0;
  CHECK(config_error(j) == ErrorCode::Config);
  j["eps"] = 0.0;
  CHECK(config_error(j) == ErrorCode::Config);
  j = base_config();
  j["probes"] = {-1, 6};
  CHECK(config_error(j) == ErrorCode::Config);
  j = base_config();
  j["kernel"]["variant"] = "levy";
  CHECK(config_error(j) == ErrorCode::Config);
  j = base_config();
  j["mc"] = {{"n_paths", "many"}};
  CHECK(config_error(j) == ErrorCode::Config);
  j = base_config();
  j["penalty"]["weight"] = 2;
  CHECK(config_error(j) == ErrorCode::Config);
  CHECK_THROWS_AS(load_config("/nonexistent/config.json"), Error);
}

TEST_CASE("resolved config round trips") {
  auto cfg = parse_config(base_config());
  auto again = parse_config(cfg.to_json());
  CHECK(again.to_json() == cfg.to_json());
  CHECK(cfg.delta_initial());
}

TEST_CASE("exit codes") {
  CHECK(exit_code(RunStatus::Pass) == 0);
  CHECK(exit_code(RunStatus::Fail) == 1);
  CHECK(exit_code(RunStatus::Inconclusive) == 2);
  CHECK(exit_code(ErrorCode::Config) == 3);
  CHECK(exit_code(ErrorCode::Io) == 3);
  CHECK(exit_code(ErrorCode::InvalidArgument) == 3);
  CHECK(exit_code(ErrorCode::NonConvergence) == 4);
  CHECK(exit_code(ErrorCode::FitDegenerate) == 4);
}

TEST_CASE("rate fit") {
  std::vector<double> k{2, 4, 8, 16, 32, 64}, y;
  for (double v : k) y.push_back(3.0 / v);
  auto f = fit_rate(k, k, y);
  CHECK(f.slope == doctest::Approx(-1.0));
  CHECK(f.r2 == doctest::Approx(1.0));
  CHECK(f.points == 5);
  std::vector<double> few{2, 4, 8, 16};
  try {
    fit_rate(few, few, std::vector<double>{1, 2, 3, 4});
    FAIL("expected a degenerate fit");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::FitDegenerate);
  }
}

TEST_CASE("gaussian kde") {
  std::mt19937_64 rng(1);
  std::normal_distribution<double> z(0.4, 0.7);
  std::vector<double> xs(4000);
  for (auto& x : xs) x = z(rng);
  Grid g(-6.0, 6.0, 512);
  const double h = silverman_bandwidth(xs);
  CHECK(h > 0.0);
  CHECK(h < 0.9 * 0.75 * std::pow(4000.0, -0.2));
  auto plain = gaussian_kde(xs, g, 1.0, false);
  auto vc = gaussian_kde(xs, g, 1.0, true);
  double m = 0.0, ss = 0.0;
  for (double x : xs) m += x;
  m /= xs.size();
  for (double x : xs) ss += (x - m) * (x - m);
  const double var = ss / (xs.size() - 1.0);
  CHECK(plain.variance() == doctest::Approx(var + h * h).epsilon(1e-3));
  CHECK(vc.variance() == doctest::Approx(var).epsilon(1e-3));
  CHECK(vc.mean() == doctest::Approx(m).epsilon(1e-6));
  auto half = gaussian_kde(xs, g, 0.5, true);
  auto exact = GridMeasure::gaussian(g, 0.4, 0.7);
  CHECK(std::abs(wasserstein(half, exact) - wasserstein(vc, exact)) < 0.1 * wasserstein(vc, exact) + 5e-3);
  CHECK_THROWS_AS(silverman_bandwidth(std::vector<double>{1.0}), Error);
  CHECK_THROWS_AS(silverman_bandwidth(std::vector<double>{1.0, 1.0, 1.0}), Error);
}

TEST_CASE("measure specs") {
  Grid g(-6.0, 6.0, 256);
  auto mix = build_measure(json::parse(R"({"type": "mixture", "components": [
      {"weight": 1, "mean": -1, "sd": 0.5}, {"weight": 1, "mean": 1, "sd": 0.5}]})"),
                           g, nullptr, nullptr, nullptr);
  CHECK(std::abs(mix.mean()) < 1e-10);
  auto samples = build_measure(json{{"type", "samples"}, {"values", {0.1, 0.3, -0.2, 0.5, 0.0}}}, g, nullptr,
                               nullptr, nullptr);
  CHECK(samples.mean() == doctest::Approx(0.14).epsilon(1e-6));

  const auto path = (std::filesystem::temp_directory_path() / "scsb_spec_measure.csv").string();
  write_measure_csv(path, GridMeasure::gaussian(g, 0.3, 0.9));
  auto csv = build_measure(json{{"type", "csv"}, {"path", path}}, g, nullptr, nullptr, nullptr);
  CHECK(csv.mean() == doctest::Approx(0.3).epsilon(1e-6));
  std::filesystem::remove(path);

  CHECK_THROWS_AS(build_measure(json{{"type", "gaussian"}, {"mean", 0}, {"sigma", 1}}, g, nullptr, nullptr, nullptr),
                  Error);
  CHECK_THROWS_AS(build_measure(json{{"type", "cauchy"}}, g, nullptr, nullptr, nullptr), Error);

  RewardSpec up;
  up.type = "linear";
  up.slope = 3.0;
  CHECK_THROWS_AS(build_measure(json{{"type", "reward"}}, g, nullptr, nullptr, &up), Error);
  RewardSpec quad;
  quad.type = "quadratic";
  quad.center = 1.0;
  auto r = build_measure(json{{"type", "reward"}}, g, nullptr, nullptr, &quad);
  CHECK(r.mean() == doctest::Approx(1.0).epsilon(1e-6));
  CHECK(r.variance() == doctest::Approx(0.5).epsilon(1e-4));
}

TEST_CASE("control sweep reports and is robust to grid refinement") {
  auto j = base_config();
  auto coarse = rate_sweep_control(parse_config(j));
  REQUIRE(coarse.fit.has_value());
  CHECK(coarse.status == RunStatus::Pass);
  CHECK(coarse.per_k.size() == 8);
  j["grid"]["n"] = 1024;
  auto fine = rate_sweep_control(parse_config(j));
  CHECK(std::abs(fine.fit->slope - coarse.fit->slope) < 0.05);
  auto out = coarse.to_json();
  CHECK(out["config"] == parse_config(base_config()).to_json());
  CHECK(out.contains("seed"));
  CHECK(out["status"] == "pass");
  CHECK(out["slope"].get<double>() == doctest::Approx(coarse.fit->slope));

  j = base_config();
  j["k"] = {8};
  try {
    rate_sweep_control(parse_config(j));
    FAIL("expected a degenerate fit");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::FitDegenerate);
  }
}

TEST_CASE("value sweep keeps the value ordering") {
  auto j = base_config();
  j["k"] = {1, 2, 4, 8, 16, 32, 64};
  auto rep = rate_sweep_value(parse_config(j));
  CHECK(rep.status == RunStatus::Pass);
  for (const auto& row : rep.per_k) CHECK(row["gap"].get<double>() >= 0.0);
  CHECK(rep.extra["value_order_holds"] == true);
}

TEST_CASE("terminal sweep skips an empty horizon") {
  auto j = base_config();
  j["k"] = {1, 4, 8, 16, 32, 64};
  j["mc"] = {{"n_paths", 2000}, {"n_steps", 128}, {"seed", 1}};
  auto rep = rate_sweep_terminal(parse_config(j));
  CHECK(rep.per_k.size() == 5);
  bool noted = false;
  for (const auto& n : rep.notes) noted = noted || n.find("k=1 skipped") != std::string::npos;
  CHECK(noted);
}

TEST_CASE("finetune scenario") {
  auto j = base_config();
  j.erase("mu_tar");
  j["reward"] = {{"type", "quadratic"}, {"center", 1.0}, {"curvature", 1.0}};
  j["k"] = {0, 1, 4, 16, 64};
  auto rep = scenario_finetune(parse_config(j, true));
  CHECK(rep.status == RunStatus::Pass);
  REQUIRE(rep.per_k.size() == 5);
  CHECK(rep.per_k[0]["l1_to_pushforward"].get<double>() < 1e-12);
  for (std::size_t i = 1; i < rep.per_k.size(); ++i) {
    CHECK(rep.per_k[i]["w2_to_target"].get<double>() < rep.per_k[i - 1]["w2_to_target"].get<double>());
  }

  j["reward"] = {{"type", "zero"}};
  j["k"] = {2};
  auto flat = scenario_finetune(parse_config(j, true));
  CHECK(flat.status == RunStatus::Pass);
  CHECK(flat.per_k[0]["w2_to_target"].get<double>() < flat.extra["w2_pushforward_to_target"].get<double>());
  CHECK(flat.per_k[0]["w2_to_pushforward"].get<double>() < flat.extra["w2_pushforward_to_target"].get<double>());
}

TEST_CASE("transfer scenario") {
  auto j = base_config();
  j["mu_ini"] = {{"type", "gaussian"}, {"mean", 0.0}, {"sd", 1.0}};
  j["mu_tar"] = {{"type", "gaussian"}, {"mean", 0.3}, {"sd", std::sqrt(2.0)}};
  j["grid"] = {{"a", -8}, {"b", 8}, {"n", 256}};
  j["k"] = {1, 4, 16};
  auto rep = scenario_transfer(parse_config(j));
  CHECK(rep.status == RunStatus::Pass);
  double prev_bound = 0.0;
  for (const auto& row : rep.per_k) {
    CHECK(row["slack"].get<double>() >= 0.0);
    CHECK(row["bound"].get<double>() >= prev_bound);
    CHECK(row["control_cost"].get<double>() <= rep.extra["exact_value"].get<double>() + 1e-9);
    prev_bound = row["bound"].get<double>();
  }
  const double b1 = rep.per_k[0]["bound"].get<double>(), b16 = rep.per_k[2]["bound"].get<double>();
  CHECK(b16 >= 16.0 * b1 * (1.0 - 1e-12));

  j["mu_tar"] = {{"type", "pushforward"}};
  auto same = scenario_transfer(parse_config(j));
  CHECK(same.status == RunStatus::Pass);
  for (const auto& row : same.per_k) CHECK(std::abs(row["control_cost"].get<double>()) < 1e-8);

  j = base_config();
  j["kernel"] = {{"variant", "ou"}};
  CHECK_THROWS_AS(scenario_transfer(parse_config(j)), Error);
}

TEST_CASE("bridge and simulate commands write their outputs") {
  auto dir = scratch_dir("bridge");
  auto j = base_config();
  j["k"] = {8};
  j["mc"] = {{"n_paths", 2000}, {"n_steps", 64}, {"seed", 3}};
  j["output_dir"] = dir.string();
  auto cfg = parse_config(j);
  auto b = run_command("bridge", cfg);
  CHECK(b.status == RunStatus::Pass);
  CHECK(std::filesystem::exists(dir / "report.json"));
  CHECK(std::filesystem::exists(dir / "per_k.csv"));
  CHECK(std::filesystem::exists(dir / "field.csv"));
  CHECK(std::filesystem::exists(dir / "mu_hat.csv"));
  std::ifstream in(dir / "report.json");
  auto rj = json::parse(in);
  CHECK(rj["command"] == "bridge");
  CHECK(rj["config"]["k"] == json::array({8.0}));

  auto s = run_command("simulate", cfg);
  CHECK(s.status == RunStatus::Pass);
  CHECK(std::abs(s.per_k[0]["j_mc"].get<double>() - s.per_k[0]["j_quadrature"].get<double>()) <
        4.0 * s.per_k[0]["j_mc_stderr"].get<double>() + 2e-2);
  std::filesystem::remove_all(dir);

  CHECK_THROWS_AS(run_command("dance", cfg), Error);
  j["k"] = {0, 8};
  j.erase("output_dir");
  CHECK_THROWS_AS(run_command("bridge", parse_config(j, true)), Error);
}

TEST_CASE("selftest passes") {
  auto rep = run_selftest(parse_config(json::object()));
  CHECK(rep.status == RunStatus::Pass);
  CHECK(rep.extra["checks"].size() == 5);
}

TEST_CASE("general initial law sweep uses the fixed point") {
  auto j = base_config();
  j["mu_ini"] = {{"type", "gaussian"}, {"mean", 0.0}, {"sd", 0.3}};
  j["grid"] = {{"a", -6}, {"b", 6}, {"n", 192}};
  j["k"] = {2, 4, 8, 16, 32, 64};
  auto rep = rate_sweep_control(parse_config(j));
  REQUIRE(rep.fit.has_value());
  MESSAGE("general-init control slope " << rep.fit->slope << " r2 " << rep.fit->r2);
  CHECK(rep.fit->slope < -0.5);
}

}
