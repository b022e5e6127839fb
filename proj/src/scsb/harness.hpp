#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "scsb/error.hpp"
#include "scsb/fixedpoint.hpp"
#include "scsb/grid.hpp"
#include "scsb/htransform.hpp"
#include "scsb/kernel.hpp"
#include "scsb/measure.hpp"
#include "scsb/penalty.hpp"
#include "scsb/staticopt.hpp"

namespace scsb {

struct KernelSpec {
  std::string variant = "brownian";  // brownian | ou | tabulated
  double theta = 1.0;
  std::string drift = "zero";
  std::size_t n_steps = 64;
};

struct GridSpec {
  double a = -6.0;
  double b = 6.0;
  std::size_t n = 1024;
};

struct PenaltySpec {
  std::string variant = "kl";  // kl | weighted_l1 | w2_guardrail
  double p = 2.0;
  double c = 0.1;
  double lambda = 0.05;
  double x0 = 0.0;
};

struct McSpec {
  std::size_t n_paths = 10000;
  std::size_t n_steps = 256;
  std::uint64_t seed = 1;
};

// r(x) for the fine-tuning scenario.
struct RewardSpec {
  std::string type = "zero";  // zero | quadratic | linear
  double center = 0.0;
  double curvature = 1.0;     // quadratic: -curvature (x - center)^2
  double slope = 0.0;         // linear: slope x
  double operator()(double x) const;
};

struct KdeSpec {
  double bandwidth_factor = 1.0;
  bool variance_correction = true;
};

struct ExperimentConfig {
  KernelSpec kernel;
  double horizon = 1.0;
  GridSpec grid;
  nlohmann::json mu_ini;  // {"type": "point" | "gaussian" | "mixture" | "csv" | "samples", ...}
  nlohmann::json mu_tar;  // same types, plus "pushforward" and "reward"
  PenaltySpec penalty;
  std::vector<double> k;
  double eps = 0.1;
  std::vector<double> probes{0.0};
  McSpec mc;
  std::size_t time_points = 64;
  RewardSpec reward;
  double fixed_point_tol = 1e-6;
  std::size_t fixed_point_max_outer = 200;
  double fixed_point_damping = 0.5;
  std::string value_evaluation = "quadrature";  // quadrature | mc
  KdeSpec kde;
  unsigned workers = 0;
  std::string output_dir;

  bool delta_initial() const;
  nlohmann::json to_json() const;
};

// Parses and validates; `allow_zero_k` admits k = 0 (unpenalized reference run).
ExperimentConfig parse_config(const nlohmann::json& j, bool allow_zero_k = false);
ExperimentConfig load_config(const std::string& path, bool allow_zero_k = false);

// Gaussian KDE on the grid with Silverman bandwidth 0.9 min(sd, IQR/1.34) n^(-1/5) times
// `bandwidth_factor`. With variance correction the samples are first shrunk toward their mean
// by 1/sqrt(1 + h^2/sd^2), so the smoothed law keeps the sample variance.
GridMeasure gaussian_kde(std::span<const double> samples, const Grid& grid,
                         double bandwidth_factor = 1.0, bool variance_correction = false);
double silverman_bandwidth(std::span<const double> samples);

struct Scenario {
  TransitionKernel kernel;
  InitialLaw init;
  GridMeasure target;
  Penalty penalty;
  GridMeasure reference;  // law of X_T without control
  bool delta = true;
  double x0 = 0.0;
};

TransitionKernel build_kernel(const ExperimentConfig& cfg);
GridMeasure build_measure(const nlohmann::json& spec, const Grid& grid, const TransitionKernel* kernel,
                          const InitialLaw* init, const RewardSpec* reward);
Scenario build_scenario(const ExperimentConfig& cfg);

// Penalized optimum at one k on the given field mesh.
struct PenalizedSolution {
  double k = 0.0;
  GridMeasure mu_hat;
  ControlField field;
  double value = 0.0;    // V^{k,*} = J^k at the optimum
  double penalty = 0.0;  // G(mu_hat)
  std::size_t iterations = 0;
};

// Unpenalized bridge to mu_tar.
struct ExactBridge {
  ControlField field;
  double value = 0.0;  // V^*
};

PenalizedSolution solve_penalized(const Scenario& scn, const ExperimentConfig& cfg, double k,
                                  std::span<const double> times);
ExactBridge solve_exact(const Scenario& scn, const ExperimentConfig& cfg, std::span<const double> times);

enum class RunStatus { Pass, Fail, Inconclusive };

const char* to_string(RunStatus s) noexcept;
int exit_code(RunStatus s) noexcept;
// 3 for configuration and I/O errors, 4 for numerical ones.
int exit_code(ErrorCode code) noexcept;

struct RateFit {
  double slope = 0.0;
  double intercept = 0.0;
  double r2 = 0.0;
  std::size_t points = 0;
};

// Least squares of log(y) against log(x) over entries with k >= 4; at least 5 are required.
RateFit fit_rate(std::span<const double> k, std::span<const double> x, std::span<const double> y);

struct Report {
  std::string command;
  nlohmann::json config;
  std::uint64_t seed = 0;
  nlohmann::json per_k = nlohmann::json::array();
  std::optional<RateFit> fit;
  RunStatus status = RunStatus::Fail;
  double runtime_s = 0.0;
  std::vector<std::string> notes;
  nlohmann::json extra = nlohmann::json::object();
  // Written next to report.json as <name>.csv.
  std::vector<std::pair<std::string, GridMeasure>> measures;
  std::vector<std::pair<std::string, ControlField>> fields;

  nlohmann::json to_json() const;
};

Report rate_sweep_control(const ExperimentConfig& cfg);
Report rate_sweep_value(const ExperimentConfig& cfg);
Report rate_sweep_terminal(const ExperimentConfig& cfg);
Report scenario_finetune(const ExperimentConfig& cfg);
Report scenario_transfer(const ExperimentConfig& cfg);
Report run_bridge(const ExperimentConfig& cfg);
Report run_simulate(const ExperimentConfig& cfg);
Report run_selftest(const ExperimentConfig& cfg);

// Dispatch by CLI subcommand name; writes report.json (and CSVs) when output_dir is set.
Report run_command(const std::string& command, const ExperimentConfig& cfg);
bool known_command(const std::string& command);
// Whether the command accepts k = 0 in its k list.
bool command_allows_zero_k(const std::string& command);

void write_report(const Report& report, const std::string& dir);

}  // namespace scsb
