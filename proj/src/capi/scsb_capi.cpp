#include "scsb/scsb.h"

#include <cstdlib>
#include <cstring>
#include <exception>
#include <json.hpp>
#include <new>
#include <string>
#include <vector>

#include "scsb/eot.hpp"
#include "scsb/error.hpp"
#include "scsb/fixedpoint.hpp"
#include "scsb/harness.hpp"
#include "scsb/htransform.hpp"
#include "scsb/kernel.hpp"
#include "scsb/measure.hpp"
#include "scsb/penalty.hpp"
#include "scsb/simulate.hpp"
#include "scsb/staticopt.hpp"

struct scsb_kernel {
  scsb::TransitionKernel value;
};
struct scsb_measure {
  scsb::GridMeasure value;
};
struct scsb_penalty {
  scsb::Penalty value;
};
struct scsb_field {
  scsb::ControlField value;
};
struct scsb_ensemble {
  scsb::PathEnsemble value;
};

namespace {

thread_local std::string last_error;

scsb_status from_code(scsb::ErrorCode code) {
  using scsb::ErrorCode;
  switch (code) {
    case ErrorCode::InvalidArgument: return SCSB_ERR_INVALID_ARGUMENT;
    case ErrorCode::Domain: return SCSB_ERR_DOMAIN;
    case ErrorCode::GridMismatch: return SCSB_ERR_GRID_MISMATCH;
    case ErrorCode::GridTooNarrow: return SCSB_ERR_GRID_TOO_NARROW;
    case ErrorCode::InterpolationRefused: return SCSB_ERR_INTERPOLATION_REFUSED;
    case ErrorCode::Truncation: return SCSB_ERR_TRUNCATION;
    case ErrorCode::RatioUnbounded: return SCSB_ERR_RATIO_UNBOUNDED;
    case ErrorCode::Degenerate: return SCSB_ERR_DEGENERATE;
    case ErrorCode::Support: return SCSB_ERR_SUPPORT;
    case ErrorCode::Infeasible: return SCSB_ERR_INFEASIBLE;
    case ErrorCode::Stall: return SCSB_ERR_STALL;
    case ErrorCode::NonConvergence: return SCSB_ERR_NONCONVERGENCE;
    case ErrorCode::Divergence: return SCSB_ERR_DIVERGENCE;
    case ErrorCode::TruncationMismatch: return SCSB_ERR_TRUNCATION_MISMATCH;
    case ErrorCode::FitDegenerate: return SCSB_ERR_FIT_DEGENERATE;
    case ErrorCode::Nondifferentiable: return SCSB_ERR_NONDIFFERENTIABLE;
    case ErrorCode::Config: return SCSB_ERR_CONFIG;
    case ErrorCode::Io: return SCSB_ERR_IO;
  }
  return SCSB_ERR_INTERNAL;
}

template <class F>
scsb_status guard(F&& f) {
  try {
    f();
    last_error.clear();
    return SCSB_OK;
  } catch (const scsb::Error& e) {
    last_error = e.what();
    return from_code(e.code());
  } catch (const std::bad_alloc&) {
    last_error = "out of memory";
    return SCSB_ERR_INTERNAL;
  } catch (const std::exception& e) {
    last_error = e.what();
    return SCSB_ERR_INTERNAL;
  } catch (...) {
    last_error = "unknown exception";
    return SCSB_ERR_INTERNAL;
  }
}

void need(const void* p, const char* what) {
  scsb::require(p != nullptr, scsb::ErrorCode::InvalidArgument, std::string(what) + " is null");
}

void need_size(std::size_t got, std::size_t want, const char* what) {
  scsb::require(got == want, scsb::ErrorCode::InvalidArgument,
                std::string(what) + " has length " + std::to_string(got) + ", expected " + std::to_string(want));
}

char* dup_string(const std::string& s) {
  char* p = static_cast<char*>(std::malloc(s.size() + 1));
  if (p == nullptr) throw std::bad_alloc();
  std::memcpy(p, s.c_str(), s.size() + 1);
  return p;
}

void copy_out(const std::vector<double>& v, double* out, std::size_t n, const char* what) {
  need(out, what);
  need_size(n, v.size(), what);
  std::copy(v.begin(), v.end(), out);
}

}  // namespace

extern "C" {

const char* scsb_last_error(void) { return last_error.c_str(); }

const char* scsb_status_name(scsb_status status) {
  switch (status) {
    case SCSB_OK: return "ok";
    case SCSB_ERR_INTERNAL: return "internal";
    default: break;
  }
  if (status > SCSB_OK && status < SCSB_ERR_INTERNAL) {
    return scsb::to_string(static_cast<scsb::ErrorCode>(static_cast<int>(status) - 1));
  }
  return "unknown";
}

const char* scsb_version(void) { return "0.1.0"; }

int scsb_exit_code(scsb_status status) {
  if (status == SCSB_OK) return 0;
  if (status == SCSB_ERR_CONFIG || status == SCSB_ERR_IO || status == SCSB_ERR_INVALID_ARGUMENT) return 3;
  return 4;
}

void scsb_string_free(char* s) { std::free(s); }

scsb_status scsb_kernel_brownian(double horizon, double lower, double upper, size_t n, scsb_kernel** out) {
  return guard([&] {
    need(out, "out");
    *out = new scsb_kernel{scsb::TransitionKernel::brownian(horizon, scsb::Grid(lower, upper, n))};
  });
}

scsb_status scsb_kernel_ou(double horizon, double theta, double lower, double upper, size_t n, scsb_kernel** out) {
  return guard([&] {
    need(out, "out");
    *out = new scsb_kernel{scsb::TransitionKernel::ornstein_uhlenbeck(horizon, theta, scsb::Grid(lower, upper, n))};
  });
}

scsb_status scsb_kernel_tabulated(const char* drift, double theta, double horizon, double lower, double upper,
                                  size_t n, size_t n_steps, scsb_kernel** out) {
  return guard([&] {
    need(out, "out");
    need(drift, "drift");
    *out = new scsb_kernel{scsb::TransitionKernel::tabulated(scsb::builtin_drift(drift, theta), horizon,
                                                            scsb::Grid(lower, upper, n), n_steps)};
  });
}

void scsb_kernel_free(scsb_kernel* kernel) { delete kernel; }

size_t scsb_kernel_grid_size(const scsb_kernel* kernel) { return kernel ? kernel->value.grid().size() : 0; }

scsb_status scsb_kernel_density(const scsb_kernel* kernel, double s, double y, double t, double x, double* out) {
  return guard([&] {
    need(kernel, "kernel");
    need(out, "out");
    *out = kernel->value.density(s, y, t, x);
  });
}

scsb_status scsb_kernel_grad_log_density(const scsb_kernel* kernel, double s, double y, double t, double x,
                                         double* out) {
  return guard([&] {
    need(kernel, "kernel");
    need(out, "out");
    *out = kernel->value.grad_log_density(s, y, t, x);
  });
}

scsb_status scsb_kernel_backward(const scsb_kernel* kernel, double t, double s, const double* f, size_t n,
                                 double* value, double* log_gradient) {
  return guard([&] {
    need(kernel, "kernel");
    need(f, "f");
    need_size(n, kernel->value.grid().size(), "f");
    const auto r = kernel->value.backward(t, s, std::span<const double>(f, n));
    if (value) std::copy(r.value.begin(), r.value.end(), value);
    if (log_gradient) std::copy(r.log_gradient.begin(), r.log_gradient.end(), log_gradient);
  });
}

scsb_status scsb_measure_create(double lower, double upper, size_t n, const double* density, scsb_measure** out) {
  return guard([&] {
    need(out, "out");
    need(density, "density");
    *out = new scsb_measure{scsb::GridMeasure(scsb::Grid(lower, upper, n), std::vector<double>(density, density + n))};
  });
}

scsb_status scsb_measure_gaussian(double lower, double upper, size_t n, double mean, double sd, scsb_measure** out) {
  return guard([&] {
    need(out, "out");
    *out = new scsb_measure{scsb::GridMeasure::gaussian(scsb::Grid(lower, upper, n), mean, sd)};
  });
}

scsb_status scsb_measure_read_csv(const char* path, scsb_measure** out) {
  return guard([&] {
    need(out, "out");
    need(path, "path");
    *out = new scsb_measure{scsb::read_measure_csv(path)};
  });
}

scsb_status scsb_measure_write_csv(const scsb_measure* mu, const char* path) {
  return guard([&] {
    need(mu, "measure");
    need(path, "path");
    scsb::write_measure_csv(path, mu->value);
  });
}

void scsb_measure_free(scsb_measure* mu) { delete mu; }

size_t scsb_measure_size(const scsb_measure* mu) { return mu ? mu->value.size() : 0; }

scsb_status scsb_measure_density(const scsb_measure* mu, double* out, size_t n) {
  return guard([&] {
    need(mu, "measure");
    copy_out(mu->value.density(), out, n, "out");
  });
}

scsb_status scsb_measure_nodes(const scsb_measure* mu, double* out, size_t n) {
  return guard([&] {
    need(mu, "measure");
    copy_out(mu->value.grid().nodes(), out, n, "out");
  });
}

scsb_status scsb_kl_divergence(const scsb_measure* mu, const scsb_measure* nu, double* out) {
  return guard([&] {
    need(mu, "mu");
    need(nu, "nu");
    need(out, "out");
    *out = scsb::kl_divergence(mu->value, nu->value);
  });
}

scsb_status scsb_wasserstein(const scsb_measure* mu, const scsb_measure* nu, int p, double* out) {
  return guard([&] {
    need(mu, "mu");
    need(nu, "nu");
    need(out, "out");
    *out = scsb::wasserstein(mu->value, nu->value, p);
  });
}

scsb_status scsb_l1_distance(const scsb_measure* mu, const scsb_measure* nu, double* out) {
  return guard([&] {
    need(mu, "mu");
    need(nu, "nu");
    need(out, "out");
    *out = scsb::l1_distance(mu->value, nu->value);
  });
}

scsb_status scsb_pushforward(const scsb_kernel* kernel, const scsb_measure* mu, double t, double s,
                             scsb_measure** out) {
  return guard([&] {
    need(kernel, "kernel");
    need(mu, "measure");
    need(out, "out");
    *out = new scsb_measure{scsb::pushforward(kernel->value, mu->value, t, s).measure};
  });
}

scsb_status scsb_penalty_create(const char* variant, const scsb_measure* target, double p, double c, double lambda,
                                double x0, scsb_penalty** out) {
  return guard([&] {
    need(variant, "variant");
    need(target, "target");
    need(out, "out");
    const std::string v(variant);
    if (v == "kl") *out = new scsb_penalty{scsb::Penalty::kl(target->value)};
    else if (v == "weighted_l1") *out = new scsb_penalty{scsb::Penalty::weighted_l1(target->value, p)};
    else if (v == "w2_guardrail") *out = new scsb_penalty{scsb::Penalty::w2_guardrail(target->value, c, lambda, x0)};
    else scsb::fail(scsb::ErrorCode::InvalidArgument, "unknown penalty variant '" + v + "'");
  });
}

void scsb_penalty_free(scsb_penalty* penalty) { delete penalty; }

scsb_status scsb_penalty_eval(const scsb_penalty* penalty, const scsb_measure* mu, double* out) {
  return guard([&] {
    need(penalty, "penalty");
    need(mu, "measure");
    need(out, "out");
    *out = penalty->value.eval(mu->value);
  });
}

scsb_status scsb_minimize_dk(const scsb_measure* prior, const scsb_penalty* penalty, double k, scsb_measure** out,
                             char** diagnostics) {
  return guard([&] {
    need(prior, "prior");
    need(penalty, "penalty");
    need(out, "out");
    scsb::DkResult r = scsb::minimize_dk(prior->value, penalty->value, k);
    if (diagnostics) {
      const nlohmann::json j{{"m", r.m},
                             {"Dk", r.dk},
                             {"G", r.penalty},
                             {"iters", r.opt.iterations},
                             {"converged", r.opt.converged}};
      *diagnostics = dup_string(j.dump());
    }
    *out = new scsb_measure{std::move(r.opt.measure)};
  });
}

scsb_status scsb_bridge_delta(const scsb_kernel* kernel, double x0, const scsb_measure* terminal, const double* times,
                              size_t n_times, scsb_field** out) {
  return guard([&] {
    need(kernel, "kernel");
    need(terminal, "terminal");
    need(times, "times");
    need(out, "out");
    *out = new scsb_field{
        scsb::solve_bridge_delta(kernel->value, x0, terminal->value, std::span<const double>(times, n_times))};
  });
}

scsb_status scsb_bridge_general(const scsb_kernel* kernel, const double* rho, size_t n, const double* times,
                                size_t n_times, scsb_field** out) {
  return guard([&] {
    need(kernel, "kernel");
    need(rho, "rho");
    need(times, "times");
    need(out, "out");
    need_size(n, kernel->value.grid().size(), "rho");
    *out = new scsb_field{scsb::solve_bridge_general(kernel->value, std::span<const double>(rho, n),
                                                     std::span<const double>(times, n_times))};
  });
}

void scsb_field_free(scsb_field* field) { delete field; }

size_t scsb_field_rows(const scsb_field* field) { return field ? field->value.rows() : 0; }

scsb_status scsb_field_times(const scsb_field* field, double* out, size_t n_times) {
  return guard([&] {
    need(field, "field");
    copy_out(field->value.times(), out, n_times, "out");
  });
}

scsb_status scsb_field_alpha(const scsb_field* field, size_t row, double* out, size_t n) {
  return guard([&] {
    need(field, "field");
    need(out, "out");
    scsb::require(row < field->value.rows(), scsb::ErrorCode::InvalidArgument, "row out of range");
    need_size(n, field->value.grid().size(), "out");
    const auto r = field->value.alpha_row(row);
    std::copy(r.begin(), r.end(), out);
  });
}

scsb_status scsb_field_h(const scsb_field* field, size_t row, double* out, size_t n) {
  return guard([&] {
    need(field, "field");
    need(out, "out");
    scsb::require(row < field->value.rows(), scsb::ErrorCode::InvalidArgument, "row out of range");
    need_size(n, field->value.grid().size(), "out");
    const auto r = field->value.h_row(row);
    std::copy(r.begin(), r.end(), out);
  });
}

scsb_status scsb_field_max_abs_alpha(const scsb_field* field, double* out) {
  return guard([&] {
    need(field, "field");
    need(out, "out");
    *out = field->value.max_abs_alpha();
  });
}

scsb_status scsb_field_write_csv(const scsb_field* field, const char* path) {
  return guard([&] {
    need(field, "field");
    need(path, "path");
    field->value.write_csv(path);
  });
}

scsb_status scsb_field_l1_gap(const scsb_field* a, const scsb_field* b, double x, double eps, double* out) {
  return guard([&] {
    need(a, "a");
    need(b, "b");
    need(out, "out");
    *out = scsb::control_l1_time_gap(a->value, b->value, x, eps);
  });
}

scsb_status scsb_sinkhorn(const scsb_kernel* kernel, const scsb_measure* mu_ini, const scsb_measure* mu, double tol,
                          size_t max_iter, double* phi, double* psi, size_t n, char** report) {
  return guard([&] {
    need(kernel, "kernel");
    need(mu_ini, "mu_ini");
    need(mu, "mu");
    scsb::SinkhornOptions opts;
    opts.tol = tol;
    opts.max_iter = max_iter;
    const scsb::SinkhornResult r = scsb::sinkhorn(kernel->value, mu_ini->value, mu->value, opts);
    if (phi) copy_out(r.potentials.phi, phi, n, "phi");
    if (psi) copy_out(r.potentials.psi, psi, n, "psi");
    if (report) {
      const nlohmann::json j{{"transport_cost", r.report.transport_cost},
                             {"kl_term", r.report.kl_term},
                             {"total", r.report.total},
                             {"row_error", r.report.row_error},
                             {"col_error", r.report.col_error},
                             {"iterations", r.report.iterations},
                             {"normalization_residual", r.potentials.normalization_residual}};
      *report = dup_string(j.dump());
    }
  });
}

scsb_status scsb_gamma1(const scsb_kernel* kernel, const scsb_measure* mu_ini, const scsb_measure* mu, double* rho,
                        double* rho0, size_t n) {
  return guard([&] {
    need(kernel, "kernel");
    need(mu_ini, "mu_ini");
    need(mu, "mu");
    scsb::SinkhornOptions opts;
    opts.tol = 1e-11;
    const scsb::Gamma1Result r = scsb::gamma1(kernel->value, mu_ini->value, mu->value, opts);
    if (rho) copy_out(r.rho, rho, n, "rho");
    if (rho0) copy_out(r.rho0, rho0, n, "rho0");
  });
}

scsb_status scsb_solve_scsbp(const scsb_kernel* kernel, const scsb_measure* mu_ini, const scsb_penalty* penalty,
                             double k, double tol, double damping, scsb_measure** mu_hat, scsb_field** field,
                             char** trace) {
  return guard([&] {
    need(kernel, "kernel");
    need(mu_ini, "mu_ini");
    need(penalty, "penalty");
    scsb::FixedPointOptions opts;
    opts.tol = tol;
    opts.damping = damping;
    scsb::ScsbpSolution s = scsb::solve_scsbp_general(kernel->value, mu_ini->value, penalty->value, k, opts);
    if (trace) {
      nlohmann::json steps = nlohmann::json::array();
      for (const auto& st : s.trace.steps) {
        steps.push_back({{"iter", st.iter}, {"w2_step", st.w2_step}, {"l1_step", st.l1_step},
                         {"jk", st.jk}, {"residual", st.residual}});
      }
      const nlohmann::json j{{"converged", s.trace.converged},
                             {"residual_l1", s.trace.residual_l1},
                             {"damping", s.trace.damping},
                             {"sinkhorn_iterations", s.trace.sinkhorn_iterations},
                             {"objective", s.objective},
                             {"penalty", s.penalty},
                             {"steps", steps}};
      *trace = dup_string(j.dump());
    }
    if (mu_hat) *mu_hat = new scsb_measure{std::move(s.mu_hat)};
    if (field) *field = new scsb_field{std::move(s.field)};
  });
}

scsb_status scsb_simulate(const scsb_kernel* kernel, const scsb_field* field, const scsb_measure* init, double x0,
                          size_t n_steps, size_t n_paths, uint64_t seed, double stop_eps, unsigned workers,
                          scsb_ensemble** out) {
  return guard([&] {
    need(kernel, "kernel");
    need(out, "out");
    scsb::SimulationConfig cfg;
    cfg.n_steps = n_steps;
    cfg.n_paths = n_paths;
    cfg.seed = seed;
    cfg.stop_eps = stop_eps;
    cfg.workers = workers;
    const scsb::InitialLaw law = init ? scsb::InitialLaw(init->value) : scsb::InitialLaw(x0);
    *out = new scsb_ensemble{scsb::euler_maruyama(kernel->value.drift(), field ? &field->value : nullptr, law,
                                                  kernel->value.horizon(), kernel->value.grid(), cfg)};
  });
}

void scsb_ensemble_free(scsb_ensemble* ensemble) { delete ensemble; }

size_t scsb_ensemble_size(const scsb_ensemble* ensemble) { return ensemble ? ensemble->value.n_paths : 0; }

scsb_status scsb_ensemble_terminal(const scsb_ensemble* ensemble, double* out, size_t n) {
  return guard([&] {
    need(ensemble, "ensemble");
    copy_out(ensemble->value.terminal, out, n, "out");
  });
}

scsb_status scsb_value_eval(const scsb_ensemble* ensemble, double eps, double* mean, double* stderr_out) {
  return guard([&] {
    need(ensemble, "ensemble");
    const scsb::Estimate e = scsb::value_eval(ensemble->value, eps);
    if (mean) *mean = e.mean;
    if (stderr_out) *stderr_out = e.stderr_;
  });
}

scsb_status scsb_bel_gradient(const scsb_kernel* kernel, const double* g, size_t n, double t, double x,
                              size_t n_paths, uint64_t seed, double* mean, double* stderr_out) {
  return guard([&] {
    need(kernel, "kernel");
    need(g, "g");
    need_size(n, kernel->value.grid().size(), "g");
    const scsb::Estimate e =
        scsb::bel_gradient(kernel->value, std::span<const double>(g, n), t, x, n_paths, seed);
    if (mean) *mean = e.mean;
    if (stderr_out) *stderr_out = e.stderr_;
  });
}

scsb_status scsb_run(const char* command, const char* config_json, const char* out_dir, uint64_t seed, int has_seed,
                     unsigned workers, char** report, int* verdict) {
  return guard([&] {
    need(command, "command");
    need(config_json, "config");
    const std::string cmd(command);
    scsb::require(scsb::known_command(cmd), scsb::ErrorCode::Config, "unknown command '" + cmd + "'");
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(config_json);
    } catch (const nlohmann::json::exception& e) {
      scsb::fail(scsb::ErrorCode::Config, std::string("config is not valid JSON: ") + e.what());
    }
    scsb::ExperimentConfig cfg = scsb::parse_config(j, scsb::command_allows_zero_k(cmd));
    if (out_dir != nullptr && out_dir[0] != '\0') cfg.output_dir = out_dir;
    if (has_seed) cfg.mc.seed = seed;
    if (workers != 0) cfg.workers = workers;
    const scsb::Report r = scsb::run_command(cmd, cfg);
    if (report) *report = dup_string(r.to_json().dump(2));
    if (verdict) *verdict = scsb::exit_code(r.status);
  });
}

}  // extern "C"
