#ifndef SCSB_SCSB_H_
#define SCSB_SCSB_H_

#include <stddef.h>
#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

#if defined(SCSB_BUILDING_LIBRARY)
#define SCSB_API __attribute__((visibility("default")))
#else
#define SCSB_API
#endif

typedef enum scsb_status {
  SCSB_OK = 0,
  SCSB_ERR_INVALID_ARGUMENT,
  SCSB_ERR_DOMAIN,
  SCSB_ERR_GRID_MISMATCH,
  SCSB_ERR_GRID_TOO_NARROW,
  SCSB_ERR_INTERPOLATION_REFUSED,
  SCSB_ERR_TRUNCATION,
  SCSB_ERR_RATIO_UNBOUNDED,
  SCSB_ERR_DEGENERATE,
  SCSB_ERR_SUPPORT,
  SCSB_ERR_INFEASIBLE,
  SCSB_ERR_STALL,
  SCSB_ERR_NONCONVERGENCE,
  SCSB_ERR_DIVERGENCE,
  SCSB_ERR_TRUNCATION_MISMATCH,
  SCSB_ERR_FIT_DEGENERATE,
  SCSB_ERR_NONDIFFERENTIABLE,
  SCSB_ERR_CONFIG,
  SCSB_ERR_IO,
  SCSB_ERR_INTERNAL
} scsb_status;

typedef struct scsb_kernel scsb_kernel;
typedef struct scsb_measure scsb_measure;
typedef struct scsb_penalty scsb_penalty;
typedef struct scsb_field scsb_field;
typedef struct scsb_ensemble scsb_ensemble;

/* Message of the last failed call on this thread; empty after success. */
SCSB_API const char* scsb_last_error(void);
SCSB_API const char* scsb_status_name(scsb_status status);
SCSB_API const char* scsb_version(void);
/* Process exit code for a failed call: 3 for usage, config and I/O errors, 4 otherwise. */
SCSB_API int scsb_exit_code(scsb_status status);
SCSB_API void scsb_string_free(char* s);

/* Kernels. Grids are uniform on [lower, upper] with n nodes. */
SCSB_API scsb_status scsb_kernel_brownian(double horizon, double lower, double upper, size_t n,
                                          scsb_kernel** out);
SCSB_API scsb_status scsb_kernel_ou(double horizon, double theta, double lower, double upper, size_t n,
                                    scsb_kernel** out);
/* drift is "zero", "ou" or "tanh". */
SCSB_API scsb_status scsb_kernel_tabulated(const char* drift, double theta, double horizon, double lower,
                                           double upper, size_t n, size_t n_steps, scsb_kernel** out);
SCSB_API void scsb_kernel_free(scsb_kernel* kernel);
SCSB_API size_t scsb_kernel_grid_size(const scsb_kernel* kernel);
SCSB_API scsb_status scsb_kernel_density(const scsb_kernel* kernel, double s, double y, double t, double x,
                                         double* out);
SCSB_API scsb_status scsb_kernel_grad_log_density(const scsb_kernel* kernel, double s, double y, double t,
                                                  double x, double* out);
/* value[i] = E[f(X_s) | X_t = x_i], log_gradient[i] = d/dx log value. Arrays have grid size n. */
SCSB_API scsb_status scsb_kernel_backward(const scsb_kernel* kernel, double t, double s, const double* f,
                                          size_t n, double* value, double* log_gradient);

/* Measures */
SCSB_API scsb_status scsb_measure_create(double lower, double upper, size_t n, const double* density,
                                         scsb_measure** out);
SCSB_API scsb_status scsb_measure_gaussian(double lower, double upper, size_t n, double mean, double sd,
                                           scsb_measure** out);
SCSB_API scsb_status scsb_measure_read_csv(const char* path, scsb_measure** out);
SCSB_API scsb_status scsb_measure_write_csv(const scsb_measure* mu, const char* path);
SCSB_API void scsb_measure_free(scsb_measure* mu);
SCSB_API size_t scsb_measure_size(const scsb_measure* mu);
/* Copies the normalized density into out[0..n). */
SCSB_API scsb_status scsb_measure_density(const scsb_measure* mu, double* out, size_t n);
SCSB_API scsb_status scsb_measure_nodes(const scsb_measure* mu, double* out, size_t n);
SCSB_API scsb_status scsb_kl_divergence(const scsb_measure* mu, const scsb_measure* nu, double* out);
SCSB_API scsb_status scsb_wasserstein(const scsb_measure* mu, const scsb_measure* nu, int p, double* out);
SCSB_API scsb_status scsb_l1_distance(const scsb_measure* mu, const scsb_measure* nu, double* out);
/* Law of X_s given X_t ~ mu. */
SCSB_API scsb_status scsb_pushforward(const scsb_kernel* kernel, const scsb_measure* mu, double t, double s,
                                      scsb_measure** out);

/* Penalties: variant is "kl", "weighted_l1" (uses p) or "w2_guardrail" (uses c, lambda, x0). */
SCSB_API scsb_status scsb_penalty_create(const char* variant, const scsb_measure* target, double p, double c,
                                         double lambda, double x0, scsb_penalty** out);
SCSB_API void scsb_penalty_free(scsb_penalty* penalty);
SCSB_API scsb_status scsb_penalty_eval(const scsb_penalty* penalty, const scsb_measure* mu, double* out);

/* argmin of KL(mu || prior) + k G(mu). diagnostics (optional) receives
   {"m", "Dk", "G", "iters", "converged"} as JSON; free it with scsb_string_free. */
SCSB_API scsb_status scsb_minimize_dk(const scsb_measure* prior, const scsb_penalty* penalty, double k,
                                      scsb_measure** out, char** diagnostics);

/* Control fields on the time mesh times[0..n_times), which must start at 0. */
SCSB_API scsb_status scsb_bridge_delta(const scsb_kernel* kernel, double x0, const scsb_measure* terminal,
                                       const double* times, size_t n_times, scsb_field** out);
SCSB_API scsb_status scsb_bridge_general(const scsb_kernel* kernel, const double* rho, size_t n,
                                         const double* times, size_t n_times, scsb_field** out);
SCSB_API void scsb_field_free(scsb_field* field);
SCSB_API size_t scsb_field_rows(const scsb_field* field);
SCSB_API scsb_status scsb_field_times(const scsb_field* field, double* out, size_t n_times);
SCSB_API scsb_status scsb_field_alpha(const scsb_field* field, size_t row, double* out, size_t n);
SCSB_API scsb_status scsb_field_h(const scsb_field* field, size_t row, double* out, size_t n);
SCSB_API scsb_status scsb_field_max_abs_alpha(const scsb_field* field, double* out);
SCSB_API scsb_status scsb_field_write_csv(const scsb_field* field, const char* path);
/* Integral over [0, T - eps] of |alpha_a(t, x) - alpha_b(t, x)| dt. */
SCSB_API scsb_status scsb_field_l1_gap(const scsb_field* a, const scsb_field* b, double x, double eps,
                                       double* out);

/* Entropic OT between mu_ini and mu for the kernel's cost. phi and psi have grid size n.
   report (optional) receives cost, marginal errors and iteration count as JSON. */
SCSB_API scsb_status scsb_sinkhorn(const scsb_kernel* kernel, const scsb_measure* mu_ini, const scsb_measure* mu,
                                   double tol, size_t max_iter, double* phi, double* psi, size_t n, char** report);
/* rho and rho0 (optional) have grid size n. */
SCSB_API scsb_status scsb_gamma1(const scsb_kernel* kernel, const scsb_measure* mu_ini, const scsb_measure* mu,
                                 double* rho, double* rho0, size_t n);
/* Damped fixed point for a general initial law; trace (optional) is JSON. */
SCSB_API scsb_status scsb_solve_scsbp(const scsb_kernel* kernel, const scsb_measure* mu_ini,
                                      const scsb_penalty* penalty, double k, double tol, double damping,
                                      scsb_measure** mu_hat, scsb_field** field, char** trace);

/* Euler-Maruyama for dX = (b + alpha) dt + dW on [0, T - stop_eps]. field may be NULL (no control).
   The initial law is init when non-NULL, otherwise the point x0. */
SCSB_API scsb_status scsb_simulate(const scsb_kernel* kernel, const scsb_field* field, const scsb_measure* init,
                                   double x0, size_t n_steps, size_t n_paths, uint64_t seed, double stop_eps,
                                   unsigned workers, scsb_ensemble** out);
SCSB_API void scsb_ensemble_free(scsb_ensemble* ensemble);
SCSB_API size_t scsb_ensemble_size(const scsb_ensemble* ensemble);
SCSB_API scsb_status scsb_ensemble_terminal(const scsb_ensemble* ensemble, double* out, size_t n);
SCSB_API scsb_status scsb_value_eval(const scsb_ensemble* ensemble, double eps, double* mean, double* stderr_out);
/* Monte Carlo d/dx E[g(X_T) | X_t = x]; g has grid size n. */
SCSB_API scsb_status scsb_bel_gradient(const scsb_kernel* kernel, const double* g, size_t n, double t, double x,
                                       size_t n_paths, uint64_t seed, double* mean, double* stderr_out);

/* Runs a harness command ("bridge", "sweep-control", "sweep-value", "sweep-terminal",
   "finetune", "transfer", "simulate", "selftest") on a JSON config.
   out_dir overrides the config's output_dir when non-NULL and non-empty; the seed overrides
   mc.seed when has_seed is nonzero; workers overrides the config when nonzero.
   report (optional) receives report.json; verdict receives 0 pass, 1 fail, 2 inconclusive. */
SCSB_API scsb_status scsb_run(const char* command, const char* config_json, const char* out_dir, uint64_t seed,
                              int has_seed, unsigned workers, char** report, int* verdict);

#ifdef __cplusplus
}
#endif

#endif
