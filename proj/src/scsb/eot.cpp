#include "scsb/eot.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "scsb/stats.hpp"

namespace scsb {

EntropicCost::EntropicCost(Eigen::MatrixXd log_kernel) : L_(std::move(log_kernel)) {
  require(L_.rows() > 0 && L_.cols() > 0, ErrorCode::InvalidArgument, "empty cost matrix");
  for (Eigen::Index j = 0; j < L_.cols(); ++j) {
    for (Eigen::Index i = 0; i < L_.rows(); ++i) {
      require(!std::isnan(L_(i, j)) && L_(i, j) != std::numeric_limits<double>::infinity(),
              ErrorCode::InvalidArgument, "log kernel entries must be finite or -inf");
    }
  }
  Lt_ = L_.transpose();
}

EntropicCost EntropicCost::from_kernel(const TransitionKernel& kernel) {
  return EntropicCost(kernel.log_matrix(0.0, kernel.horizon()));
}

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

std::vector<std::size_t> support_of(std::span<const double> p) {
  std::vector<std::size_t> idx;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p[i] > 0.0) idx.push_back(i);
  }
  return idx;
}

// out_c = -log sum_{r in active} exp(M(r, c) + add_r) for every column c of M.
void soft_update(const Eigen::MatrixXd& M, const std::vector<double>& add,
                 const std::vector<std::size_t>& active, std::vector<double>& out) {
  const auto cols = static_cast<std::size_t>(M.cols());
  out.resize(cols);
  std::vector<double> buf(active.size());
  for (std::size_t c = 0; c < cols; ++c) {
    const double* col = M.data() + c * static_cast<std::size_t>(M.rows());
    double top = kNegInf;
    for (std::size_t k = 0; k < active.size(); ++k) {
      buf[k] = col[active[k]] + add[active[k]];
      top = std::max(top, buf[k]);
    }
    if (top == kNegInf) {
      out[c] = std::numeric_limits<double>::infinity();
      continue;
    }
    double s = 0.0;
    for (std::size_t k = 0; k < active.size(); ++k) s += std::exp(buf[k] - top);
    out[c] = -(top + std::log(s));
  }
}

double marginal_error(std::span<const double> p, const std::vector<double>& cur,
                      const std::vector<double>& next) {
  std::vector<double> t(p.size(), 0.0);
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p[i] > 0.0) t[i] = p[i] * std::abs(std::exp(cur[i] - next[i]) - 1.0);
  }
  return pairwise_sum(t);
}

std::vector<double> plus_log(const std::vector<double>& pot, std::span<const double> p) {
  std::vector<double> out(pot.size());
  for (std::size_t i = 0; i < pot.size(); ++i) out[i] = p[i] > 0.0 ? pot[i] + std::log(p[i]) : kNegInf;
  return out;
}

}  // namespace

SinkhornResult sinkhorn_discrete(const EntropicCost& cost, std::span<const double> a,
                                 std::span<const double> b, const SinkhornOptions& opts) {
  const std::size_t m = cost.rows(), n = cost.cols();
  require(a.size() == m && b.size() == n, ErrorCode::GridMismatch, "marginal sizes differ from cost");
  require(opts.tol > 0.0 && opts.max_iter >= 1, ErrorCode::InvalidArgument,
          "sinkhorn needs tol > 0 and max_iter >= 1");
  double sa = 0.0, sb = 0.0;
  for (double v : a) {
    require(v >= 0.0 && std::isfinite(v), ErrorCode::InvalidArgument, "marginal entries must be >= 0");
    sa += v;
  }
  for (double v : b) {
    require(v >= 0.0 && std::isfinite(v), ErrorCode::InvalidArgument, "marginal entries must be >= 0");
    sb += v;
  }
  require(std::abs(sa - 1.0) < 1e-9 && std::abs(sb - 1.0) < 1e-9, ErrorCode::InvalidArgument,
          "marginals must be probability vectors");
  const auto act_a = support_of(a);
  const auto act_b = support_of(b);

  SinkhornResult res;
  auto& phi = res.potentials.phi;
  auto& psi = res.potentials.psi;
  phi = opts.warm_phi != nullptr ? *opts.warm_phi : std::vector<double>(m, 0.0);
  require(phi.size() == m, ErrorCode::InvalidArgument, "warm-start phi has the wrong size");
  for (double& v : phi) {
    if (!std::isfinite(v)) v = 0.0;
  }
  std::vector<double> psi_next;
  soft_update(cost.log_kernel(), plus_log(phi, a), act_a, psi);
  bool converged = false;
  double col_err = std::numeric_limits<double>::infinity();
  for (std::size_t it = 1; it <= opts.max_iter; ++it) {
    soft_update(cost.log_kernel_t(), plus_log(psi, b), act_b, phi);
    soft_update(cost.log_kernel(), plus_log(phi, a), act_a, psi_next);
    col_err = marginal_error(b, psi, psi_next);
    res.report.iterations = it;
    if (!std::isfinite(col_err)) {
      fail(ErrorCode::Support, "sinkhorn: a target point receives no mass from the initial support");
    }
    if (col_err < opts.tol) {
      converged = true;
      break;
    }
    psi.swap(psi_next);
  }
  std::vector<double> phi_check;
  soft_update(cost.log_kernel_t(), plus_log(psi, b), act_b, phi_check);
  res.report.row_error = marginal_error(a, phi, phi_check);
  res.report.col_error = col_err;

  // Symmetric normalization: int phi da = int psi db.
  double ia = 0.0, ib = 0.0;
  for (std::size_t i : act_a) ia += a[i] * phi[i];
  for (std::size_t j : act_b) ib += b[j] * psi[j];
  const double shift = 0.5 * (ib - ia);
  for (double& v : phi) v += shift;
  for (double& v : psi) v -= shift;
  ia = 0.0;
  ib = 0.0;
  for (std::size_t i : act_a) ia += a[i] * phi[i];
  for (std::size_t j : act_b) ib += b[j] * psi[j];
  res.potentials.normalization_residual = std::abs(ia - ib);

  double transport = 0.0, kl = 0.0;
  const auto& L = cost.log_kernel();
  for (std::size_t j : act_b) {
    for (std::size_t i : act_a) {
      const double l = L(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
      if (l == kNegInf) continue;
      const double e = l + phi[i] + psi[j];
      const double pij = std::exp(e) * a[i] * b[j];
      transport += -l * pij;
      kl += e * pij;
    }
  }
  res.report.transport_cost = transport;
  res.report.kl_term = kl;
  res.report.total = transport + kl;
  if (!converged) {
    throw SinkhornError(ErrorCode::NonConvergence,
                        "sinkhorn did not reach marginal tolerance " + std::to_string(opts.tol) +
                            " in " + std::to_string(opts.max_iter) + " iterations (error " +
                            std::to_string(std::max(res.report.row_error, col_err)) + ")",
                        res);
  }
  return res;
}

namespace {

std::vector<double> masses(const GridMeasure& mu) {
  std::vector<double> p(mu.size());
  double s = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    p[i] = mu.grid().weight(i) * mu[i];
    s += p[i];
  }
  for (double& v : p) v /= s;
  return p;
}

}  // namespace

SinkhornResult sinkhorn(const EntropicCost& cost, const GridMeasure& mu_ini, const GridMeasure& mu,
                        const SinkhornOptions& opts) {
  require(cost.rows() == mu_ini.size() && cost.cols() == mu.size(), ErrorCode::GridMismatch,
          "cost matrix does not match the measures' grids");
  return sinkhorn_discrete(cost, masses(mu_ini), masses(mu), opts);
}

SinkhornResult sinkhorn(const TransitionKernel& kernel, const GridMeasure& mu_ini, const GridMeasure& mu,
                        const SinkhornOptions& opts) {
  require_same_grid(kernel.grid(), mu_ini.grid(), "sinkhorn");
  require_same_grid(kernel.grid(), mu.grid(), "sinkhorn");
  return sinkhorn(EntropicCost::from_kernel(kernel), mu_ini, mu, opts);
}

Gamma1Result gamma1(const EntropicCost& cost, const GridMeasure& mu_ini, const GridMeasure& mu,
                    const SinkhornOptions& opts) {
  Gamma1Result out;
  out.sinkhorn = sinkhorn(cost, mu_ini, mu, opts);
  const auto& phi = out.sinkhorn.potentials.phi;
  const auto& psi = out.sinkhorn.potentials.psi;
  const Grid& gi = mu_ini.grid();
  const Grid& gt = mu.grid();
  // Gauge with int rho0 = 1: rho0 = e^(phi - c) f_ini, rho = e^(psi + c) f_mu.
  double top = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < mu_ini.size(); ++i) {
    if (mu_ini[i] > 0.0) top = std::max(top, phi[i]);
  }
  std::vector<double> t(mu_ini.size(), 0.0);
  for (std::size_t i = 0; i < mu_ini.size(); ++i) {
    if (mu_ini[i] > 0.0) t[i] = gi.weight(i) * mu_ini[i] * std::exp(phi[i] - top);
  }
  const double c = top + std::log(pairwise_sum(t));
  out.rho0.resize(mu_ini.size());
  out.rho.resize(mu.size());
  for (std::size_t i = 0; i < mu_ini.size(); ++i) {
    out.rho0[i] = mu_ini[i] > 0.0 ? std::exp(phi[i] - c) * mu_ini[i] : 0.0;
  }
  for (std::size_t j = 0; j < mu.size(); ++j) {
    out.rho[j] = mu[j] > 0.0 ? std::exp(psi[j] + c) * mu[j] : 0.0;
  }
  // Factorization residuals with K = exp(L).
  const auto& L = cost.log_kernel();
  std::vector<double> rt(mu.size(), 0.0), ri(mu_ini.size(), 0.0);
  for (std::size_t j = 0; j < mu.size(); ++j) {
    double s = 0.0;
    for (std::size_t i = 0; i < mu_ini.size(); ++i) {
      if (out.rho0[i] > 0.0) {
        s += gi.weight(i) * std::exp(L(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j))) * out.rho0[i];
      }
    }
    rt[j] = gt.weight(j) * std::abs(out.rho[j] * s - mu[j]);
  }
  for (std::size_t i = 0; i < mu_ini.size(); ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < mu.size(); ++j) {
      if (out.rho[j] > 0.0) {
        s += gt.weight(j) * std::exp(L(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j))) * out.rho[j];
      }
    }
    ri[i] = gi.weight(i) * std::abs(out.rho0[i] * s - mu_ini[i]);
  }
  out.terminal_factorization_error = pairwise_sum(rt);
  out.initial_factorization_error = pairwise_sum(ri);
  return out;
}

Gamma1Result gamma1(const TransitionKernel& kernel, const GridMeasure& mu_ini, const GridMeasure& mu,
                    const SinkhornOptions& opts) {
  require_same_grid(kernel.grid(), mu_ini.grid(), "gamma1");
  require_same_grid(kernel.grid(), mu.grid(), "gamma1");
  return gamma1(EntropicCost::from_kernel(kernel), mu_ini, mu, opts);
}

std::vector<double> xi_bound(const TransitionKernel& kernel, const GridMeasure& mu_ini) {
  require_same_grid(kernel.grid(), mu_ini.grid(), "xi_bound");
  const Eigen::MatrixXd L = kernel.log_matrix(0.0, kernel.horizon());
  const std::size_t n = mu_ini.size();
  std::vector<double> xi(n);
  std::vector<double> t(n);
  for (std::size_t j = 0; j < n; ++j) {
    for (std::size_t i = 0; i < n; ++i) {
      t[i] = mu_ini[i] > 0.0
                 ? -L(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) * mu_ini[i]
                 : 0.0;
    }
    xi[j] = mu_ini.grid().integrate(t);
  }
  return xi;
}

double stability_ratio(const TransitionKernel& kernel, const GridMeasure& mu_ini,
                       const GridMeasure& mu1, const GridMeasure& mu2, const SinkhornOptions& opts) {
  const double w2 = wasserstein(mu1, mu2, 2);
  require(w2 >= 1e-12, ErrorCode::Degenerate, "stability ratio needs two distinct measures");
  const EntropicCost cost = EntropicCost::from_kernel(kernel);
  const auto r1 = sinkhorn(cost, mu_ini, mu1, opts);
  const auto r2 = sinkhorn(cost, mu_ini, mu2, opts);
  double dphi = 0.0, dpsi = 0.0;
  for (std::size_t i = 0; i < mu_ini.size(); ++i) {
    if (mu_ini[i] > 1e-8) dphi = std::max(dphi, std::abs(r1.potentials.phi[i] - r2.potentials.phi[i]));
  }
  for (std::size_t j = 0; j < mu1.size(); ++j) {
    if (mu1[j] > 1e-8 && mu2[j] > 1e-8) {
      dpsi = std::max(dpsi, std::abs(r1.potentials.psi[j] - r2.potentials.psi[j]));
    }
  }
  return (dphi + dpsi) / w2;
}

}  // namespace scsb
