#include "scsb/measure.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <numbers>
#include <sstream>

#include "scsb/error.hpp"
#include "scsb/stats.hpp"

namespace scsb {

GridMeasure::GridMeasure(Grid grid, std::vector<double> density)
    : grid_(std::move(grid)), density_(std::move(density)) {
  require(density_.size() == grid_.size(), ErrorCode::GridMismatch,
          "density length differs from grid size");
  for (double& v : density_) {
    require(std::isfinite(v) && v >= 0.0, ErrorCode::InvalidArgument,
            "density values must be finite and nonnegative");
    if (v < kDensityFloor) v = 0.0;
  }
  raw_mass_ = grid_.integrate(density_);
  require(raw_mass_ > 0.0, ErrorCode::Degenerate, "density has zero mass");
  for (double& v : density_) v /= raw_mass_;
}

GridMeasure GridMeasure::gaussian(const Grid& grid, double mean, double sd) {
  require(sd > 0.0, ErrorCode::InvalidArgument, "gaussian sd must be positive");
  std::vector<double> f(grid.size());
  const double c = 1.0 / (sd * std::sqrt(2.0 * std::numbers::pi));
  for (std::size_t i = 0; i < grid.size(); ++i) {
    const double z = (grid.node(i) - mean) / sd;
    f[i] = c * std::exp(-0.5 * z * z);
  }
  return GridMeasure(grid, std::move(f));
}

GridMeasure GridMeasure::from_log_density(const Grid& grid,
                                          const std::function<double(double)>& log_f) {
  std::vector<double> r(grid.size());
  double top = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < grid.size(); ++i) {
    r[i] = log_f(grid.node(i));
    require(!std::isnan(r[i]) && r[i] != std::numeric_limits<double>::infinity(),
            ErrorCode::InvalidArgument, "log-density must be finite or -inf");
    top = std::max(top, r[i]);
  }
  require(std::isfinite(top), ErrorCode::Degenerate, "log-density is -inf everywhere");
  for (double& v : r) v = std::exp(v - top);
  return GridMeasure(grid, std::move(r));
}

GridMeasure GridMeasure::uniform(const Grid& grid) {
  return GridMeasure(grid, std::vector<double>(grid.size(), 1.0));
}

double GridMeasure::mean() const {
  std::vector<double> xf(size());
  for (std::size_t i = 0; i < size(); ++i) xf[i] = grid_.node(i) * density_[i];
  return grid_.integrate(xf);
}

double GridMeasure::variance() const {
  const double m = mean();
  std::vector<double> v(size());
  for (std::size_t i = 0; i < size(); ++i) {
    const double d = grid_.node(i) - m;
    v[i] = d * d * density_[i];
  }
  return grid_.integrate(v);
}

std::vector<double> GridMeasure::cdf() const {
  auto F = grid_.cumulative(density_);
  const double total = F.back();
  for (double& v : F) v /= total;
  return F;
}

GridMeasure gaussian_mixture(const Grid& grid, std::span<const MixtureComponent> components) {
  require(!components.empty(), ErrorCode::InvalidArgument, "mixture needs components");
  std::vector<double> f(grid.size(), 0.0);
  for (const auto& c : components) {
    require(c.weight >= 0.0 && c.sd > 0.0, ErrorCode::InvalidArgument,
            "mixture weights must be nonnegative and sds positive");
    const double norm = c.weight / (c.sd * std::sqrt(2.0 * std::numbers::pi));
    for (std::size_t i = 0; i < grid.size(); ++i) {
      const double z = (grid.node(i) - c.mean) / c.sd;
      f[i] += norm * std::exp(-0.5 * z * z);
    }
  }
  return GridMeasure(grid, std::move(f));
}

GridMeasure mix(const GridMeasure& a, const GridMeasure& b, double theta) {
  require_same_grid(a.grid(), b.grid(), "mix");
  require(theta >= 0.0 && theta <= 1.0, ErrorCode::InvalidArgument, "mixing weight outside [0,1]");
  std::vector<double> f(a.size());
  for (std::size_t i = 0; i < f.size(); ++i) f[i] = (1.0 - theta) * a[i] + theta * b[i];
  return GridMeasure(a.grid(), std::move(f));
}

double l1_distance(const GridMeasure& a, const GridMeasure& b) {
  require_same_grid(a.grid(), b.grid(), "l1_distance");
  std::vector<double> d(a.size());
  for (std::size_t i = 0; i < d.size(); ++i) d[i] = std::abs(a[i] - b[i]);
  return a.grid().integrate(d);
}

double sup_distance(const GridMeasure& a, const GridMeasure& b) {
  require_same_grid(a.grid(), b.grid(), "sup_distance");
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

double kl_divergence(const GridMeasure& mu, const GridMeasure& nu) {
  require_same_grid(mu.grid(), nu.grid(), "kl_divergence");
  std::vector<double> t(mu.size(), 0.0);
  for (std::size_t i = 0; i < mu.size(); ++i) {
    if (mu[i] <= kDensityFloor) continue;
    if (nu[i] <= kDensityFloor) return std::numeric_limits<double>::infinity();
    t[i] = mu[i] * std::log(mu[i] / nu[i]);
  }
  return std::max(0.0, mu.grid().integrate(t));
}

std::vector<double> quantiles(const GridMeasure& mu, std::size_t nodes) {
  require(nodes >= 1, ErrorCode::InvalidArgument, "need at least one quantile node");
  const auto F = mu.cdf();
  const Grid& g = mu.grid();
  std::vector<double> q(nodes);
  std::size_t i = 0;
  const std::size_t last = g.size() - 1;
  for (std::size_t j = 0; j < nodes; ++j) {
    const double u = (static_cast<double>(j) + 0.5) / static_cast<double>(nodes);
    while (i + 1 < last && F[i + 1] <= u) ++i;
    const double d = F[i + 1] - F[i];
    const double s = d > 0.0 ? std::clamp((u - F[i]) / d, 0.0, 1.0) : 0.0;
    q[j] = g.node(i) + s * g.spacing();
  }
  return q;
}

double wasserstein(const GridMeasure& mu, const GridMeasure& nu, int p) {
  require_same_grid(mu.grid(), nu.grid(), "wasserstein");
  require(p == 1 || p == 2, ErrorCode::InvalidArgument, "wasserstein order must be 1 or 2");
  const auto qa = quantiles(mu);
  const auto qb = quantiles(nu);
  std::vector<double> d(qa.size());
  for (std::size_t j = 0; j < d.size(); ++j) {
    const double e = std::abs(qa[j] - qb[j]);
    d[j] = p == 1 ? e : e * e;
  }
  const double m = pairwise_sum(d) / static_cast<double>(d.size());
  return p == 1 ? m : std::sqrt(m);
}

void write_measure_csv(const std::string& path, const GridMeasure& mu) {
  std::ofstream out(path);
  require(static_cast<bool>(out), ErrorCode::Io, "cannot open " + path + " for writing");
  out << "x,density\n" << std::setprecision(17);
  for (std::size_t i = 0; i < mu.size(); ++i) out << mu.grid().node(i) << ',' << mu[i] << '\n';
  require(static_cast<bool>(out), ErrorCode::Io, "write failed for " + path);
}

GridMeasure read_measure_csv(const std::string& path) {
  std::ifstream in(path);
  require(static_cast<bool>(in), ErrorCode::Io, "cannot open " + path);
  std::string line;
  std::getline(in, line);
  require(line.rfind("x,density", 0) == 0, ErrorCode::Io, path + ": expected header x,density");
  std::vector<double> xs, fs;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream row(line);
    double x = 0.0, f = 0.0;
    char comma = 0;
    row >> x >> comma >> f;
    require(!row.fail() && comma == ',', ErrorCode::Io, path + ": malformed row '" + line + "'");
    xs.push_back(x);
    fs.push_back(f);
  }
  require(xs.size() >= 2, ErrorCode::Io, path + ": need at least two rows");
  Grid grid(xs.front(), xs.back(), xs.size());
  for (std::size_t i = 0; i < xs.size(); ++i) {
    require(std::abs(xs[i] - grid.node(i)) <= 1e-9 * std::max(1.0, std::abs(xs[i])) + 1e-9 * grid.spacing(),
            ErrorCode::Io, path + ": x column is not a uniform grid");
  }
  return GridMeasure(grid, std::move(fs));
}

}  // namespace scsb
