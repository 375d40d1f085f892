#include "alice/glass.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <ostream>

#include "alice/csv.hpp"
#include "alice/random.hpp"

namespace alice {

namespace {

constexpr double kQuadratureLimit = 8.0;
constexpr double kQuadratureRelTol = 1e-8;

double normal_pdf(double x) {
  return std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi);
}

double simpson(double a, double fa, double b, double fb, double fm) {
  return (b - a) / 6.0 * (fa + 4.0 * fm + fb);
}

template <typename F>
double adaptive_simpson(const F& f, double a, double b, double fa, double fm, double fb,
                        double whole, double tol, int depth) {
  const double m = 0.5 * (a + b);
  const double lm = 0.5 * (a + m);
  const double rm = 0.5 * (m + b);
  const double flm = f(lm);
  const double frm = f(rm);
  const double left = simpson(a, fa, m, fm, flm);
  const double right = simpson(m, fm, b, fb, frm);
  const double delta = left + right - whole;
  if (depth <= 0 || std::abs(delta) <= 15.0 * tol) return left + right + delta / 15.0;
  return adaptive_simpson(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1) +
         adaptive_simpson(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1);
}

template <typename F>
double integrate(const F& f, double a, double b, double abs_tol) {
  const double fa = f(a);
  const double fb = f(b);
  const double fm = f(0.5 * (a + b));
  return adaptive_simpson(f, a, b, fa, fm, fb, simpson(a, fa, b, fb, fm), abs_tol, 50);
}

}  // namespace

GlassDensityMatrix density_matrix(const std::vector<ReluUnitRecord>& records, double psi,
                                  std::optional<Eigen::Index> dim) {
  if (!(psi > 0.0)) throw ConfigError("density_matrix needs psi > 0");
  Eigen::Index d = dim.value_or(records.empty() ? 0 : records.front().grad_y.size());
  GlassDensityMatrix out{Eigen::MatrixXd::Zero(d, d), psi};
  if (records.empty()) return out;

  // Canonical summation order: by unit id, ties broken by content.
  std::vector<const ReluUnitRecord*> order;
  order.reserve(records.size());
  for (const auto& rec : records) {
    if (rec.grad_y.size() != d) throw DimensionError("records disagree on parameter count");
    order.push_back(&rec);
  }
  std::sort(order.begin(), order.end(), [](const ReluUnitRecord* a, const ReluUnitRecord* b) {
    if (a->unit_id != b->unit_id) return a->unit_id < b->unit_id;
    if (a->y != b->y) return a->y < b->y;
    if (a->dL_dz != b->dL_dz) return a->dL_dz < b->dL_dz;
    return std::lexicographical_compare(a->grad_y.data(), a->grad_y.data() + a->grad_y.size(),
                                        b->grad_y.data(), b->grad_y.data() + b->grad_y.size());
  });

  Eigen::VectorXd weighted(d);
  Eigen::VectorXd magnitude(d);
  for (const ReluUnitRecord* rec : order) {
    const double dz2 = rec->dL_dz * rec->dL_dz;
    weighted = rec->grad_y.array().square() * dz2;
    magnitude = rec->grad_y.cwiseAbs();
    out.R.noalias() += weighted * magnitude.transpose();
  }
  out.R /= 2.0 * psi;
  return out;
}

GlassDensityDiag density_diag(const GlassDensityMatrix& density) {
  return {density.R.diagonal()};
}

Eigen::VectorXd variation_bound(const GlassDensityMatrix& density, const ParamVector& delta) {
  if (density.R.cols() != delta.size())
    throw DimensionError("variation_bound: R is " + std::to_string(density.R.cols()) +
                         " wide, delta has " + std::to_string(delta.size()) + " entries");
  return density.R * delta.cwiseAbs();
}

LossIncreaseBound loss_increase_bound(const GlassDensityDiag& density, const ParamVector& delta) {
  if (density.rho.size() != delta.size()) throw DimensionError("loss_increase_bound: size mismatch");
  if ((density.rho.array() < 0.0).any())
    throw ConfigError("loss_increase_bound: glass density must be nonnegative");
  const double scale = 2.0 / (3.0 * std::numbers::pi);
  const Eigen::ArrayXd cubed = delta.array().abs().cube() * density.rho.array();
  LossIncreaseBound out;
  out.per_coordinate = (scale * cubed).sqrt().matrix();
  out.coordinate_sum = out.per_coordinate.sum();
  out.aggregate = std::sqrt(scale * cubed.sum());
  return out;
}

std::string to_string(ProbeDensity density) {
  return density == ProbeDensity::Rademacher ? "rademacher" : "standard-normal";
}

ProbeDensity probe_density_from_string(const std::string& name) {
  if (name == "rademacher") return ProbeDensity::Rademacher;
  if (name == "standard-normal" || name == "normal") return ProbeDensity::StandardNormal;
  throw ConfigError("unsupported probe density '" + name + "'");
}

double update_probability(ProbeDensity density, double restriction) {
  if (restriction < 0.0) throw ConfigError("restriction threshold must be >= 0");
  if (restriction == 0.0) return 1.0;
  if (density == ProbeDensity::Rademacher) return restriction <= 1.0 ? 1.0 : 0.0;
  return std::erfc(restriction / std::numbers::sqrt2);
}

double kernel_constant(ProbeDensity density, double omega2, double restriction) {
  if (omega2 < 0.0) throw ConfigError("omega^2 must be >= 0");
  const double prob = update_probability(density, restriction);
  if (!(prob > 0.0)) throw ConfigError("restriction rejects every sample");
  if (omega2 == 0.0) return 1.0;
  if (density == ProbeDensity::Rademacher) return 1.0 / (1.0 + omega2);

  const auto integrand = [omega2](double x) {
    const double x2 = x * x;
    return x2 / (x2 + omega2) * normal_pdf(x);
  };
  const double lower = std::min(restriction, kQuadratureLimit);
  // Symmetric integrand: twice the positive half.
  const double half = integrate(integrand, lower, kQuadratureLimit, 0.5 * kQuadratureRelTol * prob);
  return 2.0 * half / prob;
}

KernelSpec make_kernel(ProbeDensity density, double omega2, double restriction) {
  KernelSpec k;
  k.density = density;
  k.omega2 = omega2;
  k.restrict_threshold = restriction;
  k.c = kernel_constant(density, omega2, restriction);
  k.inv_c = density == ProbeDensity::Rademacher ? 1.0 + omega2 : 1.0 / k.c;
  k.update_probability = update_probability(density, restriction);
  return k;
}

double optimal_kernel_weight(double delta, const KernelSpec& kernel) {
  if (kernel.restrict_threshold > 0.0 && std::abs(delta) < kernel.restrict_threshold) return 0.0;
  const double denom = delta * delta + kernel.omega2;
  if (denom == 0.0) return 0.0;
  return kernel.inv_c * delta / denom;
}

EstimatorVariance estimator_variance(const KernelSpec& kernel, double diagonal) {
  EstimatorVariance v;
  v.single_sample = diagonal * diagonal * (kernel.inv_c - 1.0);
  v.update_probability = kernel.update_probability;
  v.effective = v.single_sample / v.update_probability;
  return v;
}

GradientVariationMeasurement measure_variations(const GradientOracle& grad, const ParamVector& mu,
                                                double lambda, int n_samples, std::uint64_t seed) {
  if (!(lambda > 0.0)) throw ConfigError("measure_variations needs lambda > 0");
  if (n_samples < 1) throw ConfigError("measure_variations needs at least one sample");
  const Eigen::Index d = mu.size();
  ParamVector center_grad(d);
  grad(mu, center_grad);
  ParamVector direction(d);
  ParamVector probe(d);
  ParamVector probe_grad(d);
  GradientVariationMeasurement out{lambda, Eigen::VectorXd::Zero(d), n_samples};
  for (int k = 0; k < n_samples; ++k) {
    Rng rng = make_rng(seed, static_cast<std::uint64_t>(k));
    fill_rademacher(rng, direction);
    probe = mu + lambda * direction;
    grad(probe, probe_grad);
    out.v.array() += (probe_grad - center_grad).array().square();
  }
  out.v /= static_cast<double>(n_samples);
  return out;
}

const PowerLawRow& PowerLawReport::row(const std::string& name) const {
  for (const auto& r : rows)
    if (r.partition == name) return r;
  throw ConfigError("no partition named '" + name + "'");
}

PowerLawReport power_law(const GradientVariationMeasurement& at_lambda,
                         const GradientVariationMeasurement& at_2lambda,
                         const std::vector<Partition>& partitions) {
  const Eigen::Index d = at_lambda.v.size();
  if (at_2lambda.v.size() != d) throw DimensionError("power_law: measurements differ in length");
  std::vector<char> seen(static_cast<std::size_t>(d), 0);
  PowerLawReport report;
  report.lambda = at_lambda.lambda;
  for (const auto& part : partitions) {
    PowerLawRow row;
    row.partition = part.name;
    for (Eigen::Index i : part.indices) {
      if (i < 0 || i >= d) throw ConfigError("partition '" + part.name + "' index out of range");
      if (seen[i]++) throw ConfigError("partitions overlap at index " + std::to_string(i));
      row.sum_v_lambda += at_lambda.v[i];
      row.sum_v_2lambda += at_2lambda.v[i];
    }
    row.defined = row.sum_v_lambda > 0.0 && row.sum_v_2lambda > 0.0;
    row.p = row.defined ? std::log2(row.sum_v_2lambda) - std::log2(row.sum_v_lambda)
                        : std::numeric_limits<double>::quiet_NaN();
    report.rows.push_back(row);
  }
  return report;
}

std::vector<Partition> layer_partitions(const ModelSpec& spec) {
  std::vector<Partition> parts;
  for (int l = 0; l < spec.num_layers(); ++l) {
    Partition p;
    p.name = l + 1 == spec.num_layers() ? "output" : "hidden" + std::to_string(l);
    const Eigen::Index off = spec.layer_offset(l);
    for (Eigen::Index i = 0; i < spec.layer_size(l); ++i) p.indices.push_back(off + i);
    parts.push_back(std::move(p));
  }
  return parts;
}

void write_csv(std::ostream& out, const PowerLawReport& report) {
  csv::write_row(out, {"partition", "sum_v_lambda", "sum_v_2lambda", "p"});
  for (const auto& r : report.rows)
    csv::write_row(out, {r.partition, csv::number(r.sum_v_lambda), csv::number(r.sum_v_2lambda),
                         r.defined ? csv::number(r.p) : "undefined"});
}

void write_csv(std::ostream& out, const GradientVariationMeasurement& m) {
  csv::write_row(out, {"index", "v"});
  for (Eigen::Index i = 0; i < m.v.size(); ++i)
    csv::write_row(out, {csv::number(static_cast<long long>(i)), csv::number(m.v[i])});
}

}  // namespace alice
