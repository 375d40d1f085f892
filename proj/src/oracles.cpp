#include "alice/oracles.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <ostream>
#include <random>

#include <Eigen/Dense>

#include "alice/csv.hpp"
#include "alice/random.hpp"

namespace alice {

namespace {

// Trials are drawn in fixed-size chunks, each from its own stream, so the
// result depends only on the seed.
constexpr long long kChunk = 4096;

}  // namespace

void write_csv(std::ostream& out, const std::vector<OracleRow>& rows) {
  csv::write_row(out, {"quantity", "empirical", "predicted", "std_error", "n"});
  for (const auto& r : rows)
    csv::write_row(out, {r.quantity, csv::number(r.empirical), csv::number(r.predicted),
                         csv::number(r.std_error), csv::number(r.n)});
}

void SyntheticGlass1D::validate() const {
  if (!(rho >= 0.0)) throw ConfigError("glass walk: rho must be >= 0");
  if (!(lambda > 0.0)) throw ConfigError("glass walk: lambda must be > 0");
  if (n < 1) throw ConfigError("glass walk: n must be >= 1");
  if (trials < 2) throw ConfigError("glass walk: need at least two trials");
}

GlassWalkResult glass_walk_expectation(const SyntheticGlass1D& sim) {
  sim.validate();
  const double kick_sd = std::sqrt(sim.rho * sim.lambda / sim.n);
  const double n = static_cast<double>(sim.n);

  double sum_abs = 0.0, sum_abs2 = 0.0, sum_d = 0.0, sum_d2 = 0.0, sum_d4 = 0.0;
  for (long long start = 0, chunk = 0; start < sim.trials; start += kChunk, ++chunk) {
    Rng rng = make_rng(sim.seed, static_cast<std::uint64_t>(chunk));
    std::normal_distribution<double> normal(0.0, 1.0);
    const long long end = std::min(sim.trials, start + kChunk);
    for (long long t = start; t < end; ++t) {
      double delta = 0.0;
      for (int j = 1; j <= sim.n; ++j) {
        const double kick =
            sim.kicks == KickDistribution::Gaussian ? normal(rng) : rademacher(rng);
        delta += (n - j) / n * kick;
      }
      delta *= kick_sd * sim.lambda;
      const double a = std::abs(delta);
      sum_abs += a;
      sum_abs2 += a * a;
      sum_d += delta;
      sum_d2 += delta * delta;
      sum_d4 += delta * delta * delta * delta;
    }
  }
  const double N = static_cast<double>(sim.trials);
  GlassWalkResult r;
  r.trials = sim.trials;
  r.mean_abs = sum_abs / N;
  r.mean_abs_se = std::sqrt(std::max(0.0, sum_abs2 / N - r.mean_abs * r.mean_abs) / N);
  const double mean = sum_d / N;
  r.variance = (sum_d2 - N * mean * mean) / (N - 1.0);
  // Var of the sample variance, from the fourth moment about zero.
  const double m4 = sum_d4 / N;
  r.variance_se = std::sqrt(std::max(0.0, m4 - r.variance * r.variance) / N);
  const double l3 = sim.lambda * sim.lambda * sim.lambda;
  r.predicted_mean_abs = std::sqrt(2.0 * sim.rho * l3 / (3.0 * std::numbers::pi));
  r.predicted_variance = sim.rho * l3 / 3.0;
  return r;
}

TestMatrix TestMatrix::from(Eigen::MatrixXd m) {
  if (m.rows() != m.cols() || m.rows() < 2) throw DimensionError("test matrix must be square, d >= 2");
  if (!m.allFinite()) throw NumericError("test matrix has non-finite entries", "matrix");
  TestMatrix t;
  t.omega2.resize(m.rows());
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    const double diag2 = m(i, i) * m(i, i);
    const double off = m.row(i).squaredNorm() - diag2;
    t.omega2[i] = diag2 > 0.0 ? off / diag2 : std::numeric_limits<double>::infinity();
  }
  t.M = std::move(m);
  return t;
}

TestMatrix TestMatrix::random_dominant(int d, std::uint64_t seed, double omega2_lo,
                                       double omega2_hi) {
  Rng rng = make_rng(seed, 0x6d6174);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> normal(0.0, 1.0);
  Eigen::MatrixXd m(d, d);
  for (int i = 0; i < d; ++i) {
    const double diag = (1.0 + unit(rng)) * (unit(rng) < 0.5 ? -1.0 : 1.0);
    const double omega2 = omega2_lo + (omega2_hi - omega2_lo) * unit(rng);
    double off_sq = 0.0;
    for (int j = 0; j < d; ++j) {
      if (j == i) continue;
      m(i, j) = normal(rng);
      off_sq += m(i, j) * m(i, j);
    }
    const double scale = std::sqrt(omega2 * diag * diag / off_sq);
    for (int j = 0; j < d; ++j)
      if (j != i) m(i, j) *= scale;
    m(i, i) = diag;
  }
  return from(std::move(m));
}

namespace {

struct Accumulator {
  Eigen::VectorXd sum, sum2, count;
  double trace_sum = 0.0, trace_sum2 = 0.0;
  explicit Accumulator(Eigen::Index d)
      : sum(Eigen::VectorXd::Zero(d)), sum2(Eigen::VectorXd::Zero(d)),
        count(Eigen::VectorXd::Zero(d)) {}
};

template <typename Weight>
EstimatorStats run_estimator(const TestMatrix& matrix, ProbeDensity density, long long n_samples,
                             std::uint64_t seed, const Weight& weight) {
  if (n_samples < 2) throw ConfigError("mc_estimator needs at least two samples");
  const Eigen::Index d = matrix.M.rows();
  Accumulator acc(d);
  Eigen::MatrixXd probes(d, kChunk);
  Eigen::MatrixXd products(d, kChunk);
  bool all_accepted = true;

  for (long long start = 0, chunk = 0; start < n_samples; start += kChunk, ++chunk) {
    const long long block = std::min(kChunk, n_samples - start);
    Rng rng = make_rng(seed, static_cast<std::uint64_t>(chunk));
    std::normal_distribution<double> normal(0.0, 1.0);
    for (long long b = 0; b < block; ++b)
      for (Eigen::Index i = 0; i < d; ++i)
        probes(i, b) = density == ProbeDensity::Rademacher ? rademacher(rng) : normal(rng);
    products.leftCols(block).noalias() = matrix.M * probes.leftCols(block);
    for (long long b = 0; b < block; ++b) {
      double trace = 0.0;
      for (Eigen::Index i = 0; i < d; ++i) {
        double w = 0.0;
        if (!weight(i, probes(i, b), w)) {
          all_accepted = false;
          continue;
        }
        const double est = w * products(i, b);
        acc.sum[i] += est;
        acc.sum2[i] += est * est;
        acc.count[i] += 1.0;
        trace += est;
      }
      acc.trace_sum += trace;
      acc.trace_sum2 += trace * trace;
    }
  }

  EstimatorStats st;
  st.n_samples = n_samples;
  st.accepted = acc.count;
  st.mean = Eigen::VectorXd::Zero(d);
  st.variance = Eigen::VectorXd::Zero(d);
  st.std_error = Eigen::VectorXd::Zero(d);
  for (Eigen::Index i = 0; i < d; ++i) {
    const double k = acc.count[i];
    if (k < 2) continue;
    st.mean[i] = acc.sum[i] / k;
    st.variance[i] = (acc.sum2[i] - k * st.mean[i] * st.mean[i]) / (k - 1.0);
    st.std_error[i] = std::sqrt(st.variance[i] / k);
  }
  st.bias = st.mean - matrix.M.diagonal();
  if (all_accepted) {
    const double N = static_cast<double>(n_samples);
    const double mean = acc.trace_sum / N;
    st.trace_bias = mean - matrix.M.trace();
    st.trace_std_error = std::sqrt((acc.trace_sum2 - N * mean * mean) / (N - 1.0) / N);
  } else {
    st.trace_bias = std::numeric_limits<double>::quiet_NaN();
    st.trace_std_error = std::numeric_limits<double>::quiet_NaN();
  }
  return st;
}

}  // namespace

EstimatorStats mc_estimator(const TestMatrix& matrix, std::span<const KernelSpec> kernels,
                            long long n_samples, std::uint64_t seed) {
  const Eigen::Index d = matrix.M.rows();
  if (kernels.empty() || (kernels.size() != 1 && static_cast<Eigen::Index>(kernels.size()) != d))
    throw DimensionError("mc_estimator needs one kernel or one per row");
  const ProbeDensity density = kernels.front().density;
  for (const auto& k : kernels)
    if (k.density != density) throw ConfigError("mc_estimator: kernels disagree on density");
  // kappa(delta) = delta / (c (delta^2 + omega^2)), written out here rather
  // than borrowed from the estimator under test.
  return run_estimator(matrix, density, n_samples, seed,
                       [&](Eigen::Index i, double delta, double& w) {
                         const KernelSpec& k = kernels.size() == 1 ? kernels[0] : kernels[i];
                         if (std::abs(delta) < k.restrict_threshold) return false;
                         w = delta / (k.c * (delta * delta + k.omega2));
                         return true;
                       });
}

EstimatorStats mc_identity_estimator(const TestMatrix& matrix, ProbeDensity density,
                                     long long n_samples, std::uint64_t seed) {
  return run_estimator(matrix, density, n_samples, seed,
                       [](Eigen::Index, double delta, double& w) {
                         w = delta;
                         return true;
                       });
}

namespace {

void count_preconditions(VariationCoverage& cov, const std::vector<ReluUnitRecord>& records,
                         const Eigen::MatrixXd& probes, double delta_scale, double psi) {
  if (records.empty()) return;
  Eigen::MatrixXd unit_grads(static_cast<Eigen::Index>(records.size()), probes.rows());
  for (std::size_t k = 0; k < records.size(); ++k) unit_grads.row(k) = records[k].grad_y.transpose();
  const Eigen::MatrixXd shifts = unit_grads * probes;
  cov.precondition_checks += shifts.size();
  cov.precondition_violations += (shifts.array().abs() * delta_scale >= psi).count();
}

void tally_coverage(VariationCoverage& cov) {
  for (Eigen::Index i = 0; i < cov.v.size(); ++i) {
    if (cov.bound[i] > 0.0) {
      ++cov.coordinates;
      if (cov.v[i] <= cov.bound[i]) ++cov.within_bound;
    } else {
      ++cov.decoupled;
      cov.decoupled_max_v = std::max(cov.decoupled_max_v, cov.v[i]);
    }
  }
  cov.fraction_within =
      cov.coordinates ? static_cast<double>(cov.within_bound) / static_cast<double>(cov.coordinates)
                      : 1.0;
}

void place_preactivations(UniformGlassNetwork& net, Rng& rng) {
  std::uniform_real_distribution<double> uniform(-net.spread * net.psi, net.spread * net.psi);
  const int inputs = net.spec.input_width();
  const int hidden = net.spec.layer_widths[1];
  const Eigen::Index w_off = net.spec.layer_offset(0);
  const Eigen::Index b_off = w_off + static_cast<Eigen::Index>(inputs) * hidden;
  for (int k = 0; k < hidden; ++k) {
    double wx = 0.0;
    for (int a = 0; a < inputs; ++a) wx += net.params[w_off + k * inputs + a] * net.batch.inputs(0, a);
    net.params[b_off + k] = uniform(rng) - wx;
  }
  // Residual of one so that dL/dz is order one and independent of the draw.
  const Eigen::MatrixXd out = forward(net.spec, net.params, net.batch.inputs);
  net.batch.targets = out.array() - 1.0;
}

}  // namespace

VariationCoverage mc_variation(const ModelSpec& spec, const ParamVector& params, const Batch& batch,
                               const GlassDensityMatrix& density,
                               const std::vector<ReluUnitRecord>& records, double delta_scale,
                               int n_samples, std::uint64_t seed) {
  const Eigen::Index d = params.size();
  if (density.R.rows() != d || density.R.cols() != d)
    throw DimensionError("mc_variation: density matrix does not match the parameters");
  if (n_samples < 1) throw ConfigError("mc_variation needs at least one sample");

  VariationCoverage cov;
  cov.bound = density.R * Eigen::VectorXd::Constant(d, delta_scale);
  cov.v = Eigen::VectorXd::Zero(d);

  ParamVector g0(d), g(d), theta(d);
  gradient_into(spec, params, batch, g0);
  constexpr int kBlock = 256;
  Eigen::MatrixXd probes(d, kBlock);
  for (int start = 0; start < n_samples; start += kBlock) {
    const int block = std::min(kBlock, n_samples - start);
    for (int b = 0; b < block; ++b) {
      Rng rng = make_rng(seed, static_cast<std::uint64_t>(start + b));
      fill_rademacher(rng, probes.col(b));
    }
    count_preconditions(cov, records, probes.leftCols(block), delta_scale, density.psi);
    for (int b = 0; b < block; ++b) {
      theta = params + delta_scale * probes.col(b);
      gradient_into(spec, theta, batch, g);
      cov.v.array() += (g - g0).array().square();
    }
  }
  cov.v /= static_cast<double>(n_samples);
  tally_coverage(cov);
  return cov;
}

VariationCoverage mc_variation_ensemble(const UniformGlassNetwork& net,
                                        const GlassDensityMatrix& mean_density,
                                        const std::vector<ReluUnitRecord>& records,
                                        double delta_scale, int n_samples, std::uint64_t seed) {
  const Eigen::Index d = net.params.size();
  if (mean_density.R.rows() != d || mean_density.R.cols() != d)
    throw DimensionError("mc_variation_ensemble: density matrix does not match the parameters");
  if (n_samples < 1) throw ConfigError("mc_variation_ensemble needs at least one sample");

  VariationCoverage cov;
  cov.bound = mean_density.R * Eigen::VectorXd::Constant(d, delta_scale);
  cov.v = Eigen::VectorXd::Zero(d);

  UniformGlassNetwork draw = net;
  ParamVector g0(d), g(d), theta(d);
  constexpr int kBlock = 256;
  Eigen::MatrixXd probes(d, kBlock);
  for (int start = 0; start < n_samples; start += kBlock) {
    const int block = std::min(kBlock, n_samples - start);
    for (int b = 0; b < block; ++b) {
      Rng rng = make_rng(seed, 2 * static_cast<std::uint64_t>(start + b));
      fill_rademacher(rng, probes.col(b));
    }
    count_preconditions(cov, records, probes.leftCols(block), delta_scale, mean_density.psi);
    for (int b = 0; b < block; ++b) {
      Rng rng = make_rng(seed, 2 * static_cast<std::uint64_t>(start + b) + 1);
      place_preactivations(draw, rng);
      gradient_into(draw.spec, draw.params, draw.batch, g0);
      theta = draw.params + delta_scale * probes.col(b);
      gradient_into(draw.spec, theta, draw.batch, g);
      cov.v.array() += (g - g0).array().square();
    }
  }
  cov.v /= static_cast<double>(n_samples);
  tally_coverage(cov);
  return cov;
}

GlassDensityMatrix window_averaged_density(const UniformGlassNetwork& net) {
  const auto all_units = relu_introspect(net.spec, net.params, net.batch,
                                         std::numeric_limits<double>::infinity());
  GlassDensityMatrix mean = density_matrix(all_units, net.psi, net.params.size());
  mean.R /= net.spread;
  return mean;
}

UniformGlassNetwork make_uniform_glass_network(int inputs, int hidden, double psi, double spread,
                                               std::uint64_t seed) {
  if (!(psi > 0.0) || !(spread >= 1.0))
    throw ConfigError("make_uniform_glass_network: need psi > 0 and spread >= 1");
  UniformGlassNetwork net;
  net.psi = psi;
  net.spread = spread;
  net.spec = ModelSpec{{inputs, hidden, 1}, LossKind::MeanSquaredError};
  net.params = build_model(net.spec, seed);
  Rng rng = make_rng(seed, 0x676c61);
  std::normal_distribution<double> normal(0.0, 1.0);
  net.batch.inputs.resize(1, inputs);
  for (int a = 0; a < inputs; ++a) net.batch.inputs(0, a) = normal(rng);
  // Output weights of fixed magnitude keep every unit's glass term well
  // above the smooth curvature of order delta^2.
  const Eigen::Index out_off = net.spec.layer_offset(1);
  for (int k = 0; k < hidden; ++k)
    net.params[out_off + k] = rademacher(rng) / std::sqrt(static_cast<double>(hidden));
  place_preactivations(net, rng);
  return net;
}

LeastSquaresScenario underdetermined_ls(std::uint64_t seed, int rows, int cols, double damping,
                                        bool zero_rhs) {
  Rng rng = make_rng(seed, 0x6c73);
  std::normal_distribution<double> normal(0.0, 1.0);
  Eigen::MatrixXd A(rows, cols);
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < cols; ++j) A(i, j) = normal(rng);
  Eigen::VectorXd b(rows);
  for (int i = 0; i < rows; ++i) b[i] = zero_rhs ? 0.0 : normal(rng);

  const auto loss_at = [&](const Eigen::VectorXd& x) { return 0.5 * (A * x - b).squaredNorm(); };
  const Eigen::VectorXd x0 = Eigen::VectorXd::Zero(cols);
  const Eigen::VectorXd g = A.transpose() * (A * x0 - b);
  const Eigen::VectorXd h = A.colwise().squaredNorm().transpose();
  const Eigen::VectorXd step = -(g.array() / h.array()).matrix();

  LeastSquaresScenario s;
  s.loss_initial = loss_at(x0);
  s.loss_full_step = loss_at(x0 + step);
  s.loss_damped_step = loss_at(x0 + damping * step);
  s.norm_full_step = step.norm();
  s.norm_damped_step = damping * step.norm();
  const Eigen::VectorXd x_min = A.transpose() * (A * A.transpose()).ldlt().solve(b);
  s.min_norm_solution = x_min.norm();
  return s;
}

Eigen::VectorXd quadratic_powerlaw_oracle(const Eigen::MatrixXd& H, double lambda) {
  return lambda * lambda * H.rowwise().squaredNorm();
}

double golden_section_minimize(const std::function<double(double)>& f, double lo, double hi,
                               double rel_tol, int max_iter) {
  const double inv_phi = (std::sqrt(5.0) - 1.0) / 2.0;
  double a = lo, b = hi;
  double c = b - inv_phi * (b - a);
  double d = a + inv_phi * (b - a);
  double fc = f(c), fd = f(d);
  for (int it = 0; it < max_iter && (b - a) > rel_tol * (std::abs(a) + std::abs(b)); ++it) {
    if (fc < fd) {
      b = d;
      d = c;
      fd = fc;
      c = b - inv_phi * (b - a);
      fc = f(c);
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + inv_phi * (b - a);
      fd = f(d);
    }
  }
  return 0.5 * (a + b);
}

double glass_step_argmin(double g, double h, double rho) {
  if (h < 0.0 || rho < 0.0) throw ConfigError("glass_step_argmin: h and rho must be >= 0");
  const double mag = std::abs(g);
  if (mag == 0.0) return 0.0;
  const double cubic = std::sqrt(2.0 * rho / (3.0 * std::numbers::pi));
  if (h == 0.0 && cubic == 0.0) throw ConfigError("glass_step_argmin: objective is unbounded");

  // Along the descent direction x = -sign(g) t the objective is convex in t.
  double hi = std::numeric_limits<double>::infinity();
  if (h > 0.0) hi = mag / h;
  if (cubic > 0.0) hi = std::min(hi, std::pow(mag / (1.5 * cubic), 2.0));
  const auto f = [&](double t) { return t * (-mag + 0.5 * h * t + cubic * std::sqrt(t)); };
  const double t = golden_section_minimize(f, 0.0, hi);
  return g > 0.0 ? -t : t;
}

DenseGlassField::DenseGlassField(int dim, int planes, double offset_spread, std::uint64_t seed)
    : dim_(dim), normals_(planes, dim), offsets_(planes), jumps_(planes, dim) {
  Rng rng = make_rng(seed, 0x66656c64);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (int k = 0; k < planes; ++k) {
    for (int i = 0; i < dim; ++i) normals_(k, i) = normal(rng);
    normals_.row(k).normalize();
    for (int i = 0; i < dim; ++i) jumps_(k, i) = normal(rng);
    // Stratified offsets keep the crossing count proportional to distance.
    offsets_[k] = offset_spread * (2.0 * (k + unit(rng)) / planes - 1.0);
  }
}

void DenseGlassField::gradient(const ParamVector& theta, ParamVector& out) const {
  const Eigen::VectorXd proj = normals_ * theta;
  const Eigen::VectorXd active = (proj.array() > offsets_.array()).cast<double>().matrix();
  out.noalias() = jumps_.transpose() * active;
}

GradientOracle DenseGlassField::oracle() const {
  return [this](const ParamVector& theta, ParamVector& out) { gradient(theta, out); };
}

}  // namespace alice
