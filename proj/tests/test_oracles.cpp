#include <cmath>
#include <limits>
#include <numbers>
#include <sstream>

#include "alice/glass.hpp"
#include "alice/optimizer.hpp"
#include "alice/oracles.hpp"
#include "alice/random.hpp"
#include "doctest.h"

using namespace alice;

namespace {

SyntheticGlass1D walk(double rho, long long trials, KickDistribution kicks) {
  SyntheticGlass1D sim;
  sim.rho = rho;
  sim.lambda = 1.0;
  sim.n = 200;
  sim.trials = trials;
  sim.seed = 3;
  sim.kicks = kicks;
  return sim;
}

}  // namespace

TEST_CASE("glass walk without glass stays put") {
  const GlassWalkResult r = glass_walk_expectation(walk(0.0, 100, KickDistribution::Gaussian));
  CHECK(r.mean_abs == 0.0);
  CHECK(r.variance == 0.0);
  CHECK(r.predicted_mean_abs == 0.0);
}

TEST_CASE("glass walk matches its predictions") {
  for (KickDistribution k : {KickDistribution::Gaussian, KickDistribution::Rademacher}) {
    const GlassWalkResult r = glass_walk_expectation(walk(2.0, 40000, k));
    CHECK(r.predicted_mean_abs == doctest::Approx(std::sqrt(4.0 / (3.0 * std::numbers::pi))).epsilon(1e-15));
    CHECK(r.predicted_variance == doctest::Approx(2.0 / 3.0).epsilon(1e-15));
    // The discrete sum falls short of the continuum value by O(1/n).
    CHECK(std::abs(r.mean_abs - r.predicted_mean_abs) <= 4.0 * r.mean_abs_se + 0.01 * r.predicted_mean_abs);
    CHECK(std::abs(r.variance - r.predicted_variance) <= 4.0 * r.variance_se + 0.01 * r.predicted_variance);
  }
}

TEST_CASE("glass walk standard error halves with four times the trials") {
  const GlassWalkResult a = glass_walk_expectation(walk(1.0, 5000, KickDistribution::Gaussian));
  const GlassWalkResult b = glass_walk_expectation(walk(1.0, 20000, KickDistribution::Gaussian));
  CHECK(a.mean_abs_se / b.mean_abs_se == doctest::Approx(2.0).epsilon(0.1));
}

TEST_CASE("glass walk is deterministic and validated") {
  const auto sim = walk(1.0, 5000, KickDistribution::Rademacher);
  CHECK(glass_walk_expectation(sim).mean_abs == glass_walk_expectation(sim).mean_abs);
  auto bad = sim;
  bad.rho = -1.0;
  CHECK_THROWS_AS(glass_walk_expectation(bad), ConfigError);
  bad = sim;
  bad.lambda = 0.0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = sim;
  bad.n = 0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
}

TEST_CASE("test matrices") {
  const TestMatrix m = TestMatrix::random_dominant(20, 4, 0.2, 0.8);
  for (int i = 0; i < 20; ++i) {
    CHECK(std::abs(m.M(i, i)) >= 1.0);
    CHECK(std::abs(m.M(i, i)) <= 2.0);
    CHECK(m.omega2[i] >= 0.2 - 1e-12);
    CHECK(m.omega2[i] <= 0.8 + 1e-12);
    const double off = m.M.row(i).squaredNorm() - m.M(i, i) * m.M(i, i);
    CHECK(m.omega2[i] == doctest::Approx(off / (m.M(i, i) * m.M(i, i))).epsilon(1e-12));
  }
  CHECK_THROWS_AS(TestMatrix::from(Eigen::MatrixXd::Zero(2, 3)), DimensionError);
}

TEST_CASE("Rademacher estimator recovers a diagonal matrix exactly") {
  Eigen::VectorXd diag = Eigen::VectorXd::LinSpaced(6, 1.0, 2.0);
  const TestMatrix m = TestMatrix::from(diag.asDiagonal());
  const KernelSpec k = make_kernel(ProbeDensity::Rademacher, 0.0);
  const EstimatorStats s = mc_estimator(m, std::span<const KernelSpec>(&k, 1), 200, 1);
  CHECK((s.mean - diag).norm() < 1e-14);
  CHECK(s.variance.maxCoeff() < 1e-12);
}

TEST_CASE("Rademacher beats the normal density and the estimator is unbiased") {
  const TestMatrix m = TestMatrix::random_dominant(30, 5);
  const EstimatorStats rad = mc_identity_estimator(m, ProbeDensity::Rademacher, 20000, 2);
  const EstimatorStats nor = mc_identity_estimator(m, ProbeDensity::StandardNormal, 20000, 2);
  CHECK(rad.variance.sum() < nor.variance.sum());
  CHECK(std::abs(rad.trace_bias) <= 4.0 * rad.trace_std_error);
  CHECK(std::abs(nor.trace_bias) <= 4.0 * nor.trace_std_error);
  for (int i = 0; i < 30; ++i) {
    // For Rademacher the per-coordinate variance is the off-diagonal row mass.
    const double expected = m.omega2[i] * m.M(i, i) * m.M(i, i);
    CHECK(rad.variance[i] == doctest::Approx(expected).epsilon(0.1));
  }
}

TEST_CASE("restricted normal updates have lower effective variance") {
  const TestMatrix m = TestMatrix::from(Eigen::MatrixXd::Constant(8, 8, 1.0 / std::sqrt(7.0)) +
                                        (1.0 - 1.0 / std::sqrt(7.0)) * Eigen::MatrixXd::Identity(8, 8));
  const KernelSpec full = make_kernel(ProbeDensity::StandardNormal, 1.0);
  const KernelSpec restricted = make_kernel(ProbeDensity::StandardNormal, 1.0, 1.0);
  const EstimatorStats a = mc_estimator(m, std::span<const KernelSpec>(&full, 1), 40000, 3);
  const EstimatorStats b = mc_estimator(m, std::span<const KernelSpec>(&restricted, 1), 40000, 3);
  const double eff_full = a.variance.sum();
  const double eff_restricted = (b.variance.array() * (double)b.n_samples / b.accepted.array()).sum();
  CHECK(eff_restricted < eff_full);
  CHECK(b.accepted.mean() / b.n_samples == doctest::Approx(0.3173).epsilon(0.03));
  CHECK(std::abs(a.mean[0] - 1.0) <= 4.0 * a.std_error[0]);
  CHECK(std::abs(b.mean[0] - 1.0) <= 4.0 * b.std_error[0]);
}

TEST_CASE("estimator input validation") {
  const TestMatrix m = TestMatrix::random_dominant(4, 1);
  const KernelSpec k = make_kernel(ProbeDensity::Rademacher, 0.5);
  CHECK_THROWS_AS(mc_estimator(m, std::span<const KernelSpec>(&k, 1), 1, 1), ConfigError);
  const std::vector<KernelSpec> three(3, k);
  CHECK_THROWS_AS(mc_estimator(m, three, 10, 1), DimensionError);
  const std::vector<KernelSpec> mixed = {k, k, k, make_kernel(ProbeDensity::StandardNormal, 0.5)};
  CHECK_THROWS_AS(mc_estimator(m, mixed, 10, 1), ConfigError);
}

TEST_CASE("zero perturbation gives zero variation") {
  const UniformGlassNetwork net = make_uniform_glass_network(4, 16, 0.05, 2.0, 1);
  const auto recs = relu_introspect(net.spec, net.params, net.batch, net.psi);
  const GlassDensityMatrix R = density_matrix(recs, net.psi, net.params.size());
  const VariationCoverage c = mc_variation(net.spec, net.params, net.batch, R, recs, 0.0, 10, 1);
  CHECK(c.v.isZero(0.0));
  CHECK(c.bound.isZero(0.0));
}

TEST_CASE("uniform glass network places pre-activations in the window") {
  const UniformGlassNetwork net = make_uniform_glass_network(8, 64, 0.1, 3.0, 2);
  const Eigen::MatrixXd y = hidden_preactivations(net.spec, net.params, net.batch.inputs, 0);
  CHECK(y.cwiseAbs().maxCoeff() <= 0.3 + 1e-12);
  const Eigen::MatrixXd out = forward(net.spec, net.params, net.batch.inputs);
  CHECK((out - net.batch.targets).isApproxToConstant(1.0, 1e-12));
  CHECK_THROWS_AS(make_uniform_glass_network(8, 64, 0.0, 3.0, 2), ConfigError);
  CHECK_THROWS_AS(make_uniform_glass_network(8, 64, 0.1, 0.5, 2), ConfigError);
}

TEST_CASE("ensemble variations respect the bound at small scale and break it at large scale") {
  const UniformGlassNetwork net = make_uniform_glass_network(8, 32, 0.05, 4.0, 3);
  const auto all = relu_introspect(net.spec, net.params, net.batch, std::numeric_limits<double>::infinity());
  const GlassDensityMatrix R = window_averaged_density(net);
  const VariationCoverage small = mc_variation_ensemble(net, R, all, 1e-3, 4000, 5);
  CHECK(small.coordinates > 0);
  CHECK(small.fraction_within >= 0.99);
  CHECK(small.precondition_violations == 0);
  const VariationCoverage large = mc_variation_ensemble(net, R, all, 1.0, 500, 5);
  CHECK(large.fraction_within <= 0.5);
  CHECK(large.precondition_violations > 0);
}

TEST_CASE("underdetermined least squares") {
  const LeastSquaresScenario zero = underdetermined_ls(1, 10, 100, 0.1, true);
  CHECK(zero.loss_initial == 0.0);
  CHECK(zero.loss_full_step == 0.0);
  CHECK(zero.norm_full_step == 0.0);
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const LeastSquaresScenario s = underdetermined_ls(seed);
    CHECK(s.loss_full_step > s.loss_initial);
    CHECK(s.loss_damped_step < s.loss_initial);
    CHECK(s.norm_full_step > s.min_norm_solution);
  }
}

TEST_CASE("quadratic power-law oracle") {
  CHECK(quadratic_powerlaw_oracle(Eigen::MatrixXd::Identity(3, 3), 0.5) == Eigen::VectorXd::Constant(3, 0.25));
  CHECK(quadratic_powerlaw_oracle(Eigen::MatrixXd::Zero(3, 3), 0.5).isZero(0.0));
  Rng rng = make_rng(6);
  Eigen::MatrixXd H(20, 20);
  for (int i = 0; i < 400; ++i) H.data()[i] = std::normal_distribution<double>()(rng);
  const GradientOracle oracle = [&H](const ParamVector& t, ParamVector& g) { g = H * t; };
  const double lambda = 0.1;
  const int n = 3000;
  const auto m = measure_variations(oracle, ParamVector::Zero(20), lambda, n, 9);
  const Eigen::VectorXd v = quadratic_powerlaw_oracle(H, lambda);
  for (int i = 0; i < 20; ++i) {
    const double s2 = H.row(i).squaredNorm(), s4 = H.row(i).array().pow(4).sum();
    const double se = std::sqrt(2.0 * std::pow(lambda, 4) * (s2 * s2 - s4) / n);
    CHECK(std::abs(m.v[i] - v[i]) <= 3.5 * se);
  }
}

TEST_CASE("golden-section search") {
  CHECK(golden_section_minimize([](double x) { return (x - 2.0) * (x - 2.0); }, 0.0, 5.0) ==
        doctest::Approx(2.0).epsilon(1e-10));
  CHECK(golden_section_minimize([](double x) { return std::abs(x + 1.5); }, -4.0, 4.0) ==
        doctest::Approx(-1.5).epsilon(1e-10));
}

TEST_CASE("glass step argmin agrees with the modified Hessian step") {
  const double eps = 0.0;
  for (auto [g, h, rho] : {std::tuple{1.0, 2.0, 0.5}, {-0.3, 0.0, 1.0}, {2.0, 1.0, 0.0}, {-5.0, 0.1, 3.0}}) {
    const Eigen::VectorXd G = Eigen::VectorXd::Constant(1, g);
    const Eigen::VectorXd hhat = glass_term(Eigen::VectorXd::Constant(1, rho), G, eps);
    const double hbar = modified_hessian(hhat, Eigen::VectorXd::Constant(1, h), eps)[0];
    CHECK(glass_step_argmin(g, h, rho) == doctest::Approx(-g / hbar).epsilon(1e-6));
  }
  CHECK(glass_step_argmin(0.0, 1.0, 1.0) == 0.0);
  CHECK_THROWS_AS(glass_step_argmin(1.0, 0.0, 0.0), ConfigError);
  CHECK_THROWS_AS(glass_step_argmin(1.0, -1.0, 0.0), ConfigError);
}

TEST_CASE("dense glass field is piecewise constant with linear variations") {
  const DenseGlassField field(10, 2000, 1.0, 4);
  ParamVector a = ParamVector::Zero(10), ga(10), gb(10);
  field.gradient(a, ga);
  ParamVector b = a;
  b[0] += 1e-12;
  field.gradient(b, gb);
  CHECK(ga == gb);
  const auto m1 = measure_variations(field.oracle(), a, 0.01, 256, 2);
  const auto m2 = measure_variations(field.oracle(), a, 0.02, 256, 2);
  const double p = std::log2(m2.v.sum() / m1.v.sum());
  CHECK(p == doctest::Approx(1.0).epsilon(0.2));
}

TEST_CASE("oracle CSV") {
  std::ostringstream out;
  write_csv(out, std::vector<OracleRow>{{"q", 1.5, 2.0, 0.1, 10}});
  CHECK(out.str() == "quantity,empirical,predicted,std_error,n\nq,1.5,2,0.1,10\n");
}
