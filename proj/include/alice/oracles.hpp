#ifndef ALICE_ORACLES_HPP
#define ALICE_ORACLES_HPP

// Brute-force and Monte-Carlo checks built from first principles. Nothing
// here calls into the code it is meant to validate, with the exception of
// mc_variation, whose job is to compare a density matrix handed to it
// against sampled gradients.

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "alice/glass.hpp"
#include "alice/netkit.hpp"

namespace alice {

/// One line of an oracle report.
struct OracleRow {
  std::string quantity;
  double empirical = 0.0;
  double predicted = 0.0;
  double std_error = 0.0;
  long long n = 0;
};

void write_csv(std::ostream& out, const std::vector<OracleRow>& rows);

enum class KickDistribution { Gaussian, Rademacher };

struct SyntheticGlass1D {
  double rho = 1.0;
  double lambda = 1.0;
  int n = 1000;          // discontinuities along the path
  long long trials = 100000;
  std::uint64_t seed = 0;
  KickDistribution kicks = KickDistribution::Gaussian;

  void validate() const;
};

struct GlassWalkResult {
  double mean_abs = 0.0;            // E|Delta|, the reflected (floored) loss change
  double mean_abs_se = 0.0;
  double predicted_mean_abs = 0.0;  // sqrt(2 rho lambda^3 / (3 pi))
  double variance = 0.0;            // Var[Delta] of the unreflected walk
  double variance_se = 0.0;
  double predicted_variance = 0.0;  // rho lambda^3 / 3
  long long trials = 0;
};

/// Loss change Delta = sum_j ((n - j)/n) gamma_j lambda along a path crossing
/// n equally spaced discontinuities with E[gamma^2] = rho lambda / n.
GlassWalkResult glass_walk_expectation(const SyntheticGlass1D& sim);

/// Square matrix with per-row off-diagonal scale
/// omega2_i = sum_{j != i} M_ij^2 / M_ii^2.
struct TestMatrix {
  Eigen::MatrixXd M;
  Eigen::VectorXd omega2;

  static TestMatrix from(Eigen::MatrixXd m);
  /// Random matrix with |M_ii| in [1, 2] and omega2_i uniform in
  /// [omega2_lo, omega2_hi] (diagonally dominant when omega2_hi <= 1).
  static TestMatrix random_dominant(int d, std::uint64_t seed, double omega2_lo = 0.1,
                                   double omega2_hi = 1.0);
};

struct EstimatorStats {
  Eigen::VectorXd mean;       // estimate of diag(M) from accepted samples
  Eigen::VectorXd bias;       // mean - diag(M)
  Eigen::VectorXd variance;   // single-sample variance among accepted samples
  Eigen::VectorXd std_error;  // of the mean
  Eigen::VectorXd accepted;   // accepted sample count per coordinate
  long long n_samples = 0;
  // Pooled over coordinates: the per-sample trace estimate sum_i kappa_i y_i.
  double trace_bias = 0.0;
  double trace_std_error = 0.0;
};

/// Samples delta from the probe density, forms y = M delta, and averages
/// kappa_i(delta_i) y_i for every coordinate. The kernel is implemented
/// directly from its formula; `kernels` holds one entry per row or a single
/// shared entry.
EstimatorStats mc_estimator(const TestMatrix& matrix, std::span<const KernelSpec> kernels,
                            long long n_samples, std::uint64_t seed);

/// Identity kernel kappa(delta) = delta, valid for any unit-variance density.
EstimatorStats mc_identity_estimator(const TestMatrix& matrix, ProbeDensity density,
                                     long long n_samples, std::uint64_t seed);

struct VariationCoverage {
  long long coordinates = 0;        // coordinates with a positive bound
  long long within_bound = 0;
  double fraction_within = 0.0;
  long long decoupled = 0;          // coordinates whose bound is exactly zero
  double decoupled_max_v = 0.0;
  long long precondition_violations = 0;  // (unit, probe) pairs with |delta^T grad_y| >= psi
  long long precondition_checks = 0;
  Eigen::VectorXd v;                // empirical variations
  Eigen::VectorXd bound;            // R |delta|
};

/// Compares Rademacher-probe gradient variations v(delta) at scale
/// `delta_scale` against R |delta| coordinate by coordinate. Coordinates with
/// a zero bound row are not driven by any near-threshold unit; they are
/// reported separately.
VariationCoverage mc_variation(const ModelSpec& spec, const ParamVector& params, const Batch& batch,
                               const GlassDensityMatrix& density,
                               const std::vector<ReluUnitRecord>& records, double delta_scale,
                               int n_samples, std::uint64_t seed);

/// Single-sample network whose hidden pre-activations are uniform on
/// [-spread psi, spread psi] by construction (biases set from a seeded draw).
struct UniformGlassNetwork {
  ModelSpec spec;
  ParamVector params;
  Batch batch;
  double psi = 0.0;
  double spread = 1.0;  // pre-activations are uniform on [-spread psi, spread psi]
};

UniformGlassNetwork make_uniform_glass_network(int inputs, int hidden, double psi, double spread,
                                               std::uint64_t seed);

/// Expected density over the uniform placement: every unit contributes with
/// its window probability 1/spread. Neither the unit gradients nor dL/dz
/// depend on the placement, so this is exact.
GlassDensityMatrix window_averaged_density(const UniformGlassNetwork& net);

/// Like mc_variation, but every sample redraws the hidden pre-activations,
/// so v is the expectation over placements that the bound refers to.
/// `records` supply the unit gradients for the precondition count.
VariationCoverage mc_variation_ensemble(const UniformGlassNetwork& net,
                                        const GlassDensityMatrix& mean_density,
                                        const std::vector<ReluUnitRecord>& records,
                                        double delta_scale, int n_samples, std::uint64_t seed);

struct LeastSquaresScenario {
  double loss_initial = 0.0;
  double loss_full_step = 0.0;
  double loss_damped_step = 0.0;
  double norm_full_step = 0.0;
  double norm_damped_step = 0.0;
  double min_norm_solution = 0.0;
};

/// L(x) = 0.5 |Ax - b|^2 with A in R^{rows x cols}, from x = 0: one diagonal
/// quasi-Newton step -g/diag(A^T A), the same step scaled by `damping`, and
/// the minimum-norm solution. `zero_rhs` forces b = 0.
LeastSquaresScenario underdetermined_ls(std::uint64_t seed, int rows = 10, int cols = 100,
                                        double damping = 0.1, bool zero_rhs = false);

/// v_i(lambda) = lambda^2 sum_j H_ij^2 for g = H theta and Rademacher probes.
Eigen::VectorXd quadratic_powerlaw_oracle(const Eigen::MatrixXd& H, double lambda);

/// Golden-section minimum of a unimodal function on [lo, hi].
double golden_section_minimize(const std::function<double(double)>& f, double lo, double hi,
                               double rel_tol = 1e-13, int max_iter = 400);

/// Minimizer of g x + h x^2 / 2 + sqrt(2 rho / (3 pi)) |x|^{3/2} found by
/// golden-section search.
double glass_step_argmin(double g, double h, double rho);

/// Piecewise-constant gradient field: a sum of fixed random jump vectors,
/// each switched on when theta crosses its hyperplane. Gradient variations
/// grow linearly with the probe distance.
class DenseGlassField {
 public:
  DenseGlassField(int dim, int planes, double offset_spread, std::uint64_t seed);
  void gradient(const ParamVector& theta, ParamVector& out) const;
  GradientOracle oracle() const;
  int dim() const { return dim_; }

 private:
  int dim_;
  Eigen::MatrixXd normals_;  // planes x dim, unit rows
  Eigen::VectorXd offsets_;
  Eigen::MatrixXd jumps_;    // planes x dim
};

}  // namespace alice

#endif
