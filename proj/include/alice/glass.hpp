#ifndef ALICE_GLASS_HPP
#define ALICE_GLASS_HPP

// Glass density of gradient discontinuities, the expected-loss bound it
// implies, and the minimum-variance diagonal estimator used to measure it.

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "alice/netkit.hpp"

namespace alice {

/// Gradient variation per unit parameter distance. R is generally not
/// symmetric.
struct GlassDensityMatrix {
  Eigen::MatrixXd R;
  double psi = 0.0;
};

struct GlassDensityDiag {
  Eigen::VectorXd rho;
};

/// R_ij = 1/(2 psi) * sum_k grad_y_i^2 (dL/dz)^2 |grad_y_j|, summed over the
/// records in unit-id order so the result does not depend on input order.
/// An empty record list gives an empty (0 x 0) matrix unless `dim` is set.
GlassDensityMatrix density_matrix(const std::vector<ReluUnitRecord>& records, double psi,
                                  std::optional<Eigen::Index> dim = std::nullopt);

GlassDensityDiag density_diag(const GlassDensityMatrix& density);

/// R |delta|.
Eigen::VectorXd variation_bound(const GlassDensityMatrix& density, const ParamVector& delta);

struct LossIncreaseBound {
  /// sqrt(2/(3 pi) rho_i |delta_i|^3) per coordinate.
  Eigen::VectorXd per_coordinate;
  /// Sum of the per-coordinate bounds. This is the form the modified
  /// quasi-Newton step minimizes coordinate by coordinate.
  double coordinate_sum = 0.0;
  /// sqrt(2/(3 pi) sum_i rho_i |delta_i|^3), for reporting.
  double aggregate = 0.0;
};

/// Upper bound on the expected loss increase for a displacement `delta`.
/// Throws ConfigError on a negative density.
LossIncreaseBound loss_increase_bound(const GlassDensityDiag& density, const ParamVector& delta);

enum class ProbeDensity { Rademacher, StandardNormal };

std::string to_string(ProbeDensity density);
ProbeDensity probe_density_from_string(const std::string& name);

/// Optimal diagonal-estimator kernel for one coordinate. Build with
/// make_kernel so that `c` is consistent with the other fields.
struct KernelSpec {
  ProbeDensity density = ProbeDensity::Rademacher;
  double omega2 = 0.0;            // off-diagonal scale of the row
  double restrict_threshold = 0;  // reject samples with |delta_i| below this; 0 = never
  double c = 1.0;                 // normalization constant
  double inv_c = 1.0;             // 1/c, exact for Rademacher
  double update_probability = 1.0;
};

/// c = E_r[delta^2 / (delta^2 + omega2)] where r is the probe density,
/// renormalized to |delta| >= restriction when restricted. The normal
/// density is integrated by adaptive Simpson quadrature on [-8, 8].
double kernel_constant(ProbeDensity density, double omega2, double restriction = 0.0);

/// Probability that a probe coordinate passes the restriction.
double update_probability(ProbeDensity density, double restriction);

KernelSpec make_kernel(ProbeDensity density, double omega2, double restriction = 0.0);

/// kappa*(delta) = delta / (c (delta^2 + omega2)), or 0 for a rejected sample.
double optimal_kernel_weight(double delta, const KernelSpec& kernel);

struct EstimatorVariance {
  double single_sample = 0.0;       // m^2 (1/c - 1), per accepted sample
  double update_probability = 1.0;
  double effective = 0.0;           // single_sample / update_probability
};

EstimatorVariance estimator_variance(const KernelSpec& kernel, double diagonal);

struct GradientVariationMeasurement {
  double lambda = 0.0;
  Eigen::VectorXd v;
  int n_samples = 0;
};

/// v = mean over Rademacher draws of (g(mu + lambda delta) - g(mu))^2.
/// Probe k draws from stream (seed, k), so measurements at different
/// lambdas with the same seed share their perturbation directions.
GradientVariationMeasurement measure_variations(const GradientOracle& grad, const ParamVector& mu,
                                                double lambda, int n_samples, std::uint64_t seed);

struct Partition {
  std::string name;
  std::vector<Eigen::Index> indices;
};

struct PowerLawRow {
  std::string partition;
  double sum_v_lambda = 0.0;
  double sum_v_2lambda = 0.0;
  double p = 0.0;
  bool defined = false;  // false when either sum is zero
};

struct PowerLawReport {
  double lambda = 0.0;
  std::vector<PowerLawRow> rows;

  const PowerLawRow& row(const std::string& name) const;
};

/// p(P) = log2 sum_P v(2 lambda) - log2 sum_P v(lambda) per partition.
/// Throws ConfigError if partitions overlap or index out of range.
PowerLawReport power_law(const GradientVariationMeasurement& at_lambda,
                         const GradientVariationMeasurement& at_2lambda,
                         const std::vector<Partition>& partitions);

/// One partition per layer of `spec` (weights and biases together).
std::vector<Partition> layer_partitions(const ModelSpec& spec);

void write_csv(std::ostream& out, const PowerLawReport& report);
void write_csv(std::ostream& out, const GradientVariationMeasurement& measurement);

}  // namespace alice

#endif
