#ifndef ALICE_OPTIMIZER_HPP
#define ALICE_OPTIMIZER_HPP

// The Alice optimizer: running topography estimates from three gradient
// evaluations per full step, a glass-modified diagonal quasi-Newton step,
// Nesterov-style split between the actual position (mu) and the gradient
// evaluation center (nu), and step bounds that reproduce SGD-M or Adam.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "alice/netkit.hpp"

namespace alice {

enum class LimitMethod { Fixed, Sgdm, Adam };

std::string to_string(LimitMethod method);
LimitMethod limit_method_from_string(const std::string& name);

/// Curvature terms that enter the modified Hessian.
struct CurvatureTerms {
  bool rho = true;
  bool h_abs = true;
  bool h_rms = false;

  bool operator==(const CurvatureTerms&) const = default;
};

std::string to_string(const CurvatureTerms& terms);
/// Parses "rho", "h_abs", "rho+h_abs", "h_rms", ... ("none" for no terms).
CurvatureTerms curvature_terms_from_string(const std::string& text);

struct AliceConfig {
  double lambda = 0.002;  // probe distance
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double phi = 0.1;    // fraction of the step applied to mu
  double omega = 1.0;  // fraction of the step applied to nu
  double lambda_min = 0.0;
  double lambda_max = 0.002;
  LimitMethod limit_method = LimitMethod::Adam;
  int quick_steps = 0;
  CurvatureTerms terms;
  bool naq = false;  // when set, phi and omega come from naq_coefficients(beta1)

  /// phi/omega after applying `naq`.
  AliceConfig resolved() const;
  /// Throws ConfigError when a hyperparameter is out of range.
  void validate() const;

  bool operator==(const AliceConfig&) const = default;
};

/// The optimizer's memory. Running averages start at zero and nu = mu.
struct TopographyState {
  Eigen::VectorXd g;
  Eigen::VectorXd rho;
  Eigen::VectorXd h_abs;
  Eigen::VectorXd h_rms2;
  Eigen::VectorXd s;
  long long step_count = 0;
  ParamVector mu;
  ParamVector nu;

  static TopographyState initial(const ParamVector& params);
  Eigen::Index size() const { return mu.size(); }
};

/// Buffers owned by the caller of topography_update: the parameter vector
/// handed to the gradient oracle and the oracle's output.
struct EvaluationBuffers {
  ParamVector theta;
  ParamVector grad;

  explicit EvaluationBuffers(Eigen::Index d = 0) : theta(d), grad(d) {}
};

/// Full topography update: one Rademacher draw, gradients at nu + lambda t,
/// nu - lambda t and nu, then the g, h_abs, h_rms2, rho and s averages.
/// Uses a single parameter-length temporary besides `buffers`.
/// Throws NumericError naming the evaluation ("plus", "minus" or "center")
/// that produced a non-finite gradient.
void topography_update(TopographyState& state, const GradientOracle& grad, const AliceConfig& cfg,
                       std::uint64_t seed, EvaluationBuffers& buffers);

/// Quick update: one gradient at nu refreshing g and s only.
void quick_update(TopographyState& state, const GradientOracle& grad, const AliceConfig& cfg,
                  EvaluationBuffers& buffers);

/// hhat = 3 rho / (4 pi |g| + eps).
Eigen::VectorXd glass_term(const Eigen::VectorXd& rho, const Eigen::VectorXd& g, double eps);

/// hbar = hhat + h + sqrt(hhat (hhat + 2h)) + eps. Throws ConfigError on a
/// negative hhat or h.
Eigen::VectorXd modified_hessian(const Eigen::VectorXd& hhat, const Eigen::VectorXd& h, double eps);

/// |g| / hbar.
Eigen::VectorXd qn_scale(const Eigen::VectorXd& g, const Eigen::VectorXd& hbar);

struct StepLimits {
  Eigen::VectorXd lower;
  Eigen::VectorXd upper;
};

/// Bounds on the step magnitude. `g` and `s` are the averages the step uses;
/// in Adam mode the caller passes bias-corrected values.
StepLimits step_limits(LimitMethod method, const Eigen::VectorXd& g, const Eigen::VectorXd& s,
                       const AliceConfig& cfg);

struct StepRecord {
  Eigen::VectorXd delta;  // signed step before phi/omega scaling
  Eigen::VectorXd hhat;
  Eigen::VectorXd hbar;
  double clamp_lo = 0.0;  // share of coordinates raised to the lower bound
  double clamp_hi = 0.0;  // share lowered to the upper bound
  double interior = 0.0;
  bool full_update = true;
};

/// Clamps the scale into the limits, points it against `g`, then moves
/// nu to mu + omega delta and mu to mu + phi delta.
StepRecord apply_step(TopographyState& state, const Eigen::VectorXd& scale,
                      const StepLimits& limits, const Eigen::VectorXd& g, const AliceConfig& cfg);

struct NaqCoefficients {
  double phi = 1.0;
  double omega = 1.0;
};

NaqCoefficients naq_coefficients(double beta1);

/// The optimizer proper. Owns its state and evaluation buffers and counts
/// gradient evaluations. Steps cycle through one full update followed by
/// `quick_steps` quick updates.
class AliceOptimizer {
 public:
  AliceOptimizer(const ParamVector& params, AliceConfig cfg, std::uint64_t seed);

  /// Runs one optimizer step and returns its diagnostics.
  StepRecord step(const GradientOracle& grad);

  const TopographyState& state() const { return state_; }
  const AliceConfig& config() const { return cfg_; }
  const ParamVector& params() const { return state_.mu; }
  long long gradient_evaluations() const { return evaluations_; }

 private:
  AliceConfig cfg_;
  std::uint64_t seed_;
  TopographyState state_;
  EvaluationBuffers buffers_;
  long long evaluations_ = 0;
};

/// Textbook Adam with bias correction.
class AdamReference {
 public:
  AdamReference(ParamVector params, double lr, double beta1, double beta2, double eps);
  void step(const GradientOracle& grad);
  const ParamVector& params() const { return params_; }

 private:
  ParamVector params_, m_, v_, grad_;
  double lr_, beta1_, beta2_, eps_;
  long long t_ = 0;
};

/// SGD with momentum in the averaged form v <- b v + (1 - b) g, theta -= lr v.
class SgdmReference {
 public:
  SgdmReference(ParamVector params, double lr, double beta);
  void step(const GradientOracle& grad);
  const ParamVector& params() const { return params_; }

 private:
  ParamVector params_, v_, grad_;
  double lr_, beta_;
};

/// Parameter trajectories including the starting point (n_steps + 1 entries).
std::vector<ParamVector> reference_adam(const ParamVector& params, const GradientOracle& grad,
                                        double lr, double beta1, double beta2, double eps,
                                        int n_steps);
std::vector<ParamVector> reference_sgdm(const ParamVector& params, const GradientOracle& grad,
                                        double lr, double beta, int n_steps);

struct NaqStepResidual {
  int step = 0;
  double error_norm = 0.0;      // |g^(s) - g*(mu^(s))|
  double expected_norm = 0.0;   // |beta1^s gamma0|
  double residual = 0.0;        // |gamma^(s) - beta1^s gamma0|, relative when expected > 0
  double model_residual = 0.0;  // relative miss of g_model(mu^(s)) = beta1 g^(s-1)
};

struct NaqReport {
  std::vector<NaqStepResidual> steps;
  double max_residual = 0.0;
  double max_model_residual = 0.0;
  bool diverged = false;
};

/// Simulates the running-gradient update on a hidden linear gradient
/// g*(x) = g_star0 + H (x - mu0) with steps -g / hbar and reports how far the
/// running-gradient error departs from beta1^s gamma0. `phi`/`omega` default
/// to the NAQ coefficients.
NaqReport naq_exactness_check(const Eigen::MatrixXd& hidden_hessian, const Eigen::VectorXd& g_star0,
                              const Eigen::VectorXd& gamma0, double beta1,
                              const Eigen::VectorXd& hbar, int n_steps,
                              std::optional<NaqCoefficients> coefficients = std::nullopt);

}  // namespace alice

#endif
