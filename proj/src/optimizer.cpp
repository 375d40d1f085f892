#include "alice/optimizer.hpp"

#include <cmath>
#include <numbers>
#include <sstream>

#include "alice/random.hpp"

namespace alice {

namespace {

double sign(double x) { return static_cast<double>((x > 0.0) - (x < 0.0)); }

void require_finite(const ParamVector& grad, const char* which) {
  if (!grad.allFinite())
    throw NumericError(std::string("non-finite gradient at the ") + which + " evaluation", which);
}

void require_size(const TopographyState& state, const EvaluationBuffers& buffers) {
  const Eigen::Index d = state.size();
  if (state.nu.size() != d || state.g.size() != d || state.rho.size() != d ||
      state.h_abs.size() != d || state.h_rms2.size() != d || state.s.size() != d)
    throw DimensionError("topography state vectors differ in length");
  if (buffers.theta.size() != d || buffers.grad.size() != d)
    throw DimensionError("evaluation buffers do not match the state");
}

}  // namespace

std::string to_string(LimitMethod method) {
  switch (method) {
    case LimitMethod::Fixed: return "fixed";
    case LimitMethod::Sgdm: return "sgdm";
    case LimitMethod::Adam: return "adam";
  }
  return "unknown";
}

LimitMethod limit_method_from_string(const std::string& name) {
  if (name == "fixed") return LimitMethod::Fixed;
  if (name == "sgdm") return LimitMethod::Sgdm;
  if (name == "adam") return LimitMethod::Adam;
  throw ConfigError("unknown limit method '" + name + "'");
}

std::string to_string(const CurvatureTerms& terms) {
  std::string out;
  const auto add = [&out](const char* name) {
    if (!out.empty()) out += '+';
    out += name;
  };
  if (terms.rho) add("rho");
  if (terms.h_abs) add("h_abs");
  if (terms.h_rms) add("h_rms");
  return out.empty() ? "none" : out;
}

CurvatureTerms curvature_terms_from_string(const std::string& text) {
  CurvatureTerms terms{false, false, false};
  if (text == "none") return terms;
  std::stringstream in(text);
  std::string item;
  while (std::getline(in, item, '+')) {
    if (item == "rho") terms.rho = true;
    else if (item == "h_abs") terms.h_abs = true;
    else if (item == "h_rms") terms.h_rms = true;
    else throw ConfigError("unknown curvature term '" + item + "'");
  }
  return terms;
}

AliceConfig AliceConfig::resolved() const {
  AliceConfig out = *this;
  if (naq) {
    const NaqCoefficients c = naq_coefficients(beta1);
    out.phi = c.phi;
    out.omega = c.omega;
  }
  return out;
}

void AliceConfig::validate() const {
  const AliceConfig r = resolved();
  if (!(lambda > 0.0)) throw ConfigError("lambda must be > 0");
  if (!(beta1 >= 0.0 && beta1 < 1.0)) throw ConfigError("beta1 must lie in [0, 1)");
  if (!(beta2 >= 0.0 && beta2 < 1.0)) throw ConfigError("beta2 must lie in [0, 1)");
  if (!(eps > 0.0)) throw ConfigError("eps must be > 0");
  if (!(r.phi > 0.0 && r.phi <= 1.0)) throw ConfigError("phi must lie in (0, 1]");
  if (!(r.omega >= r.phi && r.omega <= 1.0)) throw ConfigError("omega must lie in [phi, 1]");
  if (!(lambda_min >= 0.0)) throw ConfigError("lambda_min must be >= 0");
  if (!(lambda_max > 0.0)) throw ConfigError("lambda_max must be > 0");
  if (lambda_min > lambda_max) throw ConfigError("lambda_min must not exceed lambda_max");
  if (quick_steps < 0) throw ConfigError("quick_steps must be >= 0");
}

TopographyState TopographyState::initial(const ParamVector& params) {
  const Eigen::Index d = params.size();
  TopographyState s;
  s.g = Eigen::VectorXd::Zero(d);
  s.rho = Eigen::VectorXd::Zero(d);
  s.h_abs = Eigen::VectorXd::Zero(d);
  s.h_rms2 = Eigen::VectorXd::Zero(d);
  s.s = Eigen::VectorXd::Zero(d);
  s.mu = params;
  s.nu = params;
  return s;
}

void topography_update(TopographyState& state, const GradientOracle& grad, const AliceConfig& cfg,
                       std::uint64_t seed, EvaluationBuffers& buffers) {
  require_size(state, buffers);
  const Eigen::Index d = state.size();
  const double lambda = cfg.lambda;
  const double b1 = cfg.beta1;
  const double b2 = cfg.beta2;
  ParamVector& theta = buffers.theta;
  ParamVector& out = buffers.grad;

  Eigen::VectorXd t(d);
  Rng rng = make_rng(seed, static_cast<std::uint64_t>(state.step_count));
  fill_rademacher(rng, t);

  theta.noalias() = state.nu + lambda * t;
  grad(theta, out);
  require_finite(out, "plus");

  theta.noalias() = state.nu - lambda * t;
  t = out;
  grad(theta, out);
  require_finite(out, "minus");

  const double inv_2l = 1.0 / (2.0 * lambda);
  const double inv_4l2 = 1.0 / (4.0 * lambda * lambda);
  for (Eigen::Index i = 0; i < d; ++i) {
    const double diff = t[i] - out[i];
    state.h_abs[i] = b2 * state.h_abs[i] + (1.0 - b2) * std::abs(diff) * inv_2l;
    state.h_rms2[i] = b2 * state.h_rms2[i] + (1.0 - b2) * diff * diff * inv_4l2;
    t[i] = 0.5 * (t[i] + out[i]);
  }

  theta = state.nu;
  grad(theta, out);
  require_finite(out, "center");

  const double two_over_l = 2.0 / lambda;
  for (Eigen::Index i = 0; i < d; ++i) {
    const double g0 = out[i];
    const double curv = t[i] - g0;
    state.g[i] = b1 * state.g[i] + (1.0 - b1) * g0;
    state.rho[i] = b2 * state.rho[i] + (1.0 - b2) * two_over_l * curv * curv;
    state.s[i] = b2 * state.s[i] + (1.0 - b2) * g0 * g0;
  }
}

void quick_update(TopographyState& state, const GradientOracle& grad, const AliceConfig& cfg,
                  EvaluationBuffers& buffers) {
  require_size(state, buffers);
  const double b1 = cfg.beta1;
  const double b2 = cfg.beta2;
  buffers.theta = state.nu;
  grad(buffers.theta, buffers.grad);
  require_finite(buffers.grad, "center");
  for (Eigen::Index i = 0; i < state.size(); ++i) {
    const double g0 = buffers.grad[i];
    state.g[i] = b1 * state.g[i] + (1.0 - b1) * g0;
    state.s[i] = b2 * state.s[i] + (1.0 - b2) * g0 * g0;
  }
}

Eigen::VectorXd glass_term(const Eigen::VectorXd& rho, const Eigen::VectorXd& g, double eps) {
  if (rho.size() != g.size()) throw DimensionError("glass_term: size mismatch");
  if ((rho.array() < 0.0).any()) throw ConfigError("glass_term: rho must be nonnegative");
  return (3.0 * rho.array() / (4.0 * std::numbers::pi * g.array().abs() + eps)).matrix();
}

Eigen::VectorXd modified_hessian(const Eigen::VectorXd& hhat, const Eigen::VectorXd& h, double eps) {
  if (hhat.size() != h.size()) throw DimensionError("modified_hessian: size mismatch");
  if ((hhat.array() < 0.0).any() || (h.array() < 0.0).any())
    throw ConfigError("modified_hessian: glass term and Hessian diagonal must be nonnegative");
  const auto a = hhat.array();
  const auto b = h.array();
  return (a + b + (a * (a + 2.0 * b)).sqrt() + eps).matrix();
}

Eigen::VectorXd qn_scale(const Eigen::VectorXd& g, const Eigen::VectorXd& hbar) {
  if (g.size() != hbar.size()) throw DimensionError("qn_scale: size mismatch");
  return (g.array().abs() / hbar.array()).matrix();
}

StepLimits step_limits(LimitMethod method, const Eigen::VectorXd& g, const Eigen::VectorXd& s,
                       const AliceConfig& cfg) {
  const Eigen::Index d = g.size();
  StepLimits lim;
  switch (method) {
    case LimitMethod::Fixed:
      lim.lower = Eigen::VectorXd::Constant(d, cfg.lambda_min);
      lim.upper = Eigen::VectorXd::Constant(d, cfg.lambda_max);
      break;
    case LimitMethod::Sgdm:
      lim.lower = cfg.lambda_min * g.cwiseAbs();
      lim.upper = cfg.lambda_max * g.cwiseAbs();
      break;
    case LimitMethod::Adam: {
      if (s.size() != d) throw DimensionError("step_limits: size mismatch");
      const Eigen::ArrayXd denom = s.array().sqrt() + cfg.eps;
      lim.lower = (cfg.lambda_min * g.array().abs() / denom).matrix();
      lim.upper = (cfg.lambda_max * g.array().abs() / denom).matrix();
      break;
    }
  }
  return lim;
}

StepRecord apply_step(TopographyState& state, const Eigen::VectorXd& scale,
                      const StepLimits& limits, const Eigen::VectorXd& g, const AliceConfig& cfg) {
  const Eigen::Index d = state.size();
  if (scale.size() != d || g.size() != d || limits.lower.size() != d || limits.upper.size() != d)
    throw DimensionError("apply_step: size mismatch");
  if ((scale.array() < 0.0).any()) throw ConfigError("apply_step: step scale must be >= 0");

  StepRecord rec;
  rec.delta.resize(d);
  long long lo = 0, hi = 0;
  for (Eigen::Index i = 0; i < d; ++i) {
    const double capped = std::min(limits.upper[i], scale[i]);
    const double x = std::max(limits.lower[i], capped);
    if (capped < limits.lower[i]) ++lo;
    else if (scale[i] > limits.upper[i]) ++hi;
    rec.delta[i] = -sign(g[i]) * x;
  }
  for (Eigen::Index i = 0; i < d; ++i) {
    state.nu[i] = state.mu[i] + cfg.omega * rec.delta[i];
    state.mu[i] = state.mu[i] + cfg.phi * rec.delta[i];
  }
  if (d > 0) {
    rec.clamp_lo = static_cast<double>(lo) / static_cast<double>(d);
    rec.clamp_hi = static_cast<double>(hi) / static_cast<double>(d);
    rec.interior = 1.0 - rec.clamp_lo - rec.clamp_hi;
  }
  return rec;
}

NaqCoefficients naq_coefficients(double beta1) {
  if (!(beta1 >= 0.0 && beta1 < 1.0)) throw ConfigError("beta1 must lie in [0, 1)");
  return {1.0 - beta1, 1.0};
}

AliceOptimizer::AliceOptimizer(const ParamVector& params, AliceConfig cfg, std::uint64_t seed)
    : cfg_(cfg.resolved()), seed_(seed), state_(TopographyState::initial(params)),
      buffers_(params.size()) {
  cfg.validate();
}

StepRecord AliceOptimizer::step(const GradientOracle& grad) {
  const bool full = state_.step_count % (cfg_.quick_steps + 1) == 0;
  if (full) {
    topography_update(state_, grad, cfg_, seed_, buffers_);
    evaluations_ += 3;
  } else {
    quick_update(state_, grad, cfg_, buffers_);
    evaluations_ += 1;
  }
  ++state_.step_count;

  Eigen::VectorXd g = state_.g;
  Eigen::VectorXd s = state_.s;
  if (cfg_.limit_method == LimitMethod::Adam) {
    const double t = static_cast<double>(state_.step_count);
    g /= 1.0 - std::pow(cfg_.beta1, t);
    s /= 1.0 - std::pow(cfg_.beta2, t);
  }

  const Eigen::Index d = state_.size();
  Eigen::VectorXd hhat =
      cfg_.terms.rho ? glass_term(state_.rho, g, cfg_.eps) : Eigen::VectorXd::Zero(d);
  Eigen::VectorXd h;
  if (cfg_.terms.h_abs) h = state_.h_abs;
  else if (cfg_.terms.h_rms) h = state_.h_rms2.cwiseSqrt();
  else h = Eigen::VectorXd::Zero(d);

  Eigen::VectorXd hbar = modified_hessian(hhat, h, cfg_.eps);
  const StepLimits limits = step_limits(cfg_.limit_method, g, s, cfg_);
  StepRecord rec = apply_step(state_, qn_scale(g, hbar), limits, g, cfg_);
  rec.hhat = std::move(hhat);
  rec.hbar = std::move(hbar);
  rec.full_update = full;
  return rec;
}

AdamReference::AdamReference(ParamVector params, double lr, double beta1, double beta2, double eps)
    : params_(std::move(params)), lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {
  m_ = Eigen::VectorXd::Zero(params_.size());
  v_ = Eigen::VectorXd::Zero(params_.size());
  grad_.resize(params_.size());
}

void AdamReference::step(const GradientOracle& grad) {
  grad(params_, grad_);
  ++t_;
  m_ = beta1_ * m_ + (1.0 - beta1_) * grad_;
  v_ = beta2_ * v_ + (1.0 - beta2_) * grad_.cwiseAbs2();
  const Eigen::ArrayXd m_hat = m_.array() / (1.0 - std::pow(beta1_, static_cast<double>(t_)));
  const Eigen::ArrayXd v_hat = v_.array() / (1.0 - std::pow(beta2_, static_cast<double>(t_)));
  params_.array() -= lr_ * m_hat / (v_hat.sqrt() + eps_);
}

SgdmReference::SgdmReference(ParamVector params, double lr, double beta)
    : params_(std::move(params)), lr_(lr), beta_(beta) {
  v_ = Eigen::VectorXd::Zero(params_.size());
  grad_.resize(params_.size());
}

void SgdmReference::step(const GradientOracle& grad) {
  grad(params_, grad_);
  v_ = beta_ * v_ + (1.0 - beta_) * grad_;
  params_ -= lr_ * v_;
}

std::vector<ParamVector> reference_adam(const ParamVector& params, const GradientOracle& grad,
                                        double lr, double beta1, double beta2, double eps,
                                        int n_steps) {
  AdamReference adam(params, lr, beta1, beta2, eps);
  std::vector<ParamVector> path{params};
  for (int i = 0; i < n_steps; ++i) {
    adam.step(grad);
    path.push_back(adam.params());
  }
  return path;
}

std::vector<ParamVector> reference_sgdm(const ParamVector& params, const GradientOracle& grad,
                                        double lr, double beta, int n_steps) {
  SgdmReference sgdm(params, lr, beta);
  std::vector<ParamVector> path{params};
  for (int i = 0; i < n_steps; ++i) {
    sgdm.step(grad);
    path.push_back(sgdm.params());
  }
  return path;
}

NaqReport naq_exactness_check(const Eigen::MatrixXd& hidden_hessian, const Eigen::VectorXd& g_star0,
                              const Eigen::VectorXd& gamma0, double beta1,
                              const Eigen::VectorXd& hbar, int n_steps,
                              std::optional<NaqCoefficients> coefficients) {
  const Eigen::Index d = g_star0.size();
  if (hidden_hessian.rows() != d || hidden_hessian.cols() != d || gamma0.size() != d ||
      hbar.size() != d)
    throw DimensionError("naq_exactness_check: size mismatch");
  if ((hbar.array() <= 0.0).any()) throw ConfigError("naq_exactness_check: hbar must be > 0");
  const NaqCoefficients c = coefficients.value_or(naq_coefficients(beta1));

  // mu0 = 0, so g*(x) = g_star0 + H x.
  const auto true_grad = [&](const Eigen::VectorXd& x) -> Eigen::VectorXd {
    return g_star0 + hidden_hessian * x;
  };
  const auto relative = [](double miss, double scale) { return scale > 0.0 ? miss / scale : miss; };

  NaqReport report;
  Eigen::VectorXd mu = Eigen::VectorXd::Zero(d);
  Eigen::VectorXd g = g_star0 + gamma0;
  double decay = 1.0;
  for (int s = 1; s <= n_steps; ++s) {
    const Eigen::VectorXd delta = -(g.array() / hbar.array()).matrix();
    const Eigen::VectorXd model_grad = g + c.phi * hbar.cwiseProduct(delta);
    const Eigen::VectorXd nu = mu + c.omega * delta;
    mu += c.phi * delta;
    const Eigen::VectorXd g_next = beta1 * g + (1.0 - beta1) * true_grad(nu);
    decay *= beta1;

    NaqStepResidual r;
    r.step = s;
    const Eigen::VectorXd error = g_next - true_grad(mu);
    const Eigen::VectorXd expected = decay * gamma0;
    r.error_norm = error.norm();
    r.expected_norm = expected.norm();
    r.residual = relative((error - expected).norm(), r.expected_norm);
    const Eigen::VectorXd predicted = beta1 * g;
    r.model_residual = relative((model_grad - predicted).norm(), predicted.norm());
    g = g_next;

    if (!g.allFinite() || !mu.allFinite() || g.norm() > 1e150) {
      report.diverged = true;
      break;
    }
    report.max_residual = std::max(report.max_residual, r.residual);
    report.max_model_residual = std::max(report.max_model_residual, r.model_residual);
    report.steps.push_back(r);
  }
  return report;
}

}  // namespace alice
