#include "alice/harness.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <functional>
#include <limits>
#include <memory>
#include <optional>
#include <ostream>
#include <random>
#include <stdexcept>

#include "alice/csv.hpp"
#include "alice/random.hpp"

namespace alice {

namespace {

namespace fs = std::filesystem;

constexpr std::uint64_t kDataTag = 0x64617461;
constexpr std::uint64_t kTeacherTag = 0x74656163;
constexpr std::uint64_t kOptimizerTag = 0x6f707469;
constexpr std::uint64_t kProbeTag = 0x70726f62;
constexpr std::uint64_t kLeastSquaresTag = 0x6c737173;

bool is_training_task(Task task) {
  return task == Task::SyntheticClassification || task == Task::SyntheticRegression ||
         task == Task::LeastSquares;
}

// A minibatch gradient for step t plus a full-data loss. Everything the
// training loop needs, regardless of whether the model is an MLP.
struct Problem {
  ParamVector initial;
  std::function<void(long long step)> select;
  GradientOracle grad;  // on the selected minibatch
  std::function<double(const ParamVector&, ParamVector&)> loss_and_grad;
  std::function<double(const ParamVector&)> full_loss;
};

Problem mlp_problem(const ExperimentConfig& cfg, const SyntheticData& data, std::uint64_t seed) {
  auto spec = std::make_shared<ModelSpec>(cfg.model);
  auto train = std::make_shared<Batch>(data.train);
  auto current = std::make_shared<Batch>();
  const Eigen::Index bs = std::min<Eigen::Index>(cfg.batch_size, train->size());

  Problem p;
  p.initial = build_model(*spec, seed);
  p.select = [train, current, bs](long long step) {
    *current = slice_batch(*train, (step * bs) % train->size(), bs);
  };
  p.grad = [spec, current](const ParamVector& theta, ParamVector& g) {
    gradient_into(*spec, theta, *current, g);
  };
  p.loss_and_grad = [spec, current](const ParamVector& theta, ParamVector& g) {
    return gradient_into(*spec, theta, *current, g);
  };
  p.full_loss = [spec, train](const ParamVector& theta) { return loss(*spec, theta, *train); };
  return p;
}

// L(x) = |Ax - b|^2 / (2 n) over all rows every step.
Problem least_squares_problem(const ExperimentConfig& cfg, std::uint64_t seed) {
  const int rows = cfg.data.samples;
  const int cols = cfg.model.layer_widths.empty() ? 1 : cfg.model.layer_widths.front();
  if (cols < 1) throw ConfigError("least-squares needs a positive first width");
  Rng rng = make_rng(seed, kLeastSquaresTag);
  std::normal_distribution<double> normal(0.0, 1.0);
  auto A = std::make_shared<Eigen::MatrixXd>(rows, cols);
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < cols; ++j) (*A)(i, j) = normal(rng);
  auto b = std::make_shared<Eigen::VectorXd>(rows);
  for (int i = 0; i < rows; ++i) (*b)[i] = cfg.data.noise * normal(rng);

  Problem p;
  p.initial.resize(cols);
  for (int j = 0; j < cols; ++j) p.initial[j] = normal(rng);
  p.select = [](long long) {};
  const double scale = 1.0 / rows;
  p.loss_and_grad = [A, b, scale](const ParamVector& x, ParamVector& g) {
    const Eigen::VectorXd r = *A * x - *b;
    g.noalias() = scale * (A->transpose() * r);
    return 0.5 * scale * r.squaredNorm();
  };
  p.grad = [f = p.loss_and_grad](const ParamVector& x, ParamVector& g) { f(x, g); };
  p.full_loss = [A, b, scale](const ParamVector& x) {
    return 0.5 * scale * (*A * x - *b).squaredNorm();
  };
  return p;
}

SyntheticData make_data(const ExperimentConfig& cfg, std::uint64_t seed) {
  if (cfg.model.loss_kind == LossKind::SoftmaxCrossEntropy ||
      cfg.task == Task::SyntheticClassification)
    return make_classification_data(cfg.model, cfg.data, seed);
  return make_regression_data(cfg.model, cfg.data, seed);
}

Problem make_problem(const ExperimentConfig& cfg, std::uint64_t seed) {
  if (cfg.task == Task::LeastSquares) return least_squares_problem(cfg, seed);
  return mlp_problem(cfg, make_data(cfg, seed), seed);
}

// Runs `steps` optimizer steps on `problem`, logging each one when `log` is
// given. Returns the final parameters.
ParamVector train_problem(const ExperimentConfig& cfg, Problem& problem, int steps,
                          std::uint64_t seed, std::vector<StepLogRow>* log) {
  const Eigen::Index d = problem.initial.size();
  ParamVector scratch(d);

  std::optional<AliceOptimizer> alice;
  std::optional<AdamReference> adam;
  std::optional<SgdmReference> sgdm;
  switch (cfg.optimizer) {
    case OptimizerKind::Alice:
      alice.emplace(problem.initial, cfg.alice, derive_seed(seed, kOptimizerTag));
      break;
    case OptimizerKind::Adam:
      adam.emplace(problem.initial, cfg.lr, cfg.alice.beta1, cfg.alice.beta2, cfg.alice.eps);
      break;
    case OptimizerKind::Sgdm:
      sgdm.emplace(problem.initial, cfg.lr, cfg.alice.beta1);
      break;
  }
  const auto params = [&]() -> const ParamVector& {
    if (alice) return alice->params();
    if (adam) return adam->params();
    return sgdm->params();
  };

  for (long long t = 0; t < steps; ++t) {
    problem.select(t);
    StepLogRow row;
    row.step = t;
    if (log) {
      row.loss = problem.loss_and_grad(params(), scratch);
      row.grad_norm = scratch.norm();
    }
    const auto start = std::chrono::steady_clock::now();
    if (alice) {
      const StepRecord rec = alice->step(problem.grad);
      row.mean_rho = alice->state().rho.mean();
      row.mean_hbar = rec.hbar.mean();
      row.clamp_lo = rec.clamp_lo;
      row.clamp_hi = rec.clamp_hi;
      row.grad_evals = alice->gradient_evaluations();
    } else {
      if (adam) adam->step(problem.grad);
      else sgdm->step(problem.grad);
      row.grad_evals = t + 1;
    }
    const auto stop = std::chrono::steady_clock::now();
    if (cfg.record_wall_time)
      row.wall_ms = std::chrono::duration<double, std::milli>(stop - start).count();
    if (!params().allFinite())
      throw NumericError("non-finite parameters after step " + std::to_string(t),
                         "step " + std::to_string(t));
    if (log) log->push_back(row);
  }
  return params();
}

std::vector<double> sorted_finite_check(std::vector<double> values) {
  for (double v : values)
    if (std::isnan(v)) return {};
  std::sort(values.begin(), values.end());
  return values;
}

void open_for_write(std::ofstream& out, const fs::path& path) {
  out.open(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write '" + path.string() + "'");
}

double mean_hidden_p(const PowerLawReport& report) {
  double sum = 0.0;
  int count = 0;
  for (const auto& row : report.rows) {
    if (row.partition == "output" || !row.defined) continue;
    sum += row.p;
    ++count;
  }
  return count ? sum / count : std::numeric_limits<double>::quiet_NaN();
}

}  // namespace

SyntheticData make_classification_data(const ModelSpec& model, const DataConfig& data,
                                       std::uint64_t seed) {
  model.validate();
  const int m = model.input_width();
  const int k = model.output_width();
  const int n = data.samples;
  Rng rng = make_rng(seed, kDataTag);
  std::normal_distribution<double> normal(0.0, 1.0);

  Eigen::MatrixXd centers(k, m);
  const double center_scale = data.separation / std::sqrt(static_cast<double>(m));
  for (int c = 0; c < k; ++c)
    for (int j = 0; j < m; ++j) centers(c, j) = center_scale * normal(rng);

  SyntheticData out;
  Batch& b = out.train;
  b.inputs.resize(n, m);
  b.targets = Eigen::MatrixXd::Zero(n, k);
  b.labels.resize(n);
  for (int i = 0; i < n; ++i) {
    const int label = i % k;
    b.labels[i] = label;
    b.targets(i, label) = 1.0;
    for (int j = 0; j < m; ++j) b.inputs(i, j) = centers(label, j) + data.noise * normal(rng);
  }
  return out;
}

SyntheticData make_regression_data(const ModelSpec& model, const DataConfig& data,
                                   std::uint64_t seed) {
  model.validate();
  const int m = model.input_width();
  const int n = data.samples;
  Rng rng = make_rng(seed, kDataTag);
  std::normal_distribution<double> normal(0.0, 1.0);

  SyntheticData out;
  Batch& b = out.train;
  b.inputs.resize(n, m);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < m; ++j) b.inputs(i, j) = normal(rng);
  const ParamVector teacher = build_model(model, derive_seed(seed, kTeacherTag));
  b.targets = forward(model, teacher, b.inputs);
  for (Eigen::Index i = 0; i < b.targets.rows(); ++i)
    for (Eigen::Index j = 0; j < b.targets.cols(); ++j) b.targets(i, j) += data.noise * normal(rng);
  b.labels.assign(n, 0);
  return out;
}

Batch slice_batch(const Batch& batch, Eigen::Index first, Eigen::Index count) {
  const Eigen::Index n = batch.size();
  if (n == 0 || count < 0) throw DimensionError("slice_batch: empty batch or negative count");
  Batch out;
  out.inputs.resize(count, batch.inputs.cols());
  if (batch.targets.size()) out.targets.resize(count, batch.targets.cols());
  if (!batch.labels.empty()) out.labels.resize(count);
  for (Eigen::Index r = 0; r < count; ++r) {
    const Eigen::Index src = (first + r) % n;
    out.inputs.row(r) = batch.inputs.row(src);
    if (batch.targets.size()) out.targets.row(r) = batch.targets.row(src);
    if (!batch.labels.empty()) out.labels[r] = batch.labels[src];
  }
  return out;
}

void write_training_log(std::ostream& out, const std::vector<StepLogRow>& rows) {
  csv::write_row(out, {"step", "loss", "grad_norm", "mean_rho", "mean_hbar", "clamp_lo",
                       "clamp_hi", "wall_ms", "grad_evals"});
  for (const auto& r : rows)
    csv::write_row(out, {csv::number(r.step), csv::number(r.loss), csv::number(r.grad_norm),
                         csv::number(r.mean_rho), csv::number(r.mean_hbar),
                         csv::number(r.clamp_lo), csv::number(r.clamp_hi),
                         csv::number(r.wall_ms), csv::number(r.grad_evals)});
}

Aggregate aggregate(std::vector<double> values) {
  if (values.empty()) throw ConfigError("aggregate of an empty list");
  const auto sorted = sorted_finite_check(values);
  if (sorted.empty()) {
    const double nan = std::numeric_limits<double>::quiet_NaN();
    return {nan, nan, nan};
  }
  const std::size_t n = sorted.size();
  const double median = n % 2 ? sorted[n / 2] : 0.5 * (sorted[n / 2 - 1] + sorted[n / 2]);
  return {sorted.front(), median, sorted.back()};
}

SeedResult train_seed(const ExperimentConfig& cfg, std::uint64_t seed) {
  SeedResult result;
  result.seed = seed;
  try {
    cfg.validate();
    if (!is_training_task(cfg.task))
      throw ConfigError("task '" + to_string(cfg.task) + "' is not a training task");
    Problem problem = make_problem(cfg, seed);
    result.final_params = train_problem(cfg, problem, cfg.steps, seed, &result.log);
    result.final_metric = problem.full_loss(result.final_params);
    if (!std::isfinite(result.final_metric))
      throw NumericError("non-finite final loss", "final");
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    result.ok = false;
    result.error = e.what();
    result.final_metric = std::numeric_limits<double>::quiet_NaN();
  }
  return result;
}

PowerLawExperiment powerlaw_experiment(const ExperimentConfig& cfg, const SyntheticData& data,
                                       const std::vector<Partition>& partitions,
                                       std::uint64_t seed) {
  cfg.validate();
  Problem problem = mlp_problem(cfg, data, seed);
  PowerLawExperiment out;
  out.params = train_problem(cfg, problem, cfg.probe.warmup, seed, nullptr);

  const Eigen::Index n = std::min<Eigen::Index>(cfg.probe.batch, data.train.size());
  const GradientOracle oracle = make_gradient_oracle(cfg.model, slice_batch(data.train, 0, n));
  const std::uint64_t probe_seed = derive_seed(seed, kProbeTag);
  out.at_lambda = measure_variations(oracle, out.params, cfg.probe.lambda, cfg.probe.samples,
                                     probe_seed);
  out.at_2lambda = measure_variations(oracle, out.params, 2.0 * cfg.probe.lambda,
                                      cfg.probe.samples, probe_seed);
  out.report = power_law(out.at_lambda, out.at_2lambda, partitions);
  return out;
}

PowerLawExperiment run_probe(const ExperimentConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  if (cfg.task != Task::LeastSquares)
    return powerlaw_experiment(cfg, make_data(cfg, seed), layer_partitions(cfg.model), seed);

  Problem problem = least_squares_problem(cfg, seed);
  PowerLawExperiment out;
  out.params = train_problem(cfg, problem, cfg.probe.warmup, seed, nullptr);
  Partition all{"all", {}};
  for (Eigen::Index i = 0; i < out.params.size(); ++i) all.indices.push_back(i);
  const std::uint64_t probe_seed = derive_seed(seed, kProbeTag);
  out.at_lambda = measure_variations(problem.grad, out.params, cfg.probe.lambda,
                                     cfg.probe.samples, probe_seed);
  out.at_2lambda = measure_variations(problem.grad, out.params, 2.0 * cfg.probe.lambda,
                                      cfg.probe.samples, probe_seed);
  out.report = power_law(out.at_lambda, out.at_2lambda, {all});
  return out;
}

PowerLawReport quadratic_powerlaw_probe(int dim, double lambda, int n_samples, std::uint64_t seed) {
  if (dim < 1) throw ConfigError("quadratic_powerlaw_probe: dim must be >= 1");
  Rng rng = make_rng(seed, kProbeTag);
  std::normal_distribution<double> normal(0.0, 1.0);
  Eigen::MatrixXd A(dim, dim);
  for (int i = 0; i < dim; ++i)
    for (int j = 0; j < dim; ++j) A(i, j) = normal(rng);
  const Eigen::MatrixXd H = 0.5 * (A + A.transpose());
  ParamVector mu(dim);
  fill_normal(rng, mu);
  const GradientOracle oracle = [H](const ParamVector& theta, ParamVector& g) {
    g.noalias() = H * theta;
  };
  const auto at_l = measure_variations(oracle, mu, lambda, n_samples, seed);
  const auto at_2l = measure_variations(oracle, mu, 2.0 * lambda, n_samples, seed);
  Partition all{"all", {}};
  for (int i = 0; i < dim; ++i) all.indices.push_back(i);
  return power_law(at_l, at_2l, {all});
}

void write_summary(std::ostream& out, const RunSummary& summary) {
  csv::write_row(out, {"seed", "final_metric", "status"});
  for (const auto& s : summary.seeds)
    csv::write_row(out, {csv::number(static_cast<unsigned long long>(s.seed)),
                         csv::number(s.final_metric), s.ok ? "ok" : "failed: " + s.error});
  csv::write_row(out, {"min", csv::number(summary.metric.min), ""});
  csv::write_row(out, {"median", csv::number(summary.metric.median), ""});
  csv::write_row(out, {"max", csv::number(summary.metric.max), ""});
}

RunSummary run_experiment(const ExperimentConfig& cfg) {
  cfg.validate();
  const fs::path dir(cfg.output_dir);
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw std::runtime_error("cannot create output directory '" + dir.string() + "'");
  {
    std::ofstream manifest;
    open_for_write(manifest, dir / "manifest.txt");
    manifest << make_manifest(cfg);
  }

  RunSummary summary;
  for (std::uint64_t seed : cfg.seeds) {
    const std::string tag = std::to_string(seed);
    SeedResult result;
    result.seed = seed;
    if (is_training_task(cfg.task)) {
      result = train_seed(cfg, seed);
      std::ofstream log;
      open_for_write(log, dir / ("train_" + tag + ".csv"));
      write_training_log(log, result.log);
    } else if (cfg.task == Task::PowerlawProbe) {
      try {
        const PowerLawExperiment probe = run_probe(cfg, seed);
        std::ofstream out;
        open_for_write(out, dir / ("powerlaw_" + tag + ".csv"));
        write_csv(out, probe.report);
        result.final_metric = mean_hidden_p(probe.report);
      } catch (const std::exception& e) {
        result.ok = false;
        result.error = e.what();
        result.final_metric = std::numeric_limits<double>::quiet_NaN();
      }
    } else {
      const std::string suite = cfg.task == Task::NaqExactness     ? "naq"
                                : cfg.task == Task::EstimatorSuite ? "kernel"
                                                                   : "walk";
      const SuiteReport report = run_suite(suite, seed);
      std::ofstream out;
      open_for_write(out, dir / (suite + "_" + tag + ".csv"));
      write_csv(out, report);
      long long failed = 0;
      for (const auto& c : report.checks) failed += c.pass ? 0 : 1;
      result.final_metric = static_cast<double>(failed);
      if (failed) {
        result.ok = false;
        result.error = std::to_string(failed) + " checks failed";
      }
    }
    summary.all_ok = summary.all_ok && result.ok;
    summary.seeds.push_back(std::move(result));
  }

  std::vector<double> metrics;
  for (const auto& s : summary.seeds) metrics.push_back(s.final_metric);
  summary.metric = aggregate(metrics);

  std::ofstream out;
  open_for_write(out, dir / "summary.csv");
  write_summary(out, summary);
  return summary;
}

}  // namespace alice
