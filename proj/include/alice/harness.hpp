#ifndef ALICE_HARNESS_HPP
#define ALICE_HARNESS_HPP

// Experiment definitions, synthetic tasks, multi-seed runs and the files
// they leave behind.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "alice/glass.hpp"
#include "alice/netkit.hpp"
#include "alice/optimizer.hpp"

namespace alice {

inline constexpr const char* kCodeVersion = "alice-glass 1.0.0";

enum class Task {
  SyntheticClassification,
  SyntheticRegression,
  LeastSquares,
  PowerlawProbe,
  NaqExactness,
  EstimatorSuite,
  GlassWalkSuite,
};

std::string to_string(Task task);
Task task_from_string(const std::string& name);

enum class OptimizerKind { Alice, Adam, Sgdm };

std::string to_string(OptimizerKind kind);
OptimizerKind optimizer_kind_from_string(const std::string& name);

struct DataConfig {
  int samples = 512;
  double noise = 1.0;
  double separation = 3.0;  // blob-center scale for classification

  bool operator==(const DataConfig&) const = default;
};

struct ProbeConfig {
  double lambda = 0.002;
  int samples = 32;
  int warmup = 200;
  int batch = 256;  // samples in the probe's loss

  bool operator==(const ProbeConfig&) const = default;
};

struct ExperimentConfig {
  std::string name = "experiment";
  Task task = Task::SyntheticClassification;
  ModelSpec model{{8, 32, 32, 4}, LossKind::SoftmaxCrossEntropy};
  OptimizerKind optimizer = OptimizerKind::Alice;
  AliceConfig alice;
  double lr = 0.001;  // baseline learning rate
  std::vector<std::uint64_t> seeds{1};
  int steps = 100;
  int batch_size = 64;
  std::string output_dir = "out";
  DataConfig data;
  ProbeConfig probe;
  bool record_wall_time = false;

  void validate() const;
  bool operator==(const ExperimentConfig&) const = default;
};

/// Parse error with the 1-based line number (0 when not tied to a line).
class ConfigParseError : public ConfigError {
 public:
  ConfigParseError(int line, std::string field, const std::string& message);
  int line() const noexcept { return line_; }
  const std::string& field() const noexcept { return field_; }

 private:
  int line_;
  std::string field_;
};

/// `key = value` lines; `#` starts a comment. Unknown keys are errors.
/// Keys not given keep their defaults.
ExperimentConfig parse_config(std::istream& in);
ExperimentConfig load_config(const std::filesystem::path& path);
std::string serialize_config(const ExperimentConfig& cfg);

/// Manifest: code version line followed by the serialized config.
std::string make_manifest(const ExperimentConfig& cfg);
ExperimentConfig parse_manifest(std::istream& in, std::string* code_version = nullptr);

/// A dataset plus the model it is meant for. Classification data are
/// Gaussian blobs; regression targets come from a random teacher network.
struct SyntheticData {
  Batch train;
};

SyntheticData make_classification_data(const ModelSpec& model, const DataConfig& data,
                                       std::uint64_t seed);
SyntheticData make_regression_data(const ModelSpec& model, const DataConfig& data,
                                   std::uint64_t seed);

/// Rows [first, first + count) of a batch, wrapping around.
Batch slice_batch(const Batch& batch, Eigen::Index first, Eigen::Index count);

struct StepLogRow {
  long long step = 0;
  double loss = 0.0;
  double grad_norm = 0.0;
  double mean_rho = 0.0;
  double mean_hbar = 0.0;
  double clamp_lo = 0.0;
  double clamp_hi = 0.0;
  double wall_ms = 0.0;
  long long grad_evals = 0;
};

void write_training_log(std::ostream& out, const std::vector<StepLogRow>& rows);

struct SeedResult {
  std::uint64_t seed = 0;
  double final_metric = 0.0;
  bool ok = true;
  std::string error;
  std::vector<StepLogRow> log;
  ParamVector final_params;
};

struct Aggregate {
  double min = 0.0;
  double median = 0.0;
  double max = 0.0;
};

/// Order statistics; the median of an even count is the mean of the middle
/// two. Throws ConfigError on an empty list.
Aggregate aggregate(std::vector<double> values);

struct RunSummary {
  std::vector<SeedResult> seeds;
  Aggregate metric;
  bool all_ok = true;
};

/// Trains one seed of a training task (classification, regression or
/// least squares) without touching the filesystem.
SeedResult train_seed(const ExperimentConfig& cfg, std::uint64_t seed);

/// Runs every seed and writes `summary.csv` and `manifest.txt` into
/// cfg.output_dir, plus one file per seed: `train_<seed>.csv` for training
/// tasks, `powerlaw_<seed>.csv` for probes, `<suite>_<seed>.csv` for the
/// oracle suites. Per-seed failures are recorded and the run continues; an
/// unwritable output directory throws.
RunSummary run_experiment(const ExperimentConfig& cfg);

void write_summary(std::ostream& out, const RunSummary& summary);

struct PowerLawExperiment {
  PowerLawReport report;
  GradientVariationMeasurement at_lambda;
  GradientVariationMeasurement at_2lambda;
  ParamVector params;  // where the probe was taken
};

/// Builds the model from `seed`, trains `probe.warmup` steps with the
/// configured optimizer, then measures v(lambda) and v(2 lambda) on the
/// first `probe.batch` samples with shared Rademacher seeds.
PowerLawExperiment powerlaw_experiment(const ExperimentConfig& cfg, const SyntheticData& data,
                                       const std::vector<Partition>& partitions,
                                       std::uint64_t seed);

/// Probe for any config: MLP tasks go through powerlaw_experiment with
/// per-layer partitions, least squares uses a single partition "all".
PowerLawExperiment run_probe(const ExperimentConfig& cfg, std::uint64_t seed);

/// Power-law probe of g(theta) = H theta (p = 2 exactly).
PowerLawReport quadratic_powerlaw_probe(int dim, double lambda, int n_samples, std::uint64_t seed);

// Verification suites driven by `alice verify`.

struct CheckResult {
  std::string suite;
  std::string check;
  double value = 0.0;
  double threshold = 0.0;
  std::string relation;  // how value compares to threshold, e.g. "<=" or "in"
  bool pass = false;
};

struct SuiteReport {
  std::vector<CheckResult> checks;
  bool pass() const;
};

const std::vector<std::string>& suite_names();  // kernel, glass, naq, step, walk
bool is_suite_name(const std::string& name);
/// Runs one suite or "all". Throws ConfigError on an unknown name.
SuiteReport run_suite(const std::string& name, std::uint64_t seed);
void write_csv(std::ostream& out, const SuiteReport& report);
void print_table(std::ostream& out, const SuiteReport& report);

}  // namespace alice

#endif
