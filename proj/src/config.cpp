#include <charconv>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include "alice/csv.hpp"
#include "alice/harness.hpp"

namespace alice {

namespace {

std::string trim(const std::string& s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string::npos) return "";
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> parts;
  std::stringstream in(s);
  std::string item;
  while (std::getline(in, item, sep)) parts.push_back(trim(item));
  return parts;
}

double parse_double(const std::string& text) {
  double value = 0.0;
  const auto [end, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc() || end != text.data() + text.size())
    throw ConfigError("expected a number, got '" + text + "'");
  return value;
}

long long parse_int(const std::string& text) {
  long long value = 0;
  const auto [end, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc() || end != text.data() + text.size())
    throw ConfigError("expected an integer, got '" + text + "'");
  return value;
}

bool parse_bool(const std::string& text) {
  if (text == "true" || text == "1" || text == "yes") return true;
  if (text == "false" || text == "0" || text == "no") return false;
  throw ConfigError("expected true or false, got '" + text + "'");
}

std::string join_ints(const std::vector<int>& xs) {
  std::string out;
  for (std::size_t i = 0; i < xs.size(); ++i) out += (i ? "," : "") + std::to_string(xs[i]);
  return out;
}

std::string join_seeds(const std::vector<std::uint64_t>& xs) {
  std::string out;
  for (std::size_t i = 0; i < xs.size(); ++i) out += (i ? "," : "") + std::to_string(xs[i]);
  return out;
}

using Setter = std::function<void(ExperimentConfig&, const std::string&)>;
using Getter = std::function<std::string(const ExperimentConfig&)>;

struct Field {
  const char* key;
  Setter set;
  Getter get;
};

#define ALICE_DOUBLE_FIELD(KEY, MEMBER)                                                  \
  Field {                                                                                \
    KEY, [](ExperimentConfig& c, const std::string& v) { c.MEMBER = parse_double(v); }, \
        [](const ExperimentConfig& c) { return csv::number(c.MEMBER); }                  \
  }
#define ALICE_INT_FIELD(KEY, MEMBER)                                                            \
  Field {                                                                                       \
    KEY, [](ExperimentConfig& c, const std::string& v) { c.MEMBER = static_cast<int>(parse_int(v)); }, \
        [](const ExperimentConfig& c) { return std::to_string(c.MEMBER); }                      \
  }

const std::vector<Field>& fields() {
  static const std::vector<Field> table = {
      {"name", [](ExperimentConfig& c, const std::string& v) { c.name = v; },
       [](const ExperimentConfig& c) { return c.name; }},
      {"task", [](ExperimentConfig& c, const std::string& v) { c.task = task_from_string(v); },
       [](const ExperimentConfig& c) { return to_string(c.task); }},
      {"output_dir", [](ExperimentConfig& c, const std::string& v) { c.output_dir = v; },
       [](const ExperimentConfig& c) { return c.output_dir; }},
      {"seeds",
       [](ExperimentConfig& c, const std::string& v) {
         c.seeds.clear();
         for (const auto& s : split(v, ',')) {
           const long long x = parse_int(s);
           if (x < 0) throw ConfigError("seeds must be nonnegative");
           c.seeds.push_back(static_cast<std::uint64_t>(x));
         }
       },
       [](const ExperimentConfig& c) { return join_seeds(c.seeds); }},
      ALICE_INT_FIELD("steps", steps),
      ALICE_INT_FIELD("batch_size", batch_size),
      {"optimizer",
       [](ExperimentConfig& c, const std::string& v) { c.optimizer = optimizer_kind_from_string(v); },
       [](const ExperimentConfig& c) { return to_string(c.optimizer); }},
      ALICE_DOUBLE_FIELD("lr", lr),
      {"record_wall_time",
       [](ExperimentConfig& c, const std::string& v) { c.record_wall_time = parse_bool(v); },
       [](const ExperimentConfig& c) { return std::string(c.record_wall_time ? "true" : "false"); }},
      {"model.widths",
       [](ExperimentConfig& c, const std::string& v) {
         c.model.layer_widths.clear();
         for (const auto& s : split(v, ',')) c.model.layer_widths.push_back(static_cast<int>(parse_int(s)));
       },
       [](const ExperimentConfig& c) { return join_ints(c.model.layer_widths); }},
      {"model.loss",
       [](ExperimentConfig& c, const std::string& v) { c.model.loss_kind = loss_kind_from_string(v); },
       [](const ExperimentConfig& c) { return to_string(c.model.loss_kind); }},
      ALICE_DOUBLE_FIELD("alice.lambda", alice.lambda),
      ALICE_DOUBLE_FIELD("alice.beta1", alice.beta1),
      ALICE_DOUBLE_FIELD("alice.beta2", alice.beta2),
      ALICE_DOUBLE_FIELD("alice.eps", alice.eps),
      ALICE_DOUBLE_FIELD("alice.phi", alice.phi),
      ALICE_DOUBLE_FIELD("alice.omega", alice.omega),
      ALICE_DOUBLE_FIELD("alice.lambda_min", alice.lambda_min),
      ALICE_DOUBLE_FIELD("alice.lambda_max", alice.lambda_max),
      {"alice.limit",
       [](ExperimentConfig& c, const std::string& v) { c.alice.limit_method = limit_method_from_string(v); },
       [](const ExperimentConfig& c) { return to_string(c.alice.limit_method); }},
      ALICE_INT_FIELD("alice.quick_steps", alice.quick_steps),
      {"alice.terms",
       [](ExperimentConfig& c, const std::string& v) { c.alice.terms = curvature_terms_from_string(v); },
       [](const ExperimentConfig& c) { return to_string(c.alice.terms); }},
      {"alice.naq", [](ExperimentConfig& c, const std::string& v) { c.alice.naq = parse_bool(v); },
       [](const ExperimentConfig& c) { return std::string(c.alice.naq ? "true" : "false"); }},
      ALICE_INT_FIELD("data.samples", data.samples),
      ALICE_DOUBLE_FIELD("data.noise", data.noise),
      ALICE_DOUBLE_FIELD("data.separation", data.separation),
      ALICE_DOUBLE_FIELD("probe.lambda", probe.lambda),
      ALICE_INT_FIELD("probe.samples", probe.samples),
      ALICE_INT_FIELD("probe.warmup", probe.warmup),
      ALICE_INT_FIELD("probe.batch", probe.batch),
  };
  return table;
}

#undef ALICE_DOUBLE_FIELD
#undef ALICE_INT_FIELD

const Field* find_field(const std::string& key) {
  for (const auto& f : fields())
    if (key == f.key) return &f;
  return nullptr;
}

}  // namespace

ConfigParseError::ConfigParseError(int line, std::string field, const std::string& message)
    : ConfigError((line > 0 ? "line " + std::to_string(line) + ": " : std::string()) +
                  (field.empty() ? "" : field + ": ") + message),
      line_(line), field_(std::move(field)) {}

std::string to_string(Task task) {
  switch (task) {
    case Task::SyntheticClassification: return "synthetic-classification";
    case Task::SyntheticRegression: return "synthetic-regression";
    case Task::LeastSquares: return "least-squares";
    case Task::PowerlawProbe: return "powerlaw-probe";
    case Task::NaqExactness: return "naq-exactness";
    case Task::EstimatorSuite: return "estimator-suite";
    case Task::GlassWalkSuite: return "glass-walk-suite";
  }
  return "unknown";
}

Task task_from_string(const std::string& name) {
  for (Task t : {Task::SyntheticClassification, Task::SyntheticRegression, Task::LeastSquares,
                 Task::PowerlawProbe, Task::NaqExactness, Task::EstimatorSuite, Task::GlassWalkSuite})
    if (to_string(t) == name) return t;
  throw ConfigError("unknown task '" + name + "'");
}

std::string to_string(OptimizerKind kind) {
  switch (kind) {
    case OptimizerKind::Alice: return "alice";
    case OptimizerKind::Adam: return "adam";
    case OptimizerKind::Sgdm: return "sgdm";
  }
  return "unknown";
}

OptimizerKind optimizer_kind_from_string(const std::string& name) {
  if (name == "alice") return OptimizerKind::Alice;
  if (name == "adam") return OptimizerKind::Adam;
  if (name == "sgdm") return OptimizerKind::Sgdm;
  throw ConfigError("unknown optimizer '" + name + "'");
}

void ExperimentConfig::validate() const {
  if (seeds.empty()) throw ConfigParseError(0, "seeds", "at least one seed is required");
  if (steps < 1) throw ConfigParseError(0, "steps", "must be >= 1");
  if (batch_size < 1) throw ConfigParseError(0, "batch_size", "must be >= 1");
  if (data.samples < 1) throw ConfigParseError(0, "data.samples", "must be >= 1");
  if (!(lr > 0.0)) throw ConfigParseError(0, "lr", "must be > 0");
  if (probe.samples < 1) throw ConfigParseError(0, "probe.samples", "must be >= 1");
  if (probe.warmup < 0) throw ConfigParseError(0, "probe.warmup", "must be >= 0");
  if (probe.batch < 1) throw ConfigParseError(0, "probe.batch", "must be >= 1");
  if (!(probe.lambda > 0.0)) throw ConfigParseError(0, "probe.lambda", "must be > 0");
  try {
    alice.validate();
    if (task != Task::LeastSquares) model.validate();
  } catch (const ConfigParseError&) {
    throw;
  } catch (const ConfigError& e) {
    throw ConfigParseError(0, "", e.what());
  }
}

ExperimentConfig parse_config(std::istream& in) {
  ExperimentConfig cfg;
  std::string raw;
  int line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    const auto hash = raw.find('#');
    const std::string line = trim(hash == std::string::npos ? raw : raw.substr(0, hash));
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigParseError(line_no, "", "expected 'key = value'");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    const Field* f = find_field(key);
    if (!f) throw ConfigParseError(line_no, key, "unknown key");
    if (value.empty()) throw ConfigParseError(line_no, key, "missing value");
    try {
      f->set(cfg, value);
    } catch (const ConfigError& e) {
      throw ConfigParseError(line_no, key, e.what());
    }
  }
  cfg.validate();
  return cfg;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigParseError(0, "", "cannot open config file '" + path.string() + "'");
  return parse_config(in);
}

std::string serialize_config(const ExperimentConfig& cfg) {
  std::string out;
  for (const auto& f : fields()) out += std::string(f.key) + " = " + f.get(cfg) + "\n";
  return out;
}

std::string make_manifest(const ExperimentConfig& cfg) {
  return std::string("code_version = ") + kCodeVersion + "\n" + serialize_config(cfg);
}

ExperimentConfig parse_manifest(std::istream& in, std::string* code_version) {
  std::string first;
  std::getline(in, first);
  const std::string prefix = "code_version = ";
  if (first.rfind(prefix, 0) != 0) throw ConfigParseError(1, "code_version", "missing");
  if (code_version) *code_version = first.substr(prefix.size());
  // Keep line numbers honest for diagnostics by re-inserting a blank line.
  std::stringstream rest;
  rest << '\n' << in.rdbuf();
  return parse_config(rest);
}

}  // namespace alice
