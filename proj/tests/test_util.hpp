#ifndef ALICE_TEST_UTIL_HPP
#define ALICE_TEST_UTIL_HPP

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>

#include "alice/netkit.hpp"
#include "alice/random.hpp"

namespace testutil {

inline alice::Batch random_batch(const alice::ModelSpec& spec, int n, std::uint64_t seed) {
  alice::Rng rng = alice::make_rng(seed, 77);
  std::normal_distribution<double> normal(0.0, 1.0);
  alice::Batch b;
  b.inputs.resize(n, spec.input_width());
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < spec.input_width(); ++j) b.inputs(i, j) = normal(rng);
  b.targets.resize(n, spec.output_width());
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < spec.output_width(); ++j) b.targets(i, j) = normal(rng);
  std::uniform_int_distribution<int> label(0, spec.output_width() - 1);
  for (int i = 0; i < n; ++i) b.labels.push_back(label(rng));
  return b;
}

inline alice::ParamVector random_params(const alice::ModelSpec& spec, std::uint64_t seed,
                                        double bias_scale = 0.1) {
  alice::ParamVector p = alice::build_model(spec, seed);
  alice::Rng rng = alice::make_rng(seed, 78);
  std::normal_distribution<double> normal(0.0, bias_scale);
  for (int l = 0; l < spec.num_layers(); ++l) {
    const Eigen::Index w = static_cast<Eigen::Index>(spec.layer_widths[l]) * spec.layer_widths[l + 1];
    for (int k = 0; k < spec.layer_widths[l + 1]; ++k) p[spec.layer_offset(l) + w + k] = normal(rng);
  }
  return p;
}

// Hidden pre-activation signs for every layer, concatenated.
inline std::vector<bool> activation_pattern(const alice::ModelSpec& spec, const alice::ParamVector& p,
                                            const Eigen::MatrixXd& inputs) {
  std::vector<bool> out;
  for (int l = 0; l + 1 < spec.num_layers(); ++l) {
    const Eigen::MatrixXd y = alice::hidden_preactivations(spec, p, inputs, l);
    for (Eigen::Index i = 0; i < y.size(); ++i) out.push_back(y.data()[i] > 0.0);
  }
  return out;
}

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline std::filesystem::path fresh_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / ("alice_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace testutil

#endif
