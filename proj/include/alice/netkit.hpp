#ifndef ALICE_NETKIT_HPP
#define ALICE_NETKIT_HPP

// Dense reverse-mode differentiation for fully connected ReLU networks.
//
// Parameters are flattened layer by layer; within a layer the weight matrix
// (w_out x w_in) comes first in row-major order, followed by the w_out
// biases. Hidden layers use ReLU with derivative 0 at exactly y = 0; the
// output layer is the identity.

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "alice/errors.hpp"

namespace alice {

using ParamVector = Eigen::VectorXd;

/// Gradient oracle writing g(theta) into a caller-owned buffer of size d.
using GradientOracle = std::function<void(const ParamVector& theta, ParamVector& grad)>;

enum class LossKind { MeanSquaredError, SoftmaxCrossEntropy };

std::string to_string(LossKind kind);
LossKind loss_kind_from_string(const std::string& name);

struct ModelSpec {
  std::vector<int> layer_widths;  // input, hidden..., output
  LossKind loss_kind = LossKind::MeanSquaredError;

  /// Throws ConfigError unless there is at least one hidden layer and every
  /// width is positive.
  void validate() const;
  int num_layers() const { return static_cast<int>(layer_widths.size()) - 1; }
  int input_width() const { return layer_widths.front(); }
  int output_width() const { return layer_widths.back(); }
  Eigen::Index parameter_count() const;
  /// Offset of layer `l`'s weight block in the flat vector.
  Eigen::Index layer_offset(int l) const;
  /// Number of parameters in layer `l` (weights plus biases).
  Eigen::Index layer_size(int l) const;

  bool operator==(const ModelSpec&) const = default;
};

/// Inputs are n x w_in. MSE uses `targets` (n x w_out); cross-entropy uses
/// `labels` (n class indices).
struct Batch {
  Eigen::MatrixXd inputs;
  Eigen::MatrixXd targets;
  std::vector<int> labels;

  Eigen::Index size() const { return inputs.rows(); }
};

struct UnitId {
  int layer = 0;   // hidden layer index, 0-based
  int neuron = 0;
  int sample = 0;

  auto operator<=>(const UnitId&) const = default;
};

/// One hidden ReLU unit evaluated on one sample.
struct ReluUnitRecord {
  UnitId unit_id;
  double y = 0.0;       // pre-activation
  double dL_dz = 0.0;   // derivative of the batch loss w.r.t. z = max(y, 0)
  ParamVector grad_y;   // gradient of y w.r.t. all parameters
};

/// Initializes parameters deterministically from `seed`. Weights are drawn
/// from N(0, gain / w_in) with gain 1 for the first layer and 2 after a ReLU,
/// so pre-activations stay order one for unit-variance inputs. Biases are 0.
ParamVector build_model(const ModelSpec& spec, std::uint64_t seed);

double loss(const ModelSpec& spec, const ParamVector& params, const Batch& batch);

struct LossAndGradient {
  double loss = 0.0;
  ParamVector grad;
};

LossAndGradient gradient(const ModelSpec& spec, const ParamVector& params, const Batch& batch);

/// Writes the gradient into `grad` (resized if needed) and returns the loss.
double gradient_into(const ModelSpec& spec, const ParamVector& params, const Batch& batch,
                     ParamVector& grad);

/// All hidden (unit, sample) pairs with |y| < psi, sorted by unit id, each
/// carrying the gradient of its pre-activation from a dedicated backward pass.
std::vector<ReluUnitRecord> relu_introspect(const ModelSpec& spec, const ParamVector& params,
                                            const Batch& batch, double psi);

/// Network outputs (n x w_out).
Eigen::MatrixXd forward(const ModelSpec& spec, const ParamVector& params,
                        const Eigen::MatrixXd& inputs);

/// Pre-activations of hidden layer `layer` (n x width).
Eigen::MatrixXd hidden_preactivations(const ModelSpec& spec, const ParamVector& params,
                                      const Eigen::MatrixXd& inputs, int layer);

/// Convenience oracle bound to a fixed batch. The batch is copied.
GradientOracle make_gradient_oracle(const ModelSpec& spec, Batch batch);

}  // namespace alice

#endif
