#include "alice/netkit.hpp"

#include <cmath>
#include <limits>
#include <random>

#include "alice/random.hpp"

namespace alice {

namespace {

using RowMajorMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstWeights = Eigen::Map<const RowMajorMatrix>;
using Weights = Eigen::Map<RowMajorMatrix>;

ConstWeights weights(const ModelSpec& spec, const ParamVector& params, int l) {
  return ConstWeights(params.data() + spec.layer_offset(l), spec.layer_widths[l + 1],
                      spec.layer_widths[l]);
}

Eigen::Map<const Eigen::VectorXd> biases(const ModelSpec& spec, const ParamVector& params, int l) {
  const Eigen::Index w_in = spec.layer_widths[l];
  const Eigen::Index w_out = spec.layer_widths[l + 1];
  return Eigen::Map<const Eigen::VectorXd>(params.data() + spec.layer_offset(l) + w_in * w_out,
                                           w_out);
}

void check_inputs(const ModelSpec& spec, const ParamVector& params, const Batch& batch) {
  spec.validate();
  if (params.size() != spec.parameter_count())
    throw DimensionError("parameter vector has length " + std::to_string(params.size()) +
                         ", model expects " + std::to_string(spec.parameter_count()));
  if (batch.size() < 1) throw DimensionError("batch is empty");
  if (batch.inputs.cols() != spec.input_width())
    throw DimensionError("batch inputs have " + std::to_string(batch.inputs.cols()) +
                         " columns, model expects " + std::to_string(spec.input_width()));
  if (spec.loss_kind == LossKind::MeanSquaredError) {
    if (batch.targets.rows() != batch.size() || batch.targets.cols() != spec.output_width())
      throw DimensionError("MSE targets must be n x w_out");
  } else {
    if (static_cast<Eigen::Index>(batch.labels.size()) != batch.size())
      throw DimensionError("cross-entropy needs one label per sample");
    for (int label : batch.labels)
      if (label < 0 || label >= spec.output_width())
        throw DimensionError("class label " + std::to_string(label) + " out of range");
  }
}

struct ForwardCache {
  std::vector<Eigen::MatrixXd> pre;   // y for every layer (n x w_out)
  std::vector<Eigen::MatrixXd> post;  // z for hidden layers; post[l] feeds layer l+1
};

ForwardCache run_forward(const ModelSpec& spec, const ParamVector& params,
                         const Eigen::MatrixXd& inputs) {
  const int num_layers = spec.num_layers();
  ForwardCache cache;
  cache.pre.reserve(num_layers);
  cache.post.reserve(num_layers - 1);
  for (int l = 0; l < num_layers; ++l) {
    const Eigen::MatrixXd& z_in = l == 0 ? inputs : cache.post[l - 1];
    Eigen::MatrixXd y = z_in * weights(spec, params, l).transpose();
    y.rowwise() += biases(spec, params, l).transpose();
    if (!y.allFinite())
      throw NumericError("non-finite pre-activation in layer " + std::to_string(l),
                         "layer " + std::to_string(l));
    if (l + 1 < num_layers) cache.post.push_back(y.cwiseMax(0.0));
    cache.pre.push_back(std::move(y));
  }
  return cache;
}

// Loss and dL/d(output) for the whole batch.
double output_loss(const ModelSpec& spec, const Eigen::MatrixXd& out, const Batch& batch,
                   Eigen::MatrixXd* d_out) {
  const double n = static_cast<double>(batch.size());
  if (spec.loss_kind == LossKind::MeanSquaredError) {
    const Eigen::MatrixXd diff = out - batch.targets;
    const double count = n * static_cast<double>(out.cols());
    if (d_out) *d_out = (2.0 / count) * diff;
    return diff.squaredNorm() / count;
  }
  double total = 0.0;
  if (d_out) d_out->resize(out.rows(), out.cols());
  for (Eigen::Index s = 0; s < out.rows(); ++s) {
    const double peak = out.row(s).maxCoeff();
    const Eigen::RowVectorXd shifted = out.row(s).array() - peak;
    const double log_sum = std::log(shifted.array().exp().sum());
    const int label = batch.labels[s];
    total += log_sum - shifted[label];
    if (d_out) {
      d_out->row(s) = (shifted.array() - log_sum).exp() / n;
      (*d_out)(s, label) -= 1.0 / n;
    }
  }
  return total / n;
}

}  // namespace

std::string to_string(LossKind kind) {
  return kind == LossKind::MeanSquaredError ? "mse" : "cross-entropy";
}

LossKind loss_kind_from_string(const std::string& name) {
  if (name == "mse" || name == "mean-squared-error") return LossKind::MeanSquaredError;
  if (name == "cross-entropy" || name == "softmax-cross-entropy")
    return LossKind::SoftmaxCrossEntropy;
  throw ConfigError("unknown loss kind '" + name + "'");
}

void ModelSpec::validate() const {
  if (layer_widths.size() < 3)
    throw ConfigError("model needs input, at least one hidden and an output layer");
  for (std::size_t i = 0; i < layer_widths.size(); ++i)
    if (layer_widths[i] < 1)
      throw ConfigError("layer width " + std::to_string(i) + " must be positive, got " +
                        std::to_string(layer_widths[i]));
}

Eigen::Index ModelSpec::layer_size(int l) const {
  return static_cast<Eigen::Index>(layer_widths[l] + 1) * layer_widths[l + 1];
}

Eigen::Index ModelSpec::layer_offset(int l) const {
  Eigen::Index offset = 0;
  for (int k = 0; k < l; ++k) offset += layer_size(k);
  return offset;
}

Eigen::Index ModelSpec::parameter_count() const { return layer_offset(num_layers()); }

ParamVector build_model(const ModelSpec& spec, std::uint64_t seed) {
  spec.validate();
  ParamVector params = ParamVector::Zero(spec.parameter_count());
  Rng rng = make_rng(seed, 0x6e6574);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (int l = 0; l < spec.num_layers(); ++l) {
    const double gain = l == 0 ? 1.0 : 2.0;
    const double scale = std::sqrt(gain / spec.layer_widths[l]);
    const Eigen::Index count = static_cast<Eigen::Index>(spec.layer_widths[l]) * spec.layer_widths[l + 1];
    double* w = params.data() + spec.layer_offset(l);
    for (Eigen::Index i = 0; i < count; ++i) w[i] = scale * normal(rng);
  }
  return params;
}

Eigen::MatrixXd forward(const ModelSpec& spec, const ParamVector& params,
                        const Eigen::MatrixXd& inputs) {
  spec.validate();
  if (params.size() != spec.parameter_count()) throw DimensionError("parameter length mismatch");
  if (inputs.cols() != spec.input_width()) throw DimensionError("input width mismatch");
  return run_forward(spec, params, inputs).pre.back();
}

Eigen::MatrixXd hidden_preactivations(const ModelSpec& spec, const ParamVector& params,
                                      const Eigen::MatrixXd& inputs, int layer) {
  spec.validate();
  if (layer < 0 || layer >= spec.num_layers() - 1) throw ConfigError("not a hidden layer");
  if (params.size() != spec.parameter_count()) throw DimensionError("parameter length mismatch");
  if (inputs.cols() != spec.input_width()) throw DimensionError("input width mismatch");
  return run_forward(spec, params, inputs).pre[layer];
}

double loss(const ModelSpec& spec, const ParamVector& params, const Batch& batch) {
  check_inputs(spec, params, batch);
  const ForwardCache cache = run_forward(spec, params, batch.inputs);
  return output_loss(spec, cache.pre.back(), batch, nullptr);
}

double gradient_into(const ModelSpec& spec, const ParamVector& params, const Batch& batch,
                     ParamVector& grad) {
  check_inputs(spec, params, batch);
  const ForwardCache cache = run_forward(spec, params, batch.inputs);
  Eigen::MatrixXd delta;
  const double value = output_loss(spec, cache.pre.back(), batch, &delta);
  if (!std::isfinite(value) || !delta.allFinite())
    throw NumericError("non-finite loss", "layer " + std::to_string(spec.num_layers() - 1));

  grad.resize(spec.parameter_count());
  for (int l = spec.num_layers() - 1; l >= 0; --l) {
    const Eigen::MatrixXd& z_in = l == 0 ? batch.inputs : cache.post[l - 1];
    const Eigen::Index w_in = spec.layer_widths[l];
    const Eigen::Index w_out = spec.layer_widths[l + 1];
    Weights grad_w(grad.data() + spec.layer_offset(l), w_out, w_in);
    grad_w.noalias() = delta.transpose() * z_in;
    Eigen::Map<Eigen::VectorXd>(grad.data() + spec.layer_offset(l) + w_in * w_out, w_out) =
        delta.colwise().sum().transpose();
    if (l > 0) {
      Eigen::MatrixXd dz = delta * weights(spec, params, l);
      delta = (cache.pre[l - 1].array() > 0.0).select(dz, 0.0);
      if (!delta.allFinite())
        throw NumericError("non-finite backward signal in layer " + std::to_string(l - 1),
                           "layer " + std::to_string(l - 1));
    }
  }
  return value;
}

LossAndGradient gradient(const ModelSpec& spec, const ParamVector& params, const Batch& batch) {
  LossAndGradient result;
  result.loss = gradient_into(spec, params, batch, result.grad);
  return result;
}

std::vector<ReluUnitRecord> relu_introspect(const ModelSpec& spec, const ParamVector& params,
                                            const Batch& batch, double psi) {
  if (!(psi > 0.0)) throw ConfigError("relu_introspect needs psi > 0");
  check_inputs(spec, params, batch);
  const int num_layers = spec.num_layers();
  const ForwardCache cache = run_forward(spec, params, batch.inputs);

  // dL/dz for every hidden layer from one full backward pass.
  std::vector<Eigen::MatrixXd> dL_dz(num_layers - 1);
  {
    Eigen::MatrixXd delta;
    output_loss(spec, cache.pre.back(), batch, &delta);
    for (int l = num_layers - 1; l > 0; --l) {
      dL_dz[l - 1] = delta * weights(spec, params, l);
      delta = (cache.pre[l - 1].array() > 0.0).select(dL_dz[l - 1], 0.0);
    }
  }

  std::vector<ReluUnitRecord> records;
  const Eigen::Index d = spec.parameter_count();
  for (int h = 0; h < num_layers - 1; ++h) {
    const int width = spec.layer_widths[h + 1];
    for (int j = 0; j < width; ++j) {
      for (Eigen::Index s = 0; s < batch.size(); ++s) {
        const double y = cache.pre[h](s, j);
        if (!(std::abs(y) < psi)) continue;
        ReluUnitRecord rec;
        rec.unit_id = {h, j, static_cast<int>(s)};
        rec.y = y;
        rec.dL_dz = dL_dz[h](s, j);
        rec.grad_y = ParamVector::Zero(d);

        // Seed: y = W_h[j,:] . z_in + b_h[j].
        const Eigen::Index w_in = spec.layer_widths[h];
        const Eigen::Index off = spec.layer_offset(h);
        const Eigen::RowVectorXd z_in =
            h == 0 ? Eigen::RowVectorXd(batch.inputs.row(s)) : Eigen::RowVectorXd(cache.post[h - 1].row(s));
        rec.grad_y.segment(off + j * w_in, w_in) = z_in.transpose();
        rec.grad_y[off + w_in * width + j] = 1.0;

        Eigen::RowVectorXd dz = weights(spec, params, h).row(j);
        for (int k = h - 1; k >= 0; --k) {
          const Eigen::RowVectorXd dy =
              (cache.pre[k].row(s).array() > 0.0).select(dz, 0.0);
          const Eigen::Index k_in = spec.layer_widths[k];
          const Eigen::Index k_out = spec.layer_widths[k + 1];
          const Eigen::RowVectorXd k_z =
              k == 0 ? Eigen::RowVectorXd(batch.inputs.row(s)) : Eigen::RowVectorXd(cache.post[k - 1].row(s));
          Weights gw(rec.grad_y.data() + spec.layer_offset(k), k_out, k_in);
          gw.noalias() = dy.transpose() * k_z;
          rec.grad_y.segment(spec.layer_offset(k) + k_in * k_out, k_out) = dy.transpose();
          if (k > 0) dz = dy * weights(spec, params, k);
        }
        if (!rec.grad_y.allFinite())
          throw NumericError("non-finite pre-activation gradient", "layer " + std::to_string(h));
        records.push_back(std::move(rec));
      }
    }
  }
  return records;
}

GradientOracle make_gradient_oracle(const ModelSpec& spec, Batch batch) {
  return [spec, batch = std::move(batch)](const ParamVector& theta, ParamVector& grad) {
    gradient_into(spec, theta, batch, grad);
  };
}

}  // namespace alice
