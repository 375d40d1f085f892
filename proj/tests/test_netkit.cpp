#include <cmath>
#include <limits>

#include "alice/netkit.hpp"
#include "doctest.h"
#include "test_util.hpp"

using namespace alice;

namespace {

double fd_component(const ModelSpec& spec, const ParamVector& p, const Batch& b, Eigen::Index i,
                    double h) {
  ParamVector plus = p, minus = p;
  plus[i] += h;
  minus[i] -= h;
  return (loss(spec, plus, b) - loss(spec, minus, b)) / (2 * h);
}

}  // namespace

TEST_CASE("parameter count and layout") {
  ModelSpec spec{{2, 3, 1}};
  CHECK(spec.parameter_count() == 13);
  CHECK(spec.layer_offset(0) == 0);
  CHECK(spec.layer_offset(1) == 9);
  CHECK(spec.layer_size(1) == 4);
  CHECK(build_model(spec, 5).size() == 13);
}

TEST_CASE("invalid widths are rejected") {
  CHECK_THROWS_AS(ModelSpec({{4, 0, 1}}).validate(), ConfigError);
  CHECK_THROWS_AS(ModelSpec({{4, 1}}).validate(), ConfigError);
  CHECK_THROWS_AS(build_model(ModelSpec{{4, 0, 1}}, 1), ConfigError);
}

TEST_CASE("initialization is deterministic per seed") {
  ModelSpec spec{{5, 7, 7, 3}};
  CHECK(build_model(spec, 11) == build_model(spec, 11));
  CHECK(build_model(spec, 11) != build_model(spec, 12));
}

TEST_CASE("loss kind names round trip") {
  for (LossKind k : {LossKind::MeanSquaredError, LossKind::SoftmaxCrossEntropy})
    CHECK(loss_kind_from_string(to_string(k)) == k);
  CHECK_THROWS_AS(loss_kind_from_string("hinge"), ConfigError);
}

TEST_CASE("MSE of a zero network on zero targets is zero") {
  ModelSpec spec{{3, 4, 2}};
  Batch b = testutil::random_batch(spec, 5, 1);
  b.targets.setZero();
  const ParamVector p = ParamVector::Zero(spec.parameter_count());
  CHECK(loss(spec, p, b) == 0.0);
  const LossAndGradient lg = gradient(spec, p, b);
  CHECK(lg.loss == 0.0);
  CHECK(lg.grad.isZero(0.0));
}

TEST_CASE("MSE matches a hand computation") {
  // [2,1,1]: y = w1.x + b1, z = relu(y), out = w2 z + b2.
  ModelSpec spec{{2, 1, 1}};
  ParamVector p(5);
  p << 1.0, 2.0, 0.5, 3.0, -1.0;  // w1 = (1,2), b1 = 0.5, w2 = 3, b2 = -1
  Batch b;
  b.inputs.resize(2, 2);
  b.inputs << 1.0, 0.0, 0.0, 1.0;
  b.targets.resize(2, 1);
  b.targets << 1.0, 2.0;
  // sample 1: y = 1.5, out = 3.5, err 2.5; sample 2: y = 2.5, out = 6.5, err 4.5.
  CHECK(loss(spec, p, b) == doctest::Approx((2.5 * 2.5 + 4.5 * 4.5) / 2.0).epsilon(1e-15));
}

TEST_CASE("cross-entropy with uniform logits is ln k") {
  ModelSpec spec{{3, 4, 5}, LossKind::SoftmaxCrossEntropy};
  Batch b = testutil::random_batch(spec, 7, 2);
  const ParamVector p = ParamVector::Zero(spec.parameter_count());
  CHECK(loss(spec, p, b) == doctest::Approx(std::log(5.0)).epsilon(1e-14));
}

TEST_CASE("loss is nonnegative") {
  for (LossKind kind : {LossKind::MeanSquaredError, LossKind::SoftmaxCrossEntropy}) {
    ModelSpec spec{{4, 6, 3}, kind};
    for (std::uint64_t s = 0; s < 10; ++s)
      CHECK(loss(spec, testutil::random_params(spec, s), testutil::random_batch(spec, 6, s)) >= 0.0);
  }
}

TEST_CASE("gradient matches central differences at smooth points") {
  for (LossKind kind : {LossKind::MeanSquaredError, LossKind::SoftmaxCrossEntropy}) {
    ModelSpec spec{{3, 5, 4, 2}, kind};
    for (std::uint64_t s = 0; s < 5; ++s) {
      const ParamVector p = testutil::random_params(spec, s);
      const Batch b = testutil::random_batch(spec, 4, s + 100);
      const LossAndGradient lg = gradient(spec, p, b);
      CHECK(lg.loss == doctest::Approx(loss(spec, p, b)).epsilon(1e-14));
      const double h = 1e-5;
      ParamVector fd(p.size());
      for (Eigen::Index i = 0; i < p.size(); ++i) fd[i] = fd_component(spec, p, b, i, h);
      CHECK((fd - lg.grad).norm() / lg.grad.norm() < 1e-6);
    }
  }
}

TEST_CASE("gradient_into reuses the buffer and agrees with gradient") {
  ModelSpec spec{{3, 4, 2}};
  const ParamVector p = testutil::random_params(spec, 3);
  const Batch b = testutil::random_batch(spec, 6, 3);
  ParamVector buf;
  const double l = gradient_into(spec, p, b, buf);
  const LossAndGradient lg = gradient(spec, p, b);
  CHECK(l == lg.loss);
  CHECK(buf == lg.grad);
}

TEST_CASE("ReLU derivative at exactly zero is zero") {
  // The single hidden unit sits at y = 0 exactly; its bias gradient must match
  // the one-sided difference taken from the inactive side.
  ModelSpec spec{{1, 1, 1}};
  ParamVector p(4);
  p << 1.0, -2.0, 1.0, 0.0;  // y = x - 2, out = z
  Batch b;
  b.inputs = Eigen::MatrixXd::Constant(1, 1, 2.0);
  b.targets = Eigen::MatrixXd::Constant(1, 1, 3.0);
  const LossAndGradient lg = gradient(spec, p, b);
  const double h = 1e-6;
  ParamVector below = p;
  below[1] -= h;
  const double one_sided = (loss(spec, p, b) - loss(spec, below, b)) / h;
  CHECK(one_sided == 0.0);
  CHECK(lg.grad[0] == 0.0);
  CHECK(lg.grad[1] == 0.0);
  CHECK(lg.grad[2] == 0.0);
}

TEST_CASE("non-finite values raise NumericError naming the layer") {
  ModelSpec spec{{2, 3, 1}};
  ParamVector p = testutil::random_params(spec, 1);
  p[spec.layer_offset(1)] = std::numeric_limits<double>::infinity();
  Batch b = testutil::random_batch(spec, 3, 1);
  b.inputs.setConstant(1.0);
  p[spec.layer_offset(0) + 6] = 5.0;  // keep hidden unit 0 active
  try {
    gradient(spec, p, b);
    FAIL("expected NumericError");
  } catch (const NumericError& e) {
    CHECK(e.where().find("layer") != std::string::npos);
  }
  ParamVector q = testutil::random_params(spec, 1);
  q[0] = std::numeric_limits<double>::quiet_NaN();
  try {
    loss(spec, q, b);
    FAIL("expected NumericError");
  } catch (const NumericError& e) {
    CHECK(e.where() == "layer 0");
  }
}

TEST_CASE("dimension mismatches are rejected") {
  ModelSpec spec{{3, 4, 2}};
  const ParamVector p = testutil::random_params(spec, 1);
  Batch b = testutil::random_batch(spec, 4, 1);
  CHECK_THROWS_AS(loss(spec, ParamVector::Zero(5), b), DimensionError);
  Batch wide = b;
  wide.inputs = Eigen::MatrixXd::Zero(4, 5);
  CHECK_THROWS_AS(gradient(spec, p, wide), DimensionError);
  Batch bad_targets = b;
  bad_targets.targets = Eigen::MatrixXd::Zero(4, 3);
  CHECK_THROWS_AS(loss(spec, p, bad_targets), DimensionError);
  ModelSpec ce{{3, 4, 2}, LossKind::SoftmaxCrossEntropy};
  Batch bad_labels = b;
  bad_labels.labels = {0, 1, 2, 0};
  CHECK_THROWS_AS(loss(ce, p, bad_labels), DimensionError);
  CHECK_THROWS_AS(forward(spec, p, wide.inputs), DimensionError);
}

TEST_CASE("introspection with infinite psi returns every unit") {
  ModelSpec spec{{3, 4, 5, 2}};
  const ParamVector p = testutil::random_params(spec, 4);
  const Batch b = testutil::random_batch(spec, 6, 4);
  const auto recs = relu_introspect(spec, p, b, std::numeric_limits<double>::infinity());
  CHECK(recs.size() == (4 + 5) * 6u);
  for (std::size_t i = 1; i < recs.size(); ++i) CHECK(recs[i - 1].unit_id < recs[i].unit_id);
}

TEST_CASE("introspection with a tiny psi returns nothing on generic data") {
  ModelSpec spec{{3, 4, 5, 2}};
  const ParamVector p = testutil::random_params(spec, 4);
  const Batch b = testutil::random_batch(spec, 6, 4);
  CHECK(relu_introspect(spec, p, b, 1e-300).empty());
  CHECK_THROWS_AS(relu_introspect(spec, p, b, 0.0), ConfigError);
}

TEST_CASE("introspection is monotone in psi") {
  ModelSpec spec{{3, 8, 8, 2}};
  const ParamVector p = testutil::random_params(spec, 9);
  const Batch b = testutil::random_batch(spec, 10, 9);
  std::size_t prev = 0;
  for (double psi : {0.01, 0.1, 0.5, 1.0, 5.0}) {
    const std::size_t n = relu_introspect(spec, p, b, psi).size();
    CHECK(n >= prev);
    prev = n;
  }
}

TEST_CASE("introspected y and grad_y agree with the forward pass and finite differences") {
  ModelSpec spec{{3, 4, 3, 2}, LossKind::SoftmaxCrossEntropy};
  const ParamVector p = testutil::random_params(spec, 21);
  const Batch b = testutil::random_batch(spec, 3, 21);
  const auto recs = relu_introspect(spec, p, b, std::numeric_limits<double>::infinity());
  const double h = 1e-5;
  for (const auto& r : recs) {
    const int l = r.unit_id.layer, k = r.unit_id.neuron, s = r.unit_id.sample;
    CHECK(r.y == doctest::Approx(hidden_preactivations(spec, p, b.inputs, l)(s, k)).epsilon(1e-14));
    ParamVector fd(p.size());
    for (Eigen::Index i = 0; i < p.size(); ++i) {
      ParamVector plus = p, minus = p;
      plus[i] += h;
      minus[i] -= h;
      fd[i] = (hidden_preactivations(spec, plus, b.inputs, l)(s, k) -
               hidden_preactivations(spec, minus, b.inputs, l)(s, k)) / (2 * h);
    }
    CHECK((fd - r.grad_y).norm() <= 1e-6 * std::max(1.0, r.grad_y.norm()));
  }
}

TEST_CASE("introspected dL/dz matches a finite difference through the activation") {
  // Perturbing the bias of an active unit moves z one-for-one, so dL/db = dL/dz.
  ModelSpec spec{{3, 6, 2}};
  const ParamVector p = testutil::random_params(spec, 8);
  const Batch b = testutil::random_batch(spec, 1, 8);
  const auto recs = relu_introspect(spec, p, b, std::numeric_limits<double>::infinity());
  const Eigen::Index bias0 = 3 * 6;
  for (const auto& r : recs) {
    if (r.y <= 0.0) continue;
    CHECK(r.dL_dz == doctest::Approx(fd_component(spec, p, b, bias0 + r.unit_id.neuron, 1e-6)).epsilon(1e-6));
  }
}

TEST_CASE("forward and gradient oracle") {
  ModelSpec spec{{2, 3, 2}};
  const ParamVector p = testutil::random_params(spec, 6);
  const Batch b = testutil::random_batch(spec, 5, 6);
  const Eigen::MatrixXd out = forward(spec, p, b.inputs);
  CHECK(out.rows() == 5);
  CHECK(out.cols() == 2);
  const double direct = (out - b.targets).squaredNorm() / 10.0;
  CHECK(loss(spec, p, b) == doctest::Approx(direct).epsilon(1e-14));
  const GradientOracle oracle = make_gradient_oracle(spec, b);
  ParamVector g;
  oracle(p, g);
  CHECK(g == gradient(spec, p, b).grad);
  CHECK_THROWS_AS(hidden_preactivations(spec, p, b.inputs, 1), ConfigError);
}
