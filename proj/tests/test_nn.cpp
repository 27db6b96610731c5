#include <gtest/gtest.h>

#include <cmath>

#include "qadb/data.hpp"
#include "qadb/nn.hpp"

using namespace qadb;

namespace {

ModelShape small_shape(int n_qubits = 2, int n_classes = 2) {
  ModelShape s;
  s.n_qubits = n_qubits;
  s.n_classes = n_classes;
  return s;
}

}  // namespace

TEST(Model, ParameterShapesFollowArchitecture) {
  const HybridModel m = init_hybrid_model(small_shape(3, 2), 1);
  EXPECT_EQ(m.classical.conv1_weight.dims(), (Shape{8, 1, 3, 3}));
  EXPECT_EQ(m.classical.conv2_weight.dims(), (Shape{16, 8, 3, 3}));
  EXPECT_EQ(m.classical.fc1_weight.dims(), (Shape{400, 64}));
  EXPECT_EQ(m.classical.fc2_weight.dims(), (Shape{64, 3}));
  EXPECT_EQ(m.head.weight.dims(), (Shape{6, 2}));
  EXPECT_EQ(m.theta.size(), 1);
  EXPECT_EQ(m.phi.size(), 1);
  EXPECT_EQ(parameter_count(m), 80 + 1168 + 25664 + 195 + 2 + 14);
  EXPECT_NO_THROW(check_model(m));
}

TEST(Model, PerQubitAnglesChangeAngleShapes) {
  ModelShape s = small_shape(3, 2);
  s.per_qubit_angles = true;
  const HybridModel m = init_hybrid_model(s, 1);
  EXPECT_EQ(m.theta.size(), 2);
  EXPECT_EQ(m.phi.size(), 1);
}

TEST(Model, InitIsSeededAndBounded) {
  const HybridModel a = init_hybrid_model(small_shape(), 5), b = init_hybrid_model(small_shape(), 5);
  EXPECT_EQ(parameter_map(a), parameter_map(b));
  EXPECT_NE(parameter_map(a), parameter_map(init_hybrid_model(small_shape(), 6)));
  EXPECT_LE(a.classical.fc1_weight.data().cwiseAbs().maxCoeff(), 1 / std::sqrt(400.0));
  EXPECT_LE(std::abs(a.theta[0]), M_PI);
}

TEST(Model, CheckModelRejectsWrongShape) {
  HybridModel m = init_hybrid_model(small_shape(), 1);
  m.head.bias = Tensor({3});
  EXPECT_THROW(check_model(m), ShapeError);
}

TEST(Model, ForwardGivesNormalizedLogProbs) {
  const HybridModel m = init_hybrid_model(small_shape(2, 3), 2);
  const Dataset d = synthetic_digits(1, 5, 3);
  const Tensor lp = forward_hybrid(m, d.images);
  ASSERT_EQ(lp.dims(), (Shape{5, 3}));
  for (Index r = 0; r < 5; ++r) EXPECT_NEAR(lp.matrix(5, 3).row(r).array().exp().sum(), 1.0, 1e-12);
}

TEST(Model, ForwardRejectsBadInput) {
  const HybridModel m = init_hybrid_model(small_shape(), 2);
  EXPECT_THROW(forward_hybrid(m, Tensor({2, 1, 27, 28})), ShapeError);
  EXPECT_THROW(forward_hybrid(m, Tensor::full({1, 1, 28, 28}, 1.5)), ValidationError);
}

TEST(Loss, NllMatchesDefinition) {
  const Tensor lp({2, 2}, {std::log(0.25), std::log(0.75), std::log(0.5), std::log(0.5)});
  EXPECT_NEAR(nll_loss(lp, {1, 0}), -(std::log(0.75) + std::log(0.5)) / 2, 1e-15);
  EXPECT_THROW(nll_loss(lp, {1, 2}), ValidationError);
}

TEST(Loss, GradientsMatchFiniteDifferencesOnHead) {
  const HybridModel m = init_hybrid_model(small_shape(3, 2), 3);
  const Dataset d = synthetic_digits(4, 4, 2);
  const auto vg = loss_and_gradients(m, d.images, d.labels);
  const double h = 1e-5;
  for (const char* name : {"head.weight", "quantum.theta", "quantum.phi", "fc2.bias"}) {
    const Tensor& g = vg.gradients.at(name);
    for (Index i = 0; i < std::min<Index>(g.size(), 4); ++i) {
      auto shifted = [&](double delta) {
        HybridModel c = m;
        for_each_parameter(c, [&](const char* n, Tensor& t) {
          if (std::string(n) == name) t[i] += delta;
        });
        return nll_loss(forward_hybrid(c, d.images), d.labels);
      };
      const double fd = (shifted(h) - shifted(-h)) / (2 * h);
      EXPECT_NEAR(g[i], fd, 1e-7 * std::max(1.0, std::abs(fd))) << name << "[" << i << "]";
    }
  }
}

TEST(Adam, MatchesScalarReference) {
  TrainConfig cfg;
  cfg.learning_rate = 0.1;
  std::map<std::string, Tensor> params{{"w", Tensor({2}, {1.0, -2.0})}};
  AdamState state;
  const std::vector<std::array<double, 2>> grads = {{0.5, -1.0}, {0.25, 3.0}, {-1.0, 0.0}};
  // Hand-rolled reference, element by element.
  double w[2] = {1.0, -2.0}, m[2] = {0, 0}, v[2] = {0, 0};
  for (std::size_t t = 0; t < grads.size(); ++t) {
    adam_step(params, {{"w", Tensor({2}, {grads[t][0], grads[t][1]})}}, state, cfg);
    for (int i = 0; i < 2; ++i) {
      m[i] = 0.9 * m[i] + 0.1 * grads[t][i];
      v[i] = 0.999 * v[i] + 0.001 * grads[t][i] * grads[t][i];
      const double mh = m[i] / (1 - std::pow(0.9, t + 1.0)), vh = v[i] / (1 - std::pow(0.999, t + 1.0));
      w[i] -= 0.1 * mh / (std::sqrt(vh) + 1e-8);
      EXPECT_NEAR(params.at("w")[i], w[i], 1e-15);
    }
  }
  EXPECT_EQ(state.t, 3);
}

TEST(Adam, FirstStepMovesByLearningRate) {
  TrainConfig cfg;
  std::map<std::string, Tensor> params{{"w", Tensor({1}, {0.0})}};
  AdamState state;
  adam_step(params, {{"w", Tensor({1}, {42.0})}}, state, cfg);
  EXPECT_NEAR(params.at("w")[0], -1e-3, 1e-12);
}

TEST(Adam, RejectsMissingGradient) {
  std::map<std::string, Tensor> params{{"w", Tensor({1})}};
  AdamState state;
  EXPECT_THROW(adam_step(params, {}, state, TrainConfig{}), ValidationError);
}

TEST(TrainConfig, AcceptsTableFourSettings) {
  TrainConfig cfg;
  cfg.batch_size = 64;
  cfg.epochs = 10;
  cfg.learning_rate = 0.001;
  EXPECT_NO_THROW(cfg.validate());
  cfg.learning_rate = 0;
  EXPECT_THROW(cfg.validate(), ValidationError);
}

TEST(Train, ZeroEpochsLeavesModelUnchanged) {
  const HybridModel m = init_hybrid_model(small_shape(), 1);
  TrainConfig cfg;
  cfg.epochs = 0;
  const auto r = train(m, synthetic_digits(1, 10, 2), cfg);
  EXPECT_EQ(parameter_map(r.model), parameter_map(m));
  EXPECT_TRUE(r.loss_curve.empty());
}

TEST(Train, LearnsSyntheticDigits) {
  TrainConfig cfg;
  cfg.epochs = 4;
  cfg.batch_size = 16;
  cfg.learning_rate = 0.01;
  const auto r = train(init_hybrid_model(small_shape(), 3), synthetic_digits(1, 256, 2), cfg);
  ASSERT_EQ(r.loss_curve.size(), 4u);
  EXPECT_LT(r.loss_curve.back(), r.loss_curve.front());
  EXPECT_GE(evaluate_accuracy(r.model, synthetic_digits(2, 200, 2)).accuracy, 0.9);
}

TEST(Train, IsDeterministicUnderSeed) {
  TrainConfig cfg;
  cfg.epochs = 1;
  cfg.batch_size = 8;
  cfg.seed = 9;
  const Dataset d = synthetic_digits(1, 40, 2);
  const auto a = train(init_hybrid_model(small_shape(), 3), d, cfg);
  const auto b = train(init_hybrid_model(small_shape(), 3), d, cfg);
  EXPECT_EQ(parameter_map(a.model), parameter_map(b.model));
  EXPECT_EQ(a.loss_curve, b.loss_curve);
}

TEST(Train, RejectsOutOfRangeLabels) {
  Dataset d = synthetic_digits(1, 4, 2);
  d.labels[0] = 5;
  EXPECT_THROW(train(init_hybrid_model(small_shape(), 1), d, TrainConfig{}), ValidationError);
}

TEST(Evaluate, AccuracyAndLossMatchForward) {
  const HybridModel m = init_hybrid_model(small_shape(), 4);
  const Dataset d = synthetic_digits(5, 300, 2);
  const auto r = evaluate_accuracy(m, d);
  const Tensor lp = forward_hybrid(m, d.images);
  Index correct = 0;
  for (Index i = 0; i < d.size(); ++i) {
    const auto row = lp.matrix(d.size(), 2).row(i);
    if ((row(1) > row(0) ? 1 : 0) == d.labels[static_cast<std::size_t>(i)]) ++correct;
  }
  EXPECT_DOUBLE_EQ(r.accuracy, static_cast<double>(correct) / 300.0);
  EXPECT_NEAR(r.mean_loss, nll_loss(lp, d.labels), 1e-12);
}

TEST(Classifier, LogitsVjpMatchesFiniteDifferences) {
  const HybridModel m = init_hybrid_model(small_shape(), 6);
  const HybridClassifier clf(m, 2);
  // Keep pixels away from the [0,1] edges so both shifts stay valid.
  Tensor x = synthetic_digits(7, 3, 2).images;
  x.data() = x.data() * 0.5 + Tensor::Vector::Constant(x.size(), 0.25);
  const Tensor up({3, 2}, {1, -1, 0.5, 2, -1, 0});
  const Tensor g = clf.logits_vjp(x, up);
  ASSERT_EQ(g.dims(), x.dims());
  const double h = 1e-5;
  for (Index i : {Index{100}, Index{400}, Index{1000}, Index{2000}}) {
    Tensor xp = x, xm = x;
    xp[i] += h;
    xm[i] -= h;
    const double fd = (clf.logits(xp).data().dot(up.data()) - clf.logits(xm).data().dot(up.data())) / (2 * h);
    EXPECT_NEAR(g[i], fd, 1e-7);
  }
}
