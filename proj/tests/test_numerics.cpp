#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "support.hpp"

using namespace advcheck;

namespace {

double sq_norm(const Vec& x) { return dot(x, x); }

MlpParams random_mlp(Rng& rng, std::size_t in, std::size_t hidden, std::size_t classes, Activation act) {
  MlpParams p = init_mlp(in, hidden, classes, act, rng);
  for (Dense& d : p.layers)
    for (double& b : d.bias) b = rng.normal() * 0.5;
  return p;
}

}  // namespace

TEST(Rng, SameSeedSameSequence) {
  Rng a(42), b(42);
  for (int i = 0; i < 1000; ++i) ASSERT_EQ(a.next_u64(), b.next_u64());
}

TEST(Rng, ForkIsPureAndDistinct) {
  Rng parent(9);
  Rng c1 = parent.fork(3);
  parent.next_u64();
  parent.next_u64();
  Rng c2 = parent.fork(3);
  EXPECT_EQ(c1.seed(), c2.seed());
  for (int i = 0; i < 100; ++i) ASSERT_EQ(c1.next_u64(), c2.next_u64());
  EXPECT_NE(Rng(9).fork(0).seed(), Rng(9).fork(1).seed());
}

TEST(Rng, UniformAndNormalMoments) {
  Rng r(1);
  double s = 0, s2 = 0, n = 0;
  const int k = 200000;
  for (int i = 0; i < k; ++i) {
    const double u = r.uniform();
    ASSERT_GE(u, 0.0);
    ASSERT_LT(u, 1.0);
    const double z = r.normal();
    s += u;
    n += z;
    s2 += z * z;
  }
  EXPECT_NEAR(s / k, 0.5, 0.005);
  EXPECT_NEAR(n / k, 0.0, 0.01);
  EXPECT_NEAR(s2 / k, 1.0, 0.02);
}

TEST(SoftmaxXent, EqualLogitsTwoClasses) {
  const auto lg = softmax_xent(Vec{0.0, 0.0}, 0);
  EXPECT_NEAR(lg.loss, std::log(2.0), 1e-15);
  EXPECT_NEAR(lg.dlogits[0], -0.5, 1e-15);
  EXPECT_NEAR(lg.dlogits[1], 0.5, 1e-15);
}

TEST(SoftmaxXent, EqualLogitsThreeClasses) {
  EXPECT_NEAR(softmax_xent(Vec{10, 10, 10}, 2).loss, std::log(3.0), 1e-14);
}

TEST(SoftmaxXent, LargeLogitsStayFinite) {
  const auto lg = softmax_xent(Vec{1000.0, 0.0}, 0);
  EXPECT_TRUE(std::isfinite(lg.loss));
  EXPECT_GE(lg.loss, 0.0);
  EXPECT_LT(lg.loss, 1e-300);
  EXPECT_TRUE(all_finite(lg.dlogits));
  const auto wrong = softmax_xent(Vec{1000.0, 0.0}, 1);
  EXPECT_NEAR(wrong.loss, 1000.0, 1e-9);
}

TEST(SoftmaxXent, LabelOutOfRange) { EXPECT_THROW(softmax_xent(Vec{1, 2}, 2), ArgumentError); }

TEST(SoftmaxXent, GradientSumsToZero) {
  Rng r(3);
  for (int trial = 0; trial < 500; ++trial) {
    const std::size_t k = 2 + r.index(9);
    Vec z = r.normal_vec(k);
    for (double& v : z) v *= 1 + 30 * r.uniform();
    const auto lg = softmax_xent(z, r.index(k));
    double s = 0;
    for (double d : lg.dlogits) s += d;
    ASSERT_NEAR(s, 0.0, 1e-12);
  }
}

TEST(SoftmaxXent, MatchesDefinition) {
  Rng r(4);
  for (int trial = 0; trial < 100; ++trial) {
    Vec z = r.normal_vec(5);
    const std::size_t y = r.index(5);
    double naive = 0;
    for (double v : z) naive += std::exp(v);
    EXPECT_NEAR(softmax_xent(z, y).loss, std::log(naive) - z[y], 1e-12);
  }
}

TEST(Mlp, ZeroWeightsGiveBiasLogitsAndZeroDx) {
  Rng r(5);
  MlpParams p = init_mlp(3, 4, 3, Activation::relu, r);
  for (Dense& d : p.layers) std::fill(d.weight.begin(), d.weight.end(), 0.0);
  p.layers[1].bias = {0.3, -0.2, 0.1};
  const auto g = mlp_forward_backward(p, Vec{0.1, 0.7, 0.4}, 1);
  EXPECT_EQ(g.logits, (Vec{0.3, -0.2, 0.1}));
  EXPECT_TRUE(all_zero(g.dx));
}

TEST(Mlp, LinearLayerDxIsWTransposeDlogits) {
  const MlpParams p = make_linear(3, 2, {1, 2, 3, -4, 5, -6}, {0.5, -0.5});
  const Vec x{0.2, 0.4, 0.9};
  const auto g = mlp_forward_backward(p, x, 0);
  const auto lg = softmax_xent(g.logits, 0);
  for (std::size_t i = 0; i < 3; ++i) {
    const double expected = p.layers[0].w(0, i) * lg.dlogits[0] + p.layers[0].w(1, i) * lg.dlogits[1];
    EXPECT_DOUBLE_EQ(g.dx[i], expected);
  }
}

TEST(Mlp, ShapeMismatchThrows) {
  Rng r(6);
  const MlpParams p = init_mlp(3, 4, 2, Activation::relu, r);
  EXPECT_THROW(mlp_forward_backward(p, Vec{1.0, 2.0}, 0), ArgumentError);
}

TEST(Mlp, InputGradientMatchesFiniteDifferences) {
  Rng r(7);
  for (int trial = 0; trial < 100; ++trial) {
    const Activation act = trial % 2 ? Activation::sigmoid : Activation::relu;
    const std::size_t in = 2 + r.index(6), classes = 2 + r.index(3);
    const MlpParams p = random_mlp(r, in, 3 + r.index(10), classes, act);
    Vec x(in);
    for (double& v : x) v = r.uniform();
    const std::size_t y = r.index(classes);
    const auto g = mlp_forward_backward(p, x, y);
    const double err = gradient_check([&](const Vec& z) { return softmax_xent(mlp_logits(p, z), y).loss; }, x, g.dx);
    ASSERT_LT(err, 1e-4) << "trial " << trial;
  }
}

TEST(Mlp, ParameterGradientMatchesFiniteDifferences) {
  Rng r(8);
  const MlpParams p = random_mlp(r, 3, 5, 3, Activation::sigmoid);
  const Vec x{0.3, 0.6, 0.1};
  const auto g = mlp_forward_backward(p, x, 2);
  for (std::size_t l = 0; l < p.layers.size(); ++l) {
    Vec flat = p.layers[l].weight;
    auto f = [&](const Vec& w) {
      MlpParams q = p;
      q.layers[l].weight = w;
      return softmax_xent(mlp_logits(q, x), 2).loss;
    };
    EXPECT_LT(gradient_check(f, flat, g.dparams.layers[l].weight), 1e-4);
    auto fb = [&](const Vec& b) {
      MlpParams q = p;
      q.layers[l].bias = b;
      return softmax_xent(mlp_logits(q, x), 2).loss;
    };
    EXPECT_LT(gradient_check(fb, p.layers[l].bias, g.dparams.layers[l].bias), 1e-4);
  }
}

TEST(GradientCheck, Quadratic) {
  EXPECT_LT(gradient_check(sq_norm, Vec{1, 0}, Vec{2, 0}), 1e-6);
}

TEST(GradientCheck, DetectsZeroedGradient) {
  EXPECT_NEAR(gradient_check(sq_norm, Vec{1, 0}, Vec{0, 0}), 1.0, 1e-6);
}

TEST(SgdTrain, SeparableGaussiansReachHighAccuracy) {
  Rng root(11);
  Rng data = root.fork(0), init = root.fork(1), sgd = root.fork(2);
  // margin 0.6 with sigma 0.05: the class means sit 12 sigma apart.
  const Dataset d = make_gauss2(400, 0.05, 0.6, data);
  TrainOptions opt;
  opt.epochs = 50;
  const MlpParams p0 = init_mlp(2, 8, 2, Activation::relu, init);
  const MlpParams p = sgd_train(p0, d.inputs, d.labels, opt, sgd);
  EXPECT_GE(accuracy(p, d.inputs, d.labels), 0.99);
  EXPECT_LE(mean_loss(p, d.inputs, d.labels), mean_loss(p0, d.inputs, d.labels));
}

TEST(SgdTrain, ZeroEpochsReturnsInit) {
  Rng r(12);
  Rng data = r.fork(0);
  const Dataset d = make_gauss2(20, 0.1, 0.5, data);
  const MlpParams p0 = init_mlp(2, 4, 2, Activation::relu, r);
  TrainOptions opt;
  opt.epochs = 0;
  EXPECT_EQ(sgd_train(p0, d.inputs, d.labels, opt, r), p0);
}

TEST(SgdTrain, DeterministicUnderSeed) {
  Rng data(13);
  const Dataset d = make_gauss2(100, 0.1, 0.5, data);
  auto once = [&] {
    Rng init(1), sgd(2);
    TrainOptions opt;
    opt.epochs = 5;
    return encode_params(sgd_train(init_mlp(2, 6, 2, Activation::relu, init), d.inputs, d.labels, opt, sgd));
  };
  EXPECT_EQ(once(), once());
}

TEST(SgdTrain, DivergenceNamesEpoch) {
  Rng data(14);
  Dataset d = make_gauss2(50, 0.1, 0.5, data);
  for (auto& x : d.inputs) x = {x[0] * 1e150, x[1] * 1e150};
  Rng init(1), sgd(2);
  TrainOptions opt;
  opt.lr = 1e10;
  try {
    sgd_train(init_mlp(2, 4, 2, Activation::relu, init), d.inputs, d.labels, opt, sgd);
    FAIL() << "expected divergence";
  } catch (const TrainingDiverged& e) {
    EXPECT_GE(e.epoch(), 1u);
    EXPECT_NE(std::string(e.what()).find("epoch"), std::string::npos);
  }
}

TEST(SgdTrain, RejectsBadArguments) {
  Rng r(15);
  const MlpParams p0 = init_mlp(2, 4, 2, Activation::relu, r);
  const std::vector<Vec> none;
  const std::vector<std::size_t> no_labels;
  EXPECT_THROW(sgd_train(p0, none, no_labels, {}, r), ArgumentError);
  const std::vector<Vec> one{{0.5, 0.5}};
  const std::vector<std::size_t> one_label{0};
  TrainOptions opt;
  opt.lr = 0;
  EXPECT_THROW(sgd_train(p0, one, one_label, opt, r), ArgumentError);
}

TEST(Agmp, RoundTripIsExact) {
  Rng r(16);
  for (Activation act : {Activation::relu, Activation::sigmoid}) {
    const MlpParams p = random_mlp(r, 4, 7, 3, act);
    const MlpParams back = decode_params(encode_params(p));
    EXPECT_EQ(back, p);
  }
  const MlpParams lin = make_linear_binary(Vec{1, -2}, 0.25);
  EXPECT_EQ(decode_params(encode_params(lin)), lin);
}

TEST(Agmp, LayoutIsLittleEndian) {
  const std::string bytes = encode_params(make_linear_binary(Vec{1.0}, 0.0));
  ASSERT_GE(bytes.size(), 12u);
  EXPECT_EQ(bytes.substr(0, 4), "AGMP");
  EXPECT_EQ(static_cast<unsigned char>(bytes[4]), kAgmpVersion);
  EXPECT_EQ(bytes[5], 0);
  EXPECT_EQ(static_cast<unsigned char>(bytes[8]), 1u);  // one layer
}

TEST(Agmp, MalformedInputsReportOffsets) {
  const std::string good = encode_params(make_linear_binary(Vec{1, -2}, 0.0));
  try {
    decode_params("XGMP" + good.substr(4));
    FAIL();
  } catch (const FormatError& e) {
    EXPECT_EQ(e.offset(), 0u);
  }
  std::string bad_version = good;
  bad_version[4] = 9;
  try {
    decode_params(bad_version);
    FAIL();
  } catch (const FormatError& e) {
    EXPECT_EQ(e.offset(), 4u);
  }
  EXPECT_THROW(decode_params(good.substr(0, good.size() - 3)), FormatError);
  EXPECT_THROW(decode_params(good + "x"), FormatError);
}

TEST(Agmp, MissingFileIsNotFound) {
  EXPECT_THROW(load_params("/nonexistent/advcheck/model.agmp"), NotFoundError);
}
