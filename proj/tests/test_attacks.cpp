#include <gtest/gtest.h>

#include <cmath>

#include "support.hpp"

using namespace advcheck;
using advcheck::testing::CountingClassifier;
using advcheck::testing::gauss2_victim;
using advcheck::testing::linear_model;
using advcheck::testing::victim_bases;

namespace {

const AttackGoal kUntargeted = AttackGoal::untargeted();

ThreatModel linf(double eps, double lo = 0.0, double hi = 1.0) { return {Norm::linf, eps, lo, hi}; }
ThreatModel l2(double eps, double lo = 0.0, double hi = 1.0) { return {Norm::l2, eps, lo, hi}; }

AttackConfig single_start(std::size_t iterations = 20) {
  AttackConfig c;
  c.iterations = iterations;
  c.restarts = 1;
  return c;
}

double success_rate(const std::vector<AttackResult>& rs) {
  double s = 0;
  for (const auto& r : rs) s += r.success;
  return s / static_cast<double>(rs.size());
}

}  // namespace

TEST(GoalLoss, Examples) {
  EXPECT_NEAR(goal_loss(kUntargeted, Vec{0, 0}, 0).loss, std::log(2.0), 1e-15);
  const auto t = goal_loss(AttackGoal::targeted(2), Vec{0, 0, 50}, 0);
  EXPECT_LE(t.loss, 0.0);
  EXPECT_GT(t.loss, -1e-15);
  EXPECT_THROW(goal_loss(AttackGoal::targeted(1), Vec{0, 0}, 1), ArgumentError);
}

TEST(GoalLoss, GradientsAreConsistent) {
  Rng r(1);
  for (const AttackGoal g : {AttackGoal::untargeted(), AttackGoal::targeted(2)}) {
    for (LossKind k : {LossKind::cross_entropy, LossKind::margin}) {
      const Vec z{0.3, -1.2, 0.8};
      const auto lg = goal_loss(g, z, 0, k);
      const double err = gradient_check([&](const Vec& v) { return goal_loss(g, v, 0, k).loss; }, z, lg.dlogits);
      EXPECT_LT(err, 1e-6);
    }
  }
}

TEST(GoalLoss, TargetedSuccessImpliesUntargeted) {
  const AttackGoal t = AttackGoal::targeted(2);
  for (std::size_t y = 0; y < 2; ++y)
    for (std::size_t pred = 0; pred < 3; ++pred)
      if (t.satisfied(pred, y)) EXPECT_TRUE(kUntargeted.satisfied(pred, y));
  EXPECT_FALSE(kUntargeted.satisfied(kAbstain, 0));
}

TEST(Fgsm, LinearClosedForm) {
  const auto m = linear_model(Vec{1, -2}, 0.0);
  Rng r(2);
  const AttackResult a = fgsm(*m, linf(0.1), kUntargeted, Vec{0.9, 0.2}, 0, r);
  EXPECT_NEAR(a.final_x[0], 0.8, 1e-15);
  EXPECT_NEAR(a.final_x[1], 0.3, 1e-15);
  EXPECT_NEAR(dot(Vec{1, -2}, a.final_x), 0.2, 1e-12);
  EXPECT_FALSE(a.success);
  EXPECT_EQ(a.iterations, 1u);
  EXPECT_LE(a.queries, 2u);
}

TEST(Fgsm, ZeroEpsilonAndZeroGradient) {
  const auto m = linear_model(Vec{1, -2}, 0.0);
  Rng r(3);
  const AttackResult a = fgsm(*m, linf(0.0), kUntargeted, Vec{0.9, 0.2}, 0, r);
  EXPECT_EQ(a.final_x, (Vec{0.9, 0.2}));
  EXPECT_FALSE(a.success);
  const AttackResult wrong = fgsm(*m, linf(0.0), kUntargeted, Vec{0.9, 0.2}, 1, r);
  EXPECT_TRUE(wrong.success);

  const auto sat = make_zoo_model("mlp+saturate:1000", victim_bases());
  const auto& v = gauss2_victim();
  const AttackResult z = fgsm(*sat, linf(0.3), kUntargeted, v.test.inputs[0], v.test.labels[0], r);
  EXPECT_TRUE(z.has_flag("zero_gradient"));
  EXPECT_EQ(z.final_x, v.test.inputs[0]);
}

TEST(Fgsm, NeedsGradientsAndLinf) {
  const auto hard = std::make_shared<PreprocessWrapper>(linear_model(Vec{1, 1}, 0), [](const Vec& x) { return x; }, "id");
  Rng r(4);
  EXPECT_THROW(fgsm(*hard, linf(0.1), kUntargeted, Vec{0.5, 0.5}, 0, r), AttackInapplicable);
  EXPECT_THROW(fgsm(*linear_model(Vec{1, 1}, 0), l2(0.1), kUntargeted, Vec{0.5, 0.5}, 0, r), ArgumentError);
}

TEST(Pgd, LinearReachesFgsmOptimum) {
  Rng r(5);
  for (int t = 0; t < 50; ++t) {
    const Vec w{r.uniform(-2, 2), r.uniform(-2, 2), r.uniform(-2, 2)};
    const auto m = linear_model(w, r.uniform(-0.5, 0.5));
    const Vec x{r.uniform(0.2, 0.8), r.uniform(0.2, 0.8), r.uniform(0.2, 0.8)};
    const std::size_t y = m->predict(x);
    Rng a(1), b(1);
    const AttackResult one = fgsm(*m, linf(0.1), kUntargeted, x, y, a);
    const AttackResult many = pgd(*m, linf(0.1), kUntargeted, x, y, single_start(20), b);
    ASSERT_NEAR(*many.final_loss, *one.final_loss, 1e-9);
  }
}

TEST(Pgd, MoreRestartsNeverLoseExamples) {
  const auto m = make_zoo_model("mlp", victim_bases());
  const auto& v = gauss2_victim();
  AttackConfig few = single_start(10);
  few.restarts = 2;
  few.random_first_start = true;
  AttackConfig more = few;
  more.restarts = 6;
  for (std::size_t i = 0; i < 60; ++i) {
    Rng a = Rng(3).fork(i), b = Rng(3).fork(i);
    const AttackResult s1 = pgd(*m, linf(0.12), kUntargeted, v.test.inputs[i], v.test.labels[i], few, a);
    const AttackResult s2 = pgd(*m, linf(0.12), kUntargeted, v.test.inputs[i], v.test.labels[i], more, b);
    if (s1.success) ASSERT_TRUE(s2.success) << "example " << i;
  }
}

TEST(Pgd, BeatsFgsmOnMlp) {
  const auto m = make_zoo_model("mlp", victim_bases());
  const auto& v = gauss2_victim();
  std::vector<AttackResult> p, f;
  AttackConfig cfg = single_start(100);
  for (std::size_t i = 0; i < v.test.size(); ++i) {
    Rng a = Rng(4).fork(i), b = Rng(4).fork(i);
    p.push_back(pgd(*m, linf(0.3), kUntargeted, v.test.inputs[i], v.test.labels[i], cfg, a));
    f.push_back(fgsm(*m, linf(0.3), kUntargeted, v.test.inputs[i], v.test.labels[i], b));
  }
  EXPECT_GE(success_rate(p), success_rate(f));
  EXPECT_GT(success_rate(p), 0.9);
}

TEST(Pgd, SuccessfulResultsSatisfyConstraints) {
  const auto m = make_zoo_model("mlp", victim_bases());
  const auto& v = gauss2_victim();
  for (Norm p : {Norm::linf, Norm::l2}) {
    const ThreatModel tm{p, 0.3, 0.0, 1.0};
    for (std::size_t i = 0; i < 40; ++i) {
      Rng r = Rng(5).fork(i);
      const AttackResult a = pgd(*m, tm, kUntargeted, v.test.inputs[i], v.test.labels[i], single_start(50), r);
      ASSERT_EQ(a.loss_trace.size(), a.iterations);
      if (!a.success) continue;
      ASSERT_LE(distance(tm, v.test.inputs[i], a.final_x), tm.epsilon + 1e-9);
      ASSERT_NE(m->predict(a.final_x), v.test.labels[i]);
    }
  }
}

TEST(Pgd, LossTraceMostlyImprovesOnUnmaskedModel) {
  const auto m = make_zoo_model("mlp", victim_bases());
  const auto& v = gauss2_victim();
  AttackConfig cfg = single_start(100);
  cfg.step_size = 0.01;
  std::size_t drops = 0, steps = 0;
  for (std::size_t i = 0; i < 50; ++i) {
    Rng r = Rng(6).fork(i);
    const AttackResult a = pgd(*m, linf(0.3), kUntargeted, v.test.inputs[i], v.test.labels[i], cfg, r);
    for (std::size_t t = 1; t < a.loss_trace.size(); ++t) {
      ++steps;
      drops += a.loss_trace[t] < a.loss_trace[t - 1] - 1e-12;
    }
  }
  EXPECT_LE(static_cast<double>(drops), 0.10 * static_cast<double>(steps));
}

TEST(Pgd, NoGradientIsInapplicable) {
  const auto hard = std::make_shared<PreprocessWrapper>(linear_model(Vec{1, 1}, 0), [](const Vec& x) { return x; }, "id");
  Rng r(7);
  EXPECT_THROW(pgd(*hard, linf(0.1), kUntargeted, Vec{0.5, 0.5}, 0, single_start(), r), AttackInapplicable);
}

TEST(QueryCount, MatchesInstrumentedCalls) {
  const auto counted = std::make_shared<CountingClassifier>(make_zoo_model("mlp", victim_bases()));
  const auto& v = gauss2_victim();
  const Vec& x = v.test.inputs[0];
  const std::size_t y = v.test.labels[0];
  AttackConfig cfg = single_start(15);
  cfg.restarts = 3;
  cfg.estimator_batch = 8;
  cfg.boundary_steps = 200;
  cfg.samples = 300;
  cfg.zoo_coords = 1;
  const std::vector<std::function<AttackResult(Rng&)>> attacks{
      [&](Rng& r) { return fgsm(*counted, linf(0.3), kUntargeted, x, y, r, cfg); },
      [&](Rng& r) { return pgd(*counted, linf(0.3), kUntargeted, x, y, cfg, r); },
      [&](Rng& r) { return spsa(*counted, linf(0.3), kUntargeted, x, y, cfg, r); },
      [&](Rng& r) { return nes(*counted, linf(0.3), kUntargeted, x, y, cfg, r); },
      [&](Rng& r) { return zoo_fd(*counted, linf(0.3), kUntargeted, x, y, cfg, r); },
      [&](Rng& r) { return boundary_attack(*counted, l2(0.3), kUntargeted, x, y, cfg, r); },
      [&](Rng& r) { return random_search(*counted, linf(0.3), kUntargeted, x, y, cfg, r); },
      [&](Rng& r) {
        AttackConfig md = cfg;
        md.eps_tol = 0.05;
        return min_distortion(*counted, linf(0.3), kUntargeted, x, y, md, r);
      },
  };
  for (std::size_t k = 0; k < attacks.size(); ++k) {
    counted->reset();
    Rng r(8);
    const AttackResult a = attacks[k](r);
    EXPECT_EQ(counted->calls(), a.queries + a.verify_queries) << a.attack;
  }
}

TEST(QueryCount, ZooIsTwoPerCoordinatePerIteration) {
  const auto counted = std::make_shared<CountingClassifier>(linear_model(Vec{1, -1, 0.5, 2}, 0.0));
  AttackConfig cfg = single_start(7);
  cfg.zoo_coords = 3;
  Rng r(9);
  const AttackResult a = zoo_fd(*counted, linf(0.01), kUntargeted, Vec{0.5, 0.2, 0.4, 0.6}, 0, cfg, r);
  EXPECT_EQ(a.queries, 2u * 3u * 7u);
}

TEST(MinDistortion, LinearAnalytic) {
  const auto m = linear_model(Vec{1, -2}, 0.0);
  AttackConfig cfg = single_start(20);
  cfg.eps_max = 1.0;
  Rng r(10);
  const AttackResult a = min_distortion(*m, linf(1.0, -10, 10), kUntargeted, Vec{0.5, 0.1}, 0, cfg, r);
  EXPECT_TRUE(a.success);
  EXPECT_NEAR(a.distortion, 0.1, 2e-3);
  const AttackResult b = min_distortion(*m, l2(1.0, -10, 10), kUntargeted, Vec{0.5, 0.1}, 0, cfg, r);
  EXPECT_NEAR(b.distortion, 0.3 / std::sqrt(5.0), 2e-3);
}

TEST(MinDistortion, AlreadyWrongIsZero) {
  const auto m = linear_model(Vec{1, -2}, 0.0);
  Rng r(11);
  const AttackResult a = min_distortion(*m, linf(1.0), kUntargeted, Vec{0.5, 0.1}, 1, single_start(), r);
  EXPECT_TRUE(a.success);
  EXPECT_EQ(a.distortion, 0.0);
}

TEST(MinDistortion, InsufficientAndUnboundedBudgets) {
  const auto m = linear_model(Vec{1, -2}, 0.0);
  AttackConfig cfg = single_start();
  cfg.eps_max = 0.05;
  Rng r(12);
  const AttackResult a = min_distortion(*m, linf(1.0), kUntargeted, Vec{0.5, 0.1}, 0, cfg, r);
  EXPECT_FALSE(a.success);
  EXPECT_TRUE(a.has_flag("eps_max_insufficient"));

  // A constant model can never be fooled, not even with the whole box.
  const auto constant = make_reference("linear", make_linear(1, 2, {0, 0}, {1, 0}));
  cfg.eps_max = std::numeric_limits<double>::infinity();
  EXPECT_THROW(min_distortion(*constant, linf(1.0), kUntargeted, Vec{0.5}, 0, cfg, r), UnboundedFailure);
}

TEST(MinDistortion, RerunAtEpsStarSucceeds) {
  const auto m = make_zoo_model("mlp", victim_bases());
  const auto& v = gauss2_victim();
  AttackConfig cfg = single_start(50);
  std::size_t ok = 0, n = 0;
  for (std::size_t i = 0; i < 40; ++i) {
    Rng r = Rng(13).fork(i);
    const AttackResult a = min_distortion(*m, linf(1.0), kUntargeted, v.test.inputs[i], v.test.labels[i], cfg, r);
    if (!a.success) continue;
    ++n;
    Rng again = Rng(14).fork(i);
    ok += pgd(*m, linf(a.distortion), kUntargeted, v.test.inputs[i], v.test.labels[i], cfg, again).success;
  }
  ASSERT_GT(n, 0u);
  EXPECT_GE(static_cast<double>(ok), 0.95 * static_cast<double>(n));
}

TEST(Estimators, SpsaOnQuadratic) {
  Rng r(15);
  const auto f = [](const Vec& x) { return dot(x, x); };
  const Vec g = spsa_gradient(f, Vec{1, 0}, 1000, 0.01, r);
  EXPECT_GE(g[0], 1.8);
  EXPECT_LE(g[0], 2.2);
  EXPECT_GE(g[1], -0.2);
  EXPECT_LE(g[1], 0.2);
}

TEST(Estimators, NesAlignsWithLinearGradient) {
  Rng r(16);
  const Vec w{0.3, -1.0, 2.0, 0.7};
  const auto f = [&](const Vec& x) { return dot(w, x); };
  const Vec g = nes_gradient(f, Vec{0.1, 0.2, 0.3, 0.4}, 200, 0.01, r);
  EXPECT_GT(dot(g, w) / (norm_l2(g) * norm_l2(w)), 0.9);
}

TEST(Estimators, CoordinateDifferencesExactForLinear) {
  const Vec w{0.3, -1.0, 2.0};
  const auto f = [&](const Vec& x) { return dot(w, x); };
  const std::vector<std::size_t> all{0, 1, 2};
  const Vec g = coordinate_gradient(f, Vec{0.5, 0.5, 0.5}, all, 1e-4);
  for (std::size_t i = 0; i < 3; ++i) EXPECT_NEAR(g[i], w[i], 1e-6);
}

TEST(Estimators, ZooFlagsZeroGradientOnTwoLevelQuantizer) {
  const auto q = wrap_quantize(make_zoo_model("mlp", victim_bases()), 2);
  const auto& v = gauss2_victim();
  AttackConfig cfg = single_start(10);
  Rng r(17);
  const AttackResult a = zoo_fd(*q, linf(0.3), kUntargeted, v.test.inputs[0], v.test.labels[0], cfg, r);
  EXPECT_TRUE(a.has_flag("zero_gradient"));
}

TEST(Spsa, ZeroEpsilonReturnsInput) {
  const auto m = make_zoo_model("mlp", victim_bases());
  const auto& v = gauss2_victim();
  AttackConfig cfg = single_start(5);
  cfg.estimator_batch = 4;
  Rng r(18);
  const AttackResult a = spsa(*m, linf(0.0), kUntargeted, v.test.inputs[3], v.test.labels[3], cfg, r);
  EXPECT_EQ(a.final_x, v.test.inputs[3]);
  EXPECT_FALSE(a.success);
}

TEST(Nes, CloseToPgdOnUnmaskedMlp) {
  const auto m = make_zoo_model("mlp", victim_bases());
  const auto& v = gauss2_victim();
  AttackConfig cfg = single_start(100);
  cfg.estimator_batch = 32;
  std::vector<AttackResult> a, b;
  for (std::size_t i = 0; i < 100; ++i) {
    Rng r1 = Rng(19).fork(i), r2 = Rng(19).fork(i);
    a.push_back(nes(*m, linf(0.3), kUntargeted, v.test.inputs[i], v.test.labels[i], cfg, r1));
    b.push_back(pgd(*m, linf(0.3), kUntargeted, v.test.inputs[i], v.test.labels[i], cfg, r2));
  }
  EXPECT_LE(std::abs(success_rate(a) - success_rate(b)), 0.10);
}

TEST(Boundary, LinearHalfspaceNearOptimal) {
  const Vec w{1, -2};
  const auto m = linear_model(w, 0.0);
  const Vec x{0.5, 0.1};
  Rng r(20);
  AttackConfig cfg;
  const AttackResult a = boundary_attack(*m, l2(10.0), kUntargeted, x, 0, cfg, r);
  ASSERT_TRUE(a.success);
  EXPECT_LE(norm_l2(sub(a.final_x, x)), 1.1 * 0.3 / norm_l2(w));
}

TEST(Boundary, DistanceTraceIsMonotone) {
  const auto m = linear_model(Vec{1, -2}, 0.0);
  Rng r(21);
  AttackConfig cfg;
  cfg.boundary_steps = 500;
  const AttackResult a = boundary_attack(*m, l2(10.0), kUntargeted, Vec{0.5, 0.1}, 0, cfg, r);
  for (std::size_t t = 1; t < a.loss_trace.size(); ++t) ASSERT_LE(a.loss_trace[t], a.loss_trace[t - 1]);
}

TEST(Boundary, FlagsRandomizedTargetAndInitFailure) {
  const auto& v = gauss2_victim();
  const auto noisy = make_zoo_model("mlp+noise:0.25", victim_bases());
  AttackConfig cfg;
  cfg.boundary_steps = 50;
  Rng r(22);
  const AttackResult a = boundary_attack(*noisy, l2(1.0), kUntargeted, v.test.inputs[0], v.test.labels[0], cfg, r);
  EXPECT_TRUE(a.has_flag("randomized_target"));

  const auto constant = make_reference("linear", make_linear(1, 2, {0, 0}, {1, 0}));
  EXPECT_THROW(boundary_attack(*constant, l2(1.0), kUntargeted, Vec{0.5}, 0, cfg, r), InitFailure);
}

TEST(RandomSearch, CannotBeatAnalyticBound) {
  const Vec w{1, -2};
  const auto m = linear_model(w, 0.0);
  AttackConfig cfg;
  cfg.samples = 10000;
  Rng r(23);
  // ε* = 0.1 under l-infinity at x = (0.5, 0.1).
  EXPECT_FALSE(random_search(*m, linf(0.099), kUntargeted, Vec{0.5, 0.1}, 0, cfg, r).success);
  const AttackResult hit = random_search(*m, linf(0.2), kUntargeted, Vec{0.5, 0.1}, 0, cfg, r);
  EXPECT_TRUE(hit.success);
  cfg.samples = 0;
  EXPECT_FALSE(random_search(*m, linf(0.2), kUntargeted, Vec{0.5, 0.1}, 0, cfg, r).success);
  EXPECT_TRUE(random_search(*m, linf(0.2), kUntargeted, Vec{0.5, 0.1}, 1, cfg, r).success);
}

TEST(RandomSearch, HitsAtTwiceEpsStarWithHighProbability) {
  const auto m = linear_model(Vec{1, -2}, 0.0);
  AttackConfig cfg;
  cfg.samples = 10000;
  int hits = 0;
  for (int t = 0; t < 200; ++t) {
    Rng r = Rng(24).fork(t);
    hits += random_search(*m, linf(0.2), kUntargeted, Vec{0.5, 0.1}, 0, cfg, r).success;
  }
  EXPECT_GE(hits, 198);
}

TEST(Spatial, GridArithmeticAndIdentity) {
  const GridShape grid{5, 5};
  Vec img(25, 0.0);
  img[12] = 1.0;
  const auto m = make_reference("linear", make_linear(25, 2, Vec(50, 0.0), {1, 0}));
  Rng r(25);
  const AttackResult a = spatial_bruteforce(*m, grid, linf(0), kUntargeted, img, 0, {}, r);
  EXPECT_EQ(a.queries, 1029u);
  EXPECT_FALSE(a.success);
  const AttackResult b = spatial_bruteforce(*m, grid, linf(0), kUntargeted, img, 1, {}, r);
  EXPECT_TRUE(b.success);
  ASSERT_TRUE(b.transform);
  EXPECT_EQ(b.transform->angle_deg, 0.0);
  EXPECT_EQ(rotate_translate(img, grid, 0, 0, 0, 0, 1), img);
  EXPECT_THROW(spatial_bruteforce(*m, GridShape{}, linf(0), kUntargeted, img, 0, {}, r), AttackInapplicable);
}

TEST(NoiseCurve, ZeroSigmaIsCleanAndLargeSigmaIsChance) {
  const auto m = make_zoo_model("mlp", victim_bases());
  const auto& v = gauss2_victim();
  Rng r(26);
  const auto curve = gaussian_noise_curve(*m, v.test.inputs, v.test.labels, {0.0, 10.0}, linf(0), r);
  EXPECT_DOUBLE_EQ(curve[0].mean, accuracy(v.params, v.test.inputs, v.test.labels));
  EXPECT_EQ(curve[0].stddev, 0.0);
  // Noise of σ=10 clipped to the box leaves only the corners; the model sees
  // inputs that carry no information about the label.
  const double chance_band = 0.5 + 3.0 * std::sqrt(0.25 / v.test.size());
  EXPECT_LE(curve[1].mean, chance_band + 3 * curve[1].stddev);
  EXPECT_THROW(gaussian_noise_curve(*m, v.test.inputs, v.test.labels, {1.0, 0.5}, linf(0), r), ArgumentError);
}

TEST(Eot, ZeroNoiseMatchesInner) {
  const auto base = make_zoo_model("mlp", victim_bases());
  const auto e = eot_wrap(wrap_noise(base, 0.0), 7);
  Rng r(27);
  const Vec x{0.4, 0.6};
  const Vec a = e->logits(x, &r), b = base->logits(x);
  for (std::size_t k = 0; k < a.size(); ++k) EXPECT_NEAR(a[k], b[k], 1e-12);
  EXPECT_EQ(e->query_cost(), 7u);
  EXPECT_THROW(eot_wrap(base, 0), ArgumentError);
}

TEST(Eot, AveragedGradientApproachesCleanDirection) {
  // d(w·x)/dx = w; through noise the per-draw gradient of the linear logit
  // margin is still w, so the average must land within 5%.
  const Vec w{1.0, -2.0};
  const auto base = linear_model(w, 0.0);
  const auto e = eot_wrap(wrap_noise(base, 0.25), 1000);
  Rng r(28);
  const LogitObjective margin = [](const Vec& z) {
    LossAndGrad lg;
    lg.loss = z[0] - z[1];
    lg.dlogits = {1.0, -1.0};
    return lg;
  };
  const auto g = e->input_grad(Vec{0.5, 0.5}, margin, &r);
  ASSERT_TRUE(g);
  EXPECT_LE(norm_l2(sub(g->dx, w)), 0.05 * norm_l2(w));
}

TEST(Eot, CrossEntropyGradientWithinFivePercentOfExpectation) {
  const Vec w{1.0, -2.0};
  const auto base = linear_model(w, 0.0);
  const auto noisy = wrap_noise(base, 0.05);
  const auto e = eot_wrap(noisy, 1000);
  const LogitObjective obj = [](const Vec& z) { return softmax_xent(z, 0); };
  Rng r(29);
  const auto g = e->input_grad(Vec{0.5, 0.2}, obj, &r);
  // Reference expectation from an independent large Monte-Carlo run.
  Vec ref(2, 0.0);
  Rng q(30);
  const int draws = 200000;
  for (int i = 0; i < draws; ++i) {
    const auto gi = noisy->input_grad(Vec{0.5, 0.2}, obj, &q);
    axpy(1.0 / draws, gi->dx, ref);
  }
  EXPECT_LE(norm_l2(sub(g->dx, ref)), 0.05 * norm_l2(ref));
}

TEST(Bpda, IdentityPreprocessorKeepsGradients) {
  const auto base = make_zoo_model("mlp", victim_bases());
  const auto id = std::make_shared<PreprocessWrapper>(base, [](const Vec& x) { return x; }, "identity");
  const auto b = bpda_wrap(id);
  const Vec x{0.3, 0.7};
  const LogitObjective obj = [](const Vec& z) { return softmax_xent(z, 1); };
  EXPECT_EQ(b->input_grad(x, obj)->dx, base->input_grad(x, obj)->dx);
  EXPECT_EQ(b->logits(x), id->logits(x));
}

TEST(Bpda, ForwardUnchangedAndRequiresBoundary) {
  const auto q = make_zoo_model("mlp+quantize:256", victim_bases());
  const auto b = bpda_wrap(q);
  Rng r(31);
  for (int t = 0; t < 50; ++t) {
    const Vec x{r.uniform(), r.uniform()};
    ASSERT_EQ(b->logits(x), q->logits(x));
  }
  EXPECT_THROW(bpda_wrap(make_zoo_model("mlp", victim_bases())), ArgumentError);
}

TEST(Transfer, SelfSubstituteMatchesPgd) {
  const auto m = make_zoo_model("mlp", victim_bases());
  const auto& v = gauss2_victim();
  AttackConfig cfg = single_start(50);
  cfg.confidence_iters = 0;
  for (std::size_t i = 0; i < 30; ++i) {
    Rng a = Rng(32).fork(i), b = Rng(32).fork(i).fork(1);
    const AttackResult t = transfer_attack(*m, *m, linf(0.3), kUntargeted, v.test.inputs[i], v.test.labels[i], cfg, a);
    const AttackResult p = pgd(*m, linf(0.3), kUntargeted, v.test.inputs[i], v.test.labels[i], cfg, b);
    ASSERT_EQ(t.success, p.success);
    ASSERT_EQ(t.queries, 1u);
  }
}

TEST(Transfer, UnwrappedSubstituteBeatsMaskedGradients) {
  const auto q = make_zoo_model("mlp+quantize:256", victim_bases());
  const auto inner = unwrap_all(q);
  const auto& v = gauss2_victim();
  AttackConfig cfg = single_start(100);
  std::vector<AttackResult> t, p;
  for (std::size_t i = 0; i < 100; ++i) {
    Rng a = Rng(33).fork(i), b = Rng(33).fork(i);
    t.push_back(transfer_attack(*inner, *q, linf(0.3), kUntargeted, v.test.inputs[i], v.test.labels[i], cfg, a));
    p.push_back(pgd(*q, linf(0.3), kUntargeted, v.test.inputs[i], v.test.labels[i], cfg, b));
  }
  EXPECT_GT(success_rate(t), success_rate(p));
}

TEST(Transfer, ZeroEpsilon) {
  const auto m = linear_model(Vec{1, -2}, 0.0);
  Rng r(34);
  EXPECT_FALSE(transfer_attack(*m, *m, linf(0), kUntargeted, Vec{0.9, 0.2}, 0, single_start(), r).success);
  EXPECT_TRUE(transfer_attack(*m, *m, linf(0), kUntargeted, Vec{0.9, 0.2}, 1, single_start(), r).success);
}

TEST(Ensemble, AveragesLogits) {
  const auto a = linear_model(Vec{1, 0}, 0.0), b = linear_model(Vec{0, 1}, 0.0);
  const EnsembleClassifier e({a, b});
  const Vec x{0.2, 0.6};
  EXPECT_NEAR(e.logits(x)[0], 0.4, 1e-15);
  const LogitObjective obj = [](const Vec& z) { return softmax_xent(z, 0); };
  const auto g = e.input_grad(x, obj);
  const double err = gradient_check([&](const Vec& z) { return softmax_xent(e.logits(z), 0).loss; }, x, g->dx);
  EXPECT_LT(err, 1e-6);
}
