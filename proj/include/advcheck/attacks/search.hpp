#pragma once

// Brute-force probes that cannot be fooled by gradient masking: shrinking
// random search in the threat ball, an exhaustive rotation/translation grid,
// and accuracy under Gaussian noise of growing standard deviation.

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "advcheck/attacks/common.hpp"

namespace advcheck {

// Samples the ε-ball; every adversarial hit shrinks the radius to its
// distance, so later hits must be strictly closer.
inline AttackResult random_search(const Classifier& clf, const ThreatModel& tm, const AttackGoal& goal, const Vec& x,
                                  std::size_t y, const AttackConfig& cfg, Rng& rng) {
  tm.validate();
  AttackResult r;
  r.attack = "random";
  r.seed = rng.seed();
  r.hyperparams = config_echo(cfg, tm, goal);
  r.hyperparams["samples"] = cfg.samples;

  Rng stream = rng.fork(0);
  Oracle oracle(clf, stream);
  r.final_x = x;
  if (goal.satisfied(oracle.predict(x), y)) {
    r.queries = oracle.queries();
    verify_result(r, clf, tm, goal, x, y, true, cfg.judge_votes);
    return r;
  }
  double radius = std::min(tm.epsilon, tm.box_diameter(x.size()));
  bool found = false;
  r.loss_trace.reserve(cfg.samples);
  for (std::size_t s = 0; s < cfg.samples; ++s) {
    Vec z = sample_in_ball(tm.with_epsilon(radius), x, stream);
    const double d = distance(tm, x, z);
    if ((!found || d < radius) && goal.satisfied(oracle.predict(z), y)) {
      found = true;
      radius = d;
      r.final_x = std::move(z);
    }
    r.loss_trace.push_back(found ? radius : std::numeric_limits<double>::quiet_NaN());
  }
  r.iterations = r.loss_trace.size();
  r.queries = oracle.queries();
  verify_result(r, clf, tm, goal, x, y, true, cfg.judge_votes);
  return r;
}

struct GridShape {
  std::size_t height = 0;
  std::size_t width = 0;
};

// Rotation about the image centre followed by an integer translation, sampled
// bilinearly; pixels from outside the image take the box lower bound.
inline Vec rotate_translate(const Vec& image, GridShape grid, double angle_deg, int dx, int dy, double fill_lo,
                            double fill_hi) {
  const auto h = static_cast<double>(grid.height);
  const auto w = static_cast<double>(grid.width);
  const double cy = (h - 1.0) / 2.0;
  const double cx = (w - 1.0) / 2.0;
  const double a = angle_deg * std::numbers::pi / 180.0;
  const double ca = std::cos(a);
  const double sa = std::sin(a);
  auto at = [&](long r, long c) {
    if (r < 0 || c < 0 || r >= static_cast<long>(grid.height) || c >= static_cast<long>(grid.width)) return fill_lo;
    return image[static_cast<std::size_t>(r) * grid.width + static_cast<std::size_t>(c)];
  };
  Vec out(image.size());
  for (std::size_t r = 0; r < grid.height; ++r) {
    for (std::size_t c = 0; c < grid.width; ++c) {
      // Inverse map: undo the translation, then the rotation.
      const double yy = static_cast<double>(r) - dy - cy;
      const double xx = static_cast<double>(c) - dx - cx;
      const double sy = ca * yy - sa * xx + cy;
      const double sx = sa * yy + ca * xx + cx;
      const double fy = std::floor(sy);
      const double fx = std::floor(sx);
      const double ty = sy - fy;
      const double tx = sx - fx;
      const long r0 = static_cast<long>(fy);
      const long c0 = static_cast<long>(fx);
      const double v = (1 - ty) * ((1 - tx) * at(r0, c0) + tx * at(r0, c0 + 1)) +
                       ty * ((1 - tx) * at(r0 + 1, c0) + tx * at(r0 + 1, c0 + 1));
      out[r * grid.width + c] = std::clamp(v, fill_lo, fill_hi);
    }
  }
  return out;
}

// Rotations -30..30 degrees in 3-degree steps times translations of -3..3
// pixels on each axis: 21 x 49 = 1029 queries. Among successful transforms
// the smallest rotation, then the smallest shift, is reported.
inline AttackResult spatial_bruteforce(const Classifier& clf, GridShape grid, const ThreatModel& tm,
                                       const AttackGoal& goal, const Vec& x, std::size_t y, const AttackConfig& cfg,
                                       Rng& rng) {
  if (grid.height == 0 || grid.width == 0 || grid.height * grid.width != x.size())
    throw AttackInapplicable("spatial_bruteforce: input is not declared as an HxW grid");
  AttackResult r;
  r.attack = "spatial";
  r.seed = rng.seed();
  r.hyperparams = config_echo(cfg, tm, goal);
  r.hyperparams["grid"] = {grid.height, grid.width};
  r.hyperparams["rotations_deg"] = {-30, 30, 3};
  r.hyperparams["translations_px"] = {-3, 3, 1};

  Rng stream = rng.fork(0);
  Oracle oracle(clf, stream);
  r.final_x = x;
  bool found = false;
  std::pair<int, int> best_key{0, 0};
  for (int angle = -30; angle <= 30; angle += 3) {
    for (int dy = -3; dy <= 3; ++dy) {
      for (int dx = -3; dx <= 3; ++dx) {
        Vec z = rotate_translate(x, grid, angle, dx, dy, tm.box_lo, tm.box_hi);
        const bool hit = goal.satisfied(oracle.predict(z), y);
        const std::pair<int, int> key{std::abs(angle), std::abs(dx) + std::abs(dy)};
        if (hit && (!found || key < best_key)) {
          found = true;
          best_key = key;
          r.final_x = std::move(z);
          r.transform = SpatialTransform{static_cast<double>(angle), dx, dy};
        }
        ++r.iterations;
      }
    }
  }
  r.loss_trace.assign(r.iterations, 0.0);
  r.queries = oracle.queries();
  const Judgement j = judge_prediction(clf, goal, r.final_x, y, r.seed, cfg.judge_votes);
  r.verify_queries = j.queries;
  r.abstained = j.abstained;
  r.success = found && j.goal_met;
  r.distortion = std::numeric_limits<double>::quiet_NaN();
  return r;
}

struct NoiseAccuracy {
  double sigma = 0.0;
  double mean = 0.0;
  double stddev = 0.0;
  std::size_t draws = 0;
};

// Accuracy with x + N(0, σ²I), clipped to the box, over `draws` noise draws
// per example; mean and standard deviation across draws. Abstention counts as
// an error.
inline std::vector<NoiseAccuracy> gaussian_noise_curve(const Classifier& clf, std::span<const Vec> inputs,
                                                       std::span<const std::size_t> labels,
                                                       const std::vector<double>& sigmas, const ThreatModel& box,
                                                       Rng& rng, std::size_t draws = 10) {
  if (inputs.size() != labels.size()) throw ArgumentError("gaussian_noise_curve: inputs and labels differ in length");
  if (!std::is_sorted(sigmas.begin(), sigmas.end())) throw ArgumentError("gaussian_noise_curve: sigmas must be sorted");
  if (draws == 0) throw ArgumentError("gaussian_noise_curve: draws must be positive");
  std::vector<NoiseAccuracy> curve;
  for (std::size_t s = 0; s < sigmas.size(); ++s) {
    std::vector<double> per_draw(draws, 0.0);
    for (std::size_t i = 0; i < inputs.size(); ++i) {
      Rng stream = rng.fork(s).fork(i);
      for (std::size_t d = 0; d < draws; ++d) {
        Vec z = inputs[i];
        for (double& v : z) v += sigmas[s] * stream.normal();
        z = clip_to_box(box, z);
        per_draw[d] += clf.predict(z, &stream) == labels[i];
      }
    }
    NoiseAccuracy p;
    p.sigma = sigmas[s];
    p.draws = draws;
    const double n = static_cast<double>(std::max<std::size_t>(1, inputs.size()));
    for (double& a : per_draw) a /= n;
    p.mean = std::accumulate(per_draw.begin(), per_draw.end(), 0.0) / static_cast<double>(draws);
    double var = 0.0;
    for (double a : per_draw) var += (a - p.mean) * (a - p.mean);
    p.stddev = draws > 1 ? std::sqrt(var / static_cast<double>(draws - 1)) : 0.0;
    curve.push_back(p);
  }
  return curve;
}

}  // namespace advcheck
