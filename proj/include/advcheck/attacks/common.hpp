#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "advcheck/errors.hpp"
#include "advcheck/models.hpp"
#include "advcheck/numerics.hpp"
#include "advcheck/threat.hpp"

namespace advcheck {

using Json = nlohmann::ordered_json;

// ---------------------------------------------------------------------------
// Goals

struct AttackGoal {
  enum class Mode { untargeted, targeted, source_target };

  Mode mode = Mode::untargeted;
  std::size_t target = 0;
  std::size_t source = 0;

  static AttackGoal untargeted() { return {}; }
  static AttackGoal targeted(std::size_t t) { return {Mode::targeted, t, 0}; }
  static AttackGoal source_target(std::size_t s, std::size_t t) { return {Mode::source_target, t, s}; }

  // Membership of a prediction in the success set A_{x,y}. Abstention never
  // counts as success.
  bool satisfied(std::size_t predicted, std::size_t y) const {
    if (predicted == kAbstain) return false;
    switch (mode) {
      case Mode::untargeted: return predicted != y;
      case Mode::targeted: return predicted == target;
      case Mode::source_target: return y == source && predicted == target;
    }
    return false;
  }

  std::string describe() const {
    switch (mode) {
      case Mode::untargeted: return "untargeted";
      case Mode::targeted: return "targeted:" + std::to_string(target);
      case Mode::source_target: return "source_target:" + std::to_string(source) + "->" + std::to_string(target);
    }
    return "?";
  }
};

enum class LossKind { cross_entropy, margin };

inline std::string to_string(LossKind k) { return k == LossKind::margin ? "margin" : "cross_entropy"; }
inline LossKind loss_kind_from_string(const std::string& s) {
  if (s == "cross_entropy" || s == "xent" || s == "ce") return LossKind::cross_entropy;
  if (s == "margin") return LossKind::margin;
  throw ArgumentError("unknown loss '" + s + "'");
}

// Loss the attacker maximises. Untargeted: cross-entropy of the true class.
// Targeted: negative cross-entropy of the target (tends to 0 from below).
// The margin variant uses the best other logit minus the protected logit.
inline LossAndGrad goal_loss(const AttackGoal& goal, const Vec& logits, std::size_t y,
                             LossKind kind = LossKind::cross_entropy) {
  const std::size_t n = logits.size();
  if (y >= n) throw ArgumentError("goal_loss: label out of range");
  const bool toward_target = goal.mode != AttackGoal::Mode::untargeted;
  if (toward_target) {
    if (goal.target >= n) throw ArgumentError("goal_loss: target out of range");
    if (goal.target == y) throw ArgumentError("goal_loss: target equals the true label");
  }
  if (kind == LossKind::cross_entropy) {
    if (!toward_target) return softmax_xent(logits, y);
    LossAndGrad lg = softmax_xent(logits, goal.target);
    lg.loss = -lg.loss;
    for (double& d : lg.dlogits) d = -d;
    return lg;
  }
  const std::size_t keep = toward_target ? goal.target : y;
  std::size_t best = keep == 0 ? 1 : 0;
  for (std::size_t j = 0; j < n; ++j)
    if (j != keep && logits[j] > logits[best]) best = j;
  LossAndGrad lg;
  lg.dlogits.assign(n, 0.0);
  if (toward_target) {
    lg.loss = logits[keep] - logits[best];
    lg.dlogits[keep] = 1.0;
    lg.dlogits[best] = -1.0;
  } else {
    lg.loss = logits[best] - logits[keep];
    lg.dlogits[best] = 1.0;
    lg.dlogits[keep] = -1.0;
  }
  return lg;
}

// ---------------------------------------------------------------------------
// Configuration

struct AttackConfig {
  std::size_t iterations = 100;
  double step_size = -1.0;  // negative: epsilon / 4
  std::size_t restarts = 10;
  bool random_first_start = false;
  LossKind loss = LossKind::cross_entropy;

  // Gradient estimators (SPSA / NES / coordinate differences).
  std::size_t estimator_batch = 128;
  double spsa_delta = 0.01;
  double nes_sigma = 0.01;
  std::size_t zoo_coords = 128;
  double zoo_h = 1e-4;
  bool early_stop = true;

  // Minimum-distortion bisection.
  double eps_max = 1.0;
  double eps_tol = 1e-3;
  std::size_t search_depth = 60;

  // Boundary attack.
  std::size_t boundary_steps = 5000;
  std::size_t init_trials = 100;
  double spherical_step = 0.01;
  double source_step = 0.01;
  std::vector<Vec> starting_points;

  // Random search.
  std::size_t samples = 10000;

  // Spatial grid.
  std::size_t grid_h = 0;
  std::size_t grid_w = 0;

  // Transfer.
  std::size_t confidence_iters = 20;

  // Draws used to judge success on randomized models.
  std::size_t judge_votes = 25;

  double step_for(double epsilon) const { return step_size >= 0.0 ? step_size : epsilon / 4.0; }

  void validate() const {
    if (iterations < 1) throw ArgumentError("AttackConfig: iterations must be >= 1");
    if (restarts < 1) throw ArgumentError("AttackConfig: restarts must be >= 1");
    if (judge_votes < 1) throw ArgumentError("AttackConfig: judge_votes must be >= 1");
  }
};

// ---------------------------------------------------------------------------
// Results

struct SpatialTransform {
  double angle_deg = 0.0;
  int dx = 0;
  int dy = 0;
};

struct AttackResult {
  std::string attack;
  Vec final_x;
  bool success = false;
  bool abstained = false;
  double distortion = 0.0;
  std::size_t queries = 0;
  std::size_t verify_queries = 0;
  std::size_t iterations = 0;
  std::vector<double> loss_trace;
  std::optional<double> final_loss;
  std::vector<std::string> flags;
  std::optional<SpatialTransform> transform;
  Json hyperparams = Json::object();
  std::uint64_t seed = 0;

  bool has_flag(const std::string& f) const { return std::find(flags.begin(), flags.end(), f) != flags.end(); }
  void flag(const std::string& f) {
    if (!has_flag(f)) flags.push_back(f);
  }
};

// ---------------------------------------------------------------------------
// Query accounting

// Every call through the oracle costs clf.query_cost() queries.
class Oracle {
 public:
  Oracle(const Classifier& clf, Rng& rng) : clf_(clf), rng_(rng) {}

  Vec logits(const Vec& x) {
    queries_ += clf_.query_cost();
    return clf_.logits(x, &rng_);
  }

  std::size_t predict(const Vec& x) {
    queries_ += clf_.query_cost();
    return clf_.predict(x, &rng_);
  }

  std::optional<InputGradient> input_grad(const Vec& x, const LogitObjective& objective) {
    queries_ += clf_.query_cost();
    return clf_.input_grad(x, objective, &rng_);
  }

  std::size_t queries() const { return queries_; }
  const Classifier& model() const { return clf_; }
  Rng& rng() { return rng_; }

 private:
  const Classifier& clf_;
  Rng& rng_;
  std::size_t queries_ = 0;
};

// ---------------------------------------------------------------------------
// Independent success checking

struct Judgement {
  bool goal_met = false;
  bool abstained = false;
  std::size_t queries = 0;
};

// Decides the goal predicate for candidate input. Deterministic models are
// queried once; randomized ones by majority over `votes` fresh draws from a
// stream derived from `seed`.
inline Judgement judge_prediction(const Classifier& clf, const AttackGoal& goal, const Vec& candidate, std::size_t y,
                                  std::uint64_t seed, std::size_t votes) {
  Judgement j;
  if (!clf.randomness()) {
    const std::size_t pred = clf.predict(candidate, nullptr);
    j.queries = clf.query_cost();
    j.abstained = pred == kAbstain;
    j.goal_met = goal.satisfied(pred, y);
    return j;
  }
  Rng stream = Rng(seed).fork(0x6a75646765ULL);
  std::size_t wins = 0;
  std::size_t abstains = 0;
  for (std::size_t v = 0; v < votes; ++v) {
    const std::size_t pred = clf.predict(candidate, &stream);
    wins += goal.satisfied(pred, y);
    abstains += pred == kAbstain;
  }
  j.queries = votes * clf.query_cost();
  j.goal_met = 2 * wins > votes;
  j.abstained = 2 * abstains > votes;
  return j;
}

// Re-derives success from scratch: the goal predicate on `target` and, for
// bounded attacks, the threat constraint within 1e-9. Overwrites success,
// abstained, distortion and verify_queries.
inline void verify_result(AttackResult& r, const Classifier& target, const ThreatModel& tm, const AttackGoal& goal,
                          const Vec& x, std::size_t y, bool bounded, std::size_t votes) {
  r.distortion = distance(tm, x, r.final_x);
  const Judgement j = judge_prediction(target, goal, r.final_x, y, r.seed, votes);
  r.verify_queries = j.queries;
  r.abstained = j.abstained;
  bool ok = j.goal_met;
  if (bounded) ok = ok && r.distortion <= tm.epsilon + 1e-9 && in_box(tm, r.final_x);
  r.success = ok;
}

inline Json config_echo(const AttackConfig& c, const ThreatModel& tm, const AttackGoal& goal) {
  Json j;
  j["norm"] = to_string(tm.p);
  j["epsilon"] = tm.epsilon;
  j["box"] = {tm.box_lo, tm.box_hi};
  j["goal"] = goal.describe();
  j["loss"] = to_string(c.loss);
  j["judge_votes"] = c.judge_votes;
  return j;
}

}  // namespace advcheck
