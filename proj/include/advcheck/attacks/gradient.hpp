#pragma once

// White-box attacks: FGSM, PGD with random restarts, and per-example
// minimum-distortion search by bisection on the budget.

#include <cmath>
#include <limits>
#include <optional>
#include <string>

#include "advcheck/attacks/common.hpp"

namespace advcheck {

namespace detail {

inline LogitObjective objective_for(const AttackGoal& goal, std::size_t y, LossKind kind) {
  return [goal, y, kind](const Vec& logits) { return goal_loss(goal, logits, y, kind); };
}

// Steepest-ascent direction for the norm: sign for ℓ∞, unit ℓ2 otherwise.
inline Vec ascent_direction(Norm p, const Vec& g) {
  Vec d(g.size(), 0.0);
  if (p == Norm::linf) {
    for (std::size_t i = 0; i < g.size(); ++i) d[i] = sign(g[i]);
    return d;
  }
  const double n = norm_l2(g);
  if (n == 0.0 || !std::isfinite(n)) return d;
  for (std::size_t i = 0; i < g.size(); ++i) d[i] = g[i] / n;
  return d;
}

// Candidate ordering: goal-satisfying beats not, then higher loss. Equal
// candidates keep the earlier one.
struct Candidate {
  Vec x;
  double loss = -std::numeric_limits<double>::infinity();
  bool adversarial = false;
  bool set = false;

  bool offer(const Vec& cand, double l, bool adv) {
    const bool better = !set || (adv && !adversarial) || (adv == adversarial && l > loss);
    if (better) {
      x = cand;
      loss = l;
      adversarial = adv;
      set = true;
    }
    return better;
  }
};

}  // namespace detail

// One signed-gradient step of size ε. Baseline only.
inline AttackResult fgsm(const Classifier& clf, const ThreatModel& tm, const AttackGoal& goal, const Vec& x,
                         std::size_t y, Rng& rng, const AttackConfig& cfg = {}) {
  if (tm.p != Norm::linf) throw ArgumentError("fgsm: requires an l-infinity threat model");
  tm.validate();
  AttackResult r;
  r.attack = "fgsm";
  r.seed = rng.seed();
  r.hyperparams = config_echo(cfg, tm, goal);
  Oracle oracle(clf, rng);
  const auto objective = detail::objective_for(goal, y, cfg.loss);
  auto g = oracle.input_grad(x, objective);
  if (!g) throw AttackInapplicable("fgsm: model '" + clf.id() + "' exposes no input gradient");
  if (all_zero(g->dx)) r.flag("zero_gradient");
  Vec step = detail::ascent_direction(Norm::linf, g->dx);
  Vec moved = x;
  axpy(tm.epsilon, step, moved);
  r.final_x = project(tm, x, moved);
  const double loss = objective(oracle.logits(r.final_x)).loss;
  r.final_loss = loss;
  r.loss_trace = {loss};
  r.iterations = 1;
  r.queries = oracle.queries();
  verify_result(r, clf, tm, goal, x, y, true, cfg.judge_votes);
  return r;
}

// Projected gradient ascent on the goal loss with `restarts` starts. The first
// start is x itself unless random_first_start; the others are uniform in the
// ball. Restart r draws from rng.fork(r), so a run with more restarts repeats
// every start of a run with fewer.
inline AttackResult pgd(const Classifier& clf, const ThreatModel& tm, const AttackGoal& goal, const Vec& x,
                        std::size_t y, const AttackConfig& cfg, Rng& rng) {
  cfg.validate();
  tm.validate();
  const double step = cfg.step_for(tm.epsilon);
  const auto objective = detail::objective_for(goal, y, cfg.loss);

  AttackResult r;
  r.attack = "pgd";
  r.seed = rng.seed();
  r.hyperparams = config_echo(cfg, tm, goal);
  r.hyperparams["iterations"] = cfg.iterations;
  r.hyperparams["step_size"] = step;
  r.hyperparams["restarts"] = cfg.restarts;
  r.hyperparams["random_first_start"] = cfg.random_first_start;

  detail::Candidate overall;
  std::size_t overall_restart = 0;
  std::vector<double> overall_trace;
  std::size_t queries = 0;
  std::size_t grad_evals = 0;
  std::size_t zero_evals = 0;

  for (std::size_t restart = 0; restart < cfg.restarts; ++restart) {
    Rng stream = rng.fork(restart);
    Oracle oracle(clf, stream);
    Vec cur = (restart == 0 && !cfg.random_first_start) ? x : sample_in_ball(tm, x, stream);
    detail::Candidate best;
    std::vector<double> trace;
    trace.reserve(cfg.iterations);
    for (std::size_t it = 0; it < cfg.iterations; ++it) {
      auto g = oracle.input_grad(cur, objective);
      if (!g) throw AttackInapplicable("pgd: model '" + clf.id() + "' exposes no input gradient");
      ++grad_evals;
      if (all_zero(g->dx)) ++zero_evals;
      trace.push_back(g->loss);
      best.offer(cur, g->loss, goal.satisfied(argmax(g->logits), y));
      Vec next = cur;
      axpy(step, detail::ascent_direction(tm.p, g->dx), next);
      cur = project(tm, x, next);
    }
    const Vec z = oracle.logits(cur);
    best.offer(cur, objective(z).loss, goal.satisfied(argmax(z), y));
    queries += oracle.queries();
    const bool better = !overall.set || (best.adversarial && !overall.adversarial) ||
                        (best.adversarial == overall.adversarial && best.loss > overall.loss);
    if (better) {
      overall = best;
      overall_restart = restart;
      overall_trace = std::move(trace);
    }
  }

  r.final_x = overall.x;
  r.final_loss = overall.loss;
  r.loss_trace = std::move(overall_trace);
  r.iterations = cfg.iterations;
  r.queries = queries;
  r.hyperparams["best_restart"] = overall_restart;
  if (grad_evals > 0 && 2 * zero_evals >= grad_evals) r.flag("zero_gradient");
  verify_result(r, clf, tm, goal, x, y, true, cfg.judge_votes);
  return r;
}

// Smallest budget at which PGD succeeds, by bisection on ε in [0, eps_max] to
// absolute tolerance eps_tol. distortion holds that ε; final_x is the
// certificate found at it. An infinite eps_max means the whole box.
inline AttackResult min_distortion(const Classifier& clf, const ThreatModel& tm, const AttackGoal& goal,
                                   const Vec& x, std::size_t y, const AttackConfig& cfg, Rng& rng) {
  cfg.validate();
  if (!(cfg.eps_tol > 0.0)) throw ArgumentError("min_distortion: eps_tol must be positive");
  const bool unbounded = !std::isfinite(cfg.eps_max);
  double hi = unbounded ? tm.box_diameter(x.size()) : cfg.eps_max;

  AttackResult r;
  r.attack = "min_distortion";
  r.seed = rng.seed();
  r.hyperparams = config_echo(cfg, tm, goal);
  r.hyperparams["eps_max"] = unbounded ? Json(nullptr) : Json(cfg.eps_max);
  r.hyperparams["eps_tol"] = cfg.eps_tol;
  r.hyperparams["pgd_iterations"] = cfg.iterations;
  r.hyperparams["pgd_restarts"] = cfg.restarts;

  const Judgement clean = judge_prediction(clf, goal, x, y, r.seed, cfg.judge_votes);
  r.verify_queries = clean.queries;
  if (clean.goal_met) {
    r.final_x = x;
    r.success = true;
    r.distortion = 0.0;
    return r;
  }

  std::size_t queries = 0;
  auto probe = [&](double eps) {
    Rng stream = rng.fork(0);
    AttackResult a = pgd(clf, tm.with_epsilon(eps), goal, x, y, cfg, stream);
    queries += a.queries;
    r.verify_queries += a.verify_queries;
    r.loss_trace.push_back(a.final_loss.value_or(0.0));
    return a;
  };

  AttackResult cert = probe(hi);
  if (!cert.success) {
    if (unbounded)
      throw UnboundedFailure("min_distortion: no adversarial example within the whole box for model '" + clf.id() +
                             "'");
    r.final_x = cert.final_x;
    r.success = false;
    r.distortion = std::numeric_limits<double>::infinity();
    r.flag("eps_max_insufficient");
    r.queries = queries;
    r.iterations = r.loss_trace.size();
    return r;
  }
  double lo = 0.0;
  for (std::size_t depth = 0; hi - lo > cfg.eps_tol && depth < cfg.search_depth; ++depth) {
    const double mid = 0.5 * (lo + hi);
    AttackResult a = probe(mid);
    if (a.success) {
      hi = mid;
      cert = std::move(a);
    } else {
      lo = mid;
    }
  }
  r.final_x = cert.final_x;
  r.final_loss = cert.final_loss;
  r.success = true;
  r.abstained = false;
  r.distortion = hi;
  r.queries = queries;
  r.iterations = r.loss_trace.size();
  r.hyperparams["bracket_lo"] = lo;
  r.hyperparams["certificate_distance"] = distance(tm, x, cert.final_x);
  return r;
}

}  // namespace advcheck
