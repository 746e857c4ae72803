#pragma once

// Decision-based (hard-label) boundary attack: a rejection-sampling walk along
// the decision boundary that only ever asks for the predicted label.

#include <cmath>
#include <string>

#include "advcheck/attacks/common.hpp"

namespace advcheck {

inline AttackResult boundary_attack(const Classifier& clf, const ThreatModel& tm, const AttackGoal& goal,
                                    const Vec& x, std::size_t y, const AttackConfig& cfg, Rng& rng) {
  tm.validate();
  AttackResult r;
  r.attack = "boundary";
  r.seed = rng.seed();
  r.hyperparams = config_echo(cfg, tm, goal);
  r.hyperparams["steps"] = cfg.boundary_steps;
  r.hyperparams["init_trials"] = cfg.init_trials;
  r.hyperparams["spherical_step"] = cfg.spherical_step;
  r.hyperparams["source_step"] = cfg.source_step;
  if (clf.randomness()) r.flag("randomized_target");

  Rng stream = rng.fork(0);
  Oracle oracle(clf, stream);
  auto adversarial = [&](const Vec& z) { return goal.satisfied(oracle.predict(z), y); };

  if (adversarial(x)) {
    r.final_x = x;
    r.queries = oracle.queries();
    verify_result(r, clf, tm, goal, x, y, true, cfg.judge_votes);
    return r;
  }

  // Start: uniform box samples, then caller-supplied points of other classes.
  std::optional<Vec> start;
  for (std::size_t t = 0; t < cfg.init_trials && !start; ++t) {
    Vec z(x.size());
    for (double& v : z) v = stream.uniform(tm.box_lo, tm.box_hi);
    if (adversarial(z)) start = std::move(z);
  }
  for (std::size_t i = 0; i < cfg.starting_points.size() && !start; ++i)
    if (cfg.starting_points[i].size() == x.size() && adversarial(cfg.starting_points[i])) start = cfg.starting_points[i];
  if (!start) throw InitFailure("boundary_attack: no adversarial starting point after " +
                                std::to_string(cfg.init_trials) + " box samples");

  // Move the start onto the boundary along the segment towards x.
  Vec adv = *start;
  {
    double lo = 0.0;
    double hi = 1.0;
    for (int i = 0; i < 25; ++i) {
      const double mid = 0.5 * (lo + hi);
      Vec z(x.size());
      for (std::size_t k = 0; k < x.size(); ++k) z[k] = x[k] + mid * ((*start)[k] - x[k]);
      if (adversarial(z)) {
        hi = mid;
        adv = std::move(z);
      } else {
        lo = mid;
      }
    }
  }

  double spherical = cfg.spherical_step;
  double source = cfg.source_step;
  std::size_t sph_trials = 0, sph_hits = 0, src_trials = 0, src_hits = 0;
  double dist = norm_l2(sub(x, adv));
  const std::size_t dim = x.size();

  for (std::size_t step = 0; step < cfg.boundary_steps; ++step) {
    Vec diff = sub(x, adv);
    dist = norm_l2(diff);
    r.loss_trace.push_back(dist);
    if (dist == 0.0) break;

    // Orthogonal perturbation of relative size `spherical`, re-projected onto
    // the sphere of radius dist around x.
    Vec eta = stream.normal_vec(dim);
    const double along = dot(eta, diff) / (dist * dist);
    axpy(-along, diff, eta);
    const double eta_norm = norm_l2(eta);
    Vec cand = adv;
    if (eta_norm > 0.0) axpy(spherical * dist / eta_norm, eta, cand);
    Vec offset = sub(cand, x);
    const double off_norm = norm_l2(offset);
    for (std::size_t k = 0; k < dim; ++k) cand[k] = x[k] + offset[k] * dist / off_norm;
    cand = clip_to_box(tm, cand);

    ++sph_trials;
    if (adversarial(cand)) {
      ++sph_hits;
      Vec closer(dim);
      for (std::size_t k = 0; k < dim; ++k) closer[k] = cand[k] + source * (x[k] - cand[k]);
      closer = clip_to_box(tm, closer);
      ++src_trials;
      if (adversarial(closer)) {
        ++src_hits;
        if (norm_l2(sub(x, closer)) < dist) adv = std::move(closer);
      }
    }

    // Keep acceptance rates near one in four.
    if (sph_trials == 10) {
      const double rate = static_cast<double>(sph_hits) / static_cast<double>(sph_trials);
      if (rate > 0.35) spherical *= 1.5;
      if (rate < 0.15) spherical /= 1.5;
      sph_trials = sph_hits = 0;
    }
    if (src_trials == 10) {
      const double rate = static_cast<double>(src_hits) / static_cast<double>(src_trials);
      if (rate > 0.35) source *= 1.5;
      if (rate < 0.15) source /= 1.5;
      src_trials = src_hits = 0;
    }
  }

  r.final_x = adv;
  r.iterations = r.loss_trace.size();
  r.queries = oracle.queries();
  r.hyperparams["final_l2"] = norm_l2(sub(x, adv));
  verify_result(r, clf, tm, goal, x, y, true, cfg.judge_votes);
  return r;
}

}  // namespace advcheck
