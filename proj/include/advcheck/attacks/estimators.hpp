#pragma once

// Gradient-free score-based attacks: SPSA, NES and coordinate-wise finite
// differences, each followed by projected steps like PGD.

#include <algorithm>
#include <functional>
#include <numeric>
#include <string>

#include "advcheck/attacks/common.hpp"
#include "advcheck/attacks/gradient.hpp"

namespace advcheck {

using ScalarFn = std::function<double(const Vec&)>;

// mean over pairs of [f(x + δu) - f(x - δu)] / (2δ) · u, u Rademacher.
inline Vec spsa_gradient(const ScalarFn& f, const Vec& x, std::size_t pairs, double delta, Rng& rng) {
  if (pairs == 0) throw ArgumentError("spsa_gradient: need at least one pair");
  Vec g(x.size(), 0.0);
  Vec u(x.size());
  for (std::size_t k = 0; k < pairs; ++k) {
    for (double& v : u) v = rng.rademacher();
    Vec plus = x;
    Vec minus = x;
    axpy(delta, u, plus);
    axpy(-delta, u, minus);
    const double diff = (f(plus) - f(minus)) / (2.0 * delta);
    axpy(diff, u, g);
  }
  for (double& v : g) v /= static_cast<double>(pairs);
  return g;
}

// Gaussian smoothing with antithetic pairs: samples/2 pairs of ±σu, u ~ N(0, I).
inline Vec nes_gradient(const ScalarFn& f, const Vec& x, std::size_t samples, double sigma, Rng& rng) {
  const std::size_t pairs = std::max<std::size_t>(1, samples / 2);
  Vec g(x.size(), 0.0);
  for (std::size_t k = 0; k < pairs; ++k) {
    Vec u = rng.normal_vec(x.size());
    Vec plus = x;
    Vec minus = x;
    axpy(sigma, u, plus);
    axpy(-sigma, u, minus);
    const double diff = f(plus) - f(minus);
    axpy(diff, u, g);
  }
  for (double& v : g) v /= 2.0 * sigma * static_cast<double>(pairs);
  return g;
}

// Central differences on the listed coordinates; other entries stay 0.
// `mean_value` receives the average of all probes, an estimate of f(x).
inline Vec coordinate_gradient(const ScalarFn& f, const Vec& x, std::span<const std::size_t> coords, double h,
                               double* mean_value = nullptr) {
  Vec g(x.size(), 0.0);
  Vec probe = x;
  double total = 0.0;
  for (std::size_t i : coords) {
    probe[i] = x[i] + h;
    const double up = f(probe);
    probe[i] = x[i] - h;
    const double down = f(probe);
    probe[i] = x[i];
    g[i] = (up - down) / (2.0 * h);
    total += up + down;
  }
  if (mean_value && !coords.empty()) *mean_value = total / (2.0 * static_cast<double>(coords.size()));
  return g;
}

namespace detail {

// Shared loop: estimate, step, project. When `probe_current` is set, the
// current iterate is evaluated once per iteration (loss trace, early stop);
// otherwise the estimator reports its own loss estimate.
template <typename Estimate>
AttackResult query_attack(const std::string& name, const Classifier& clf, const ThreatModel& tm,
                          const AttackGoal& goal, const Vec& x, std::size_t y, const AttackConfig& cfg, Rng& rng,
                          bool probe_current, Estimate estimate) {
  cfg.validate();
  tm.validate();
  const double step = cfg.step_for(tm.epsilon);
  AttackResult r;
  r.attack = name;
  r.seed = rng.seed();
  r.hyperparams = config_echo(cfg, tm, goal);
  r.hyperparams["iterations"] = cfg.iterations;
  r.hyperparams["step_size"] = step;

  Rng stream = rng.fork(0);
  Oracle oracle(clf, stream);
  const auto objective = objective_for(goal, y, cfg.loss);
  const ScalarFn loss_at = [&](const Vec& z) { return objective(oracle.logits(z)).loss; };

  Vec cur = x;
  Candidate best;
  std::size_t zero_estimates = 0;
  std::size_t done = 0;
  for (std::size_t it = 0; it < cfg.iterations; ++it) {
    double current_loss = 0.0;
    if (probe_current) {
      const Vec z = oracle.logits(cur);
      current_loss = objective(z).loss;
      const bool adv = goal.satisfied(argmax(z), y);
      best.offer(cur, current_loss, adv);
      if (adv && cfg.early_stop) break;
    }
    double estimated_loss = 0.0;
    Vec g = estimate(loss_at, cur, stream, estimated_loss);
    r.loss_trace.push_back(probe_current ? current_loss : estimated_loss);
    ++done;
    if (all_zero(g)) ++zero_estimates;
    Vec next = cur;
    axpy(step, ascent_direction(tm.p, g), next);
    cur = project(tm, x, next);
  }
  if (probe_current) {
    const bool stopped_early = best.adversarial && cfg.early_stop;
    if (!stopped_early) {
      const Vec z = oracle.logits(cur);
      best.offer(cur, objective(z).loss, goal.satisfied(argmax(z), y));
    }
    r.final_x = best.x;
    r.final_loss = best.loss;
  } else {
    r.final_x = cur;
  }
  r.iterations = done;
  r.queries = oracle.queries();
  if (done > 0 && 2 * zero_estimates >= done) r.flag("zero_gradient");
  verify_result(r, clf, tm, goal, x, y, true, cfg.judge_votes);
  return r;
}

}  // namespace detail

inline AttackResult spsa(const Classifier& clf, const ThreatModel& tm, const AttackGoal& goal, const Vec& x,
                         std::size_t y, const AttackConfig& cfg, Rng& rng) {
  AttackResult r = detail::query_attack(
      "spsa", clf, tm, goal, x, y, cfg, rng, true, [&](const ScalarFn& f, const Vec& cur, Rng& s, double&) {
        return spsa_gradient(f, cur, cfg.estimator_batch, cfg.spsa_delta, s);
      });
  r.hyperparams["batch"] = cfg.estimator_batch;
  r.hyperparams["delta"] = cfg.spsa_delta;
  return r;
}

inline AttackResult nes(const Classifier& clf, const ThreatModel& tm, const AttackGoal& goal, const Vec& x,
                        std::size_t y, const AttackConfig& cfg, Rng& rng) {
  AttackResult r = detail::query_attack(
      "nes", clf, tm, goal, x, y, cfg, rng, true, [&](const ScalarFn& f, const Vec& cur, Rng& s, double&) {
        return nes_gradient(f, cur, cfg.estimator_batch, cfg.nes_sigma, s);
      });
  r.hyperparams["samples"] = cfg.estimator_batch;
  r.hyperparams["sigma"] = cfg.nes_sigma;
  return r;
}

// Coordinate finite differences on a random subset each iteration. Exactly
// 2 · coords · iterations queries; the iterate is never probed on its own.
inline AttackResult zoo_fd(const Classifier& clf, const ThreatModel& tm, const AttackGoal& goal, const Vec& x,
                           std::size_t y, const AttackConfig& cfg, Rng& rng) {
  const std::size_t coords = std::min(cfg.zoo_coords, x.size());
  std::vector<std::size_t> all(x.size());
  std::iota(all.begin(), all.end(), 0);
  AttackResult r = detail::query_attack(
      "zoo", clf, tm, goal, x, y, cfg, rng, false, [&](const ScalarFn& f, const Vec& cur, Rng& s, double& loss) {
        std::vector<std::size_t> pick = all;
        if (coords < pick.size()) {
          s.shuffle(pick);
          pick.resize(coords);
          std::sort(pick.begin(), pick.end());
        }
        return coordinate_gradient(f, cur, pick, cfg.zoo_h, &loss);
      });
  r.hyperparams["coords"] = coords;
  r.hyperparams["h"] = cfg.zoo_h;
  return r;
}

}  // namespace advcheck
