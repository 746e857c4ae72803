#pragma once

// Evaluation checks over recorded attack results: sanity tests, budget
// curves, per-example aggregation, convergence, white-box versus black-box
// comparison, randomness fixing, ablation and detector ROC.

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "advcheck/attacks/common.hpp"
#include "advcheck/dataset.hpp"
#include "advcheck/models.hpp"
#include "advcheck/parallel.hpp"

namespace advcheck {

enum class Status { pass, fail, inconclusive, inapplicable };

inline std::string to_string(Status s) {
  switch (s) {
    case Status::pass: return "pass";
    case Status::fail: return "fail";
    case Status::inconclusive: return "inconclusive";
    case Status::inapplicable: return "inapplicable";
  }
  return "?";
}

inline Status status_from_string(const std::string& s) {
  if (s == "pass") return Status::pass;
  if (s == "fail") return Status::fail;
  if (s == "inconclusive") return Status::inconclusive;
  if (s == "inapplicable") return Status::inapplicable;
  throw FormatError("unknown verdict status '" + s + "'", 0);
}

namespace check_id {
inline constexpr const char* iterative_vs_single = "sanity.iterative_vs_single";
inline constexpr const char* budget_monotone = "sanity.budget_monotone";
inline constexpr const char* high_distortion_floor = "sanity.high_distortion_floor";
inline constexpr const char* unbounded_total = "curve.unbounded_total";
inline constexpr const char* whitebox_dominance = "masking.whitebox_dominance";
inline constexpr const char* convergence_doubling = "convergence.doubling";
inline constexpr const char* fixed_randomness = "randomness.fixed";
inline constexpr const char* ablation = "ablation.undefended";
inline constexpr const char* per_example = "report.per_example";
}  // namespace check_id

struct Verdict {
  std::string check_id;
  Status status = Status::inconclusive;
  Json evidence = Json::object();
  std::string summary;
};

inline Json to_json(const Verdict& v) {
  return Json{{"check_id", v.check_id}, {"status", to_string(v.status)}, {"summary", v.summary}, {"evidence", v.evidence}};
}

inline Verdict verdict_from_json(const Json& j) {
  Verdict v;
  v.check_id = j.at("check_id").get<std::string>();
  v.status = status_from_string(j.at("status").get<std::string>());
  v.summary = j.at("summary").get<std::string>();
  v.evidence = j.at("evidence");
  return v;
}

// Worst status wins: fail, then inconclusive, then pass. Inapplicable parts
// are ignored unless every part is inapplicable.
inline Status combine(Status a, Status b) {
  auto rank = [](Status s) {
    switch (s) {
      case Status::fail: return 3;
      case Status::inconclusive: return 2;
      case Status::pass: return 1;
      case Status::inapplicable: return 0;
    }
    return 0;
  };
  return rank(a) >= rank(b) ? a : b;
}

inline double binomial_sigma(double p, std::size_t n) {
  if (n == 0) return std::numeric_limits<double>::infinity();
  return std::sqrt(std::max(0.0, p * (1.0 - p)) / static_cast<double>(n));
}

// ---------------------------------------------------------------------------
// Recorded attack runs

// Per-example outcome. `excluded` marks examples the model already gets wrong
// on clean input; they never count towards a success rate.
enum class Outcome { failure, success, excluded, inapplicable };

struct AttackRun {
  std::string attack;
  double epsilon = 0.0;
  bool white_box = true;
  std::vector<Outcome> outcomes;
  std::vector<AttackResult> results;  // empty or one per example
  std::vector<std::string> notes;

  std::size_t size() const { return outcomes.size(); }
  std::size_t count(Outcome o) const { return static_cast<std::size_t>(std::count(outcomes.begin(), outcomes.end(), o)); }
  std::size_t eligible() const { return count(Outcome::success) + count(Outcome::failure); }
  bool complete() const { return count(Outcome::inapplicable) == 0; }

  // Over originally-correct examples; NaN when there are none.
  double success_rate() const {
    const std::size_t n = eligible();
    return n ? static_cast<double>(count(Outcome::success)) / static_cast<double>(n)
             : std::numeric_limits<double>::quiet_NaN();
  }

  // Fraction of all (applicable) examples still classified correctly.
  double model_accuracy() const {
    const std::size_t n = size() - count(Outcome::inapplicable);
    return n ? static_cast<double>(count(Outcome::failure)) / static_cast<double>(n)
             : std::numeric_limits<double>::quiet_NaN();
  }
};

using ExampleAttack =
    std::function<AttackResult(const Classifier&, const ThreatModel&, const Vec& x, std::size_t y, Rng& rng)>;

// Clean correctness per example. Randomized models are judged by majority
// over `votes` draws seeded from (seed, example index).
inline std::vector<bool> clean_correctness(const Classifier& clf, const Dataset& data, std::uint64_t seed,
                                           std::size_t votes = 25, std::size_t jobs = 1) {
  std::vector<char> ok(data.size(), 0);
  parallel_for(data.size(), jobs, [&](std::size_t i) {
    const Judgement j = judge_prediction(clf, AttackGoal::targeted(data.labels[i]), data.inputs[i], data.labels[i],
                                         Rng(seed).fork(i).seed(), votes);
    ok[i] = j.goal_met;
  });
  return {ok.begin(), ok.end()};
}

// Runs `attack` on every originally-correct example; example i uses
// rng.fork(i), so results do not depend on `jobs`. An attack that declares
// itself inapplicable is recorded as such; a failed initialisation or an
// unbounded failure counts as an ordinary failure.
inline AttackRun run_attack(const Classifier& clf, const Dataset& data, const std::vector<bool>& correct,
                            const std::string& name, const ThreatModel& tm, const ExampleAttack& attack,
                            const Rng& rng, std::size_t jobs = 1, bool white_box = true) {
  if (correct.size() != data.size()) throw ArgumentError("run_attack: correctness mask has the wrong length");
  AttackRun run;
  run.attack = name;
  run.epsilon = tm.epsilon;
  run.white_box = white_box;
  run.outcomes.assign(data.size(), Outcome::excluded);
  run.results.assign(data.size(), AttackResult{});
  std::vector<std::string> errors(data.size());
  parallel_for(data.size(), jobs, [&](std::size_t i) {
    if (!correct[i]) return;
    Rng stream = rng.fork(i);
    try {
      run.results[i] = attack(clf, tm, data.inputs[i], data.labels[i], stream);
      run.outcomes[i] = run.results[i].success ? Outcome::success : Outcome::failure;
    } catch (const InitFailure& e) {
      run.results[i].attack = name;
      run.results[i].distortion = std::numeric_limits<double>::infinity();
      run.results[i].flag("init_failure");
      run.outcomes[i] = Outcome::failure;
    } catch (const UnboundedFailure& e) {
      run.results[i].attack = name;
      run.results[i].distortion = std::numeric_limits<double>::infinity();
      run.results[i].flag("unbounded_failure");
      run.outcomes[i] = Outcome::failure;
    } catch (const AttackInapplicable& e) {
      run.outcomes[i] = Outcome::inapplicable;
      errors[i] = e.what();
    }
  });
  for (std::size_t i = 0; i < errors.size(); ++i)
    if (!errors[i].empty()) {
      run.notes.push_back("inapplicable: " + errors[i]);
      break;
    }
  return run;
}

namespace detail {
inline void require_same_examples(const AttackRun& a, const AttackRun& b, const char* what) {
  if (a.size() != b.size())
    throw ArgumentError(std::string(what) + ": runs cover different example sets (" + std::to_string(a.size()) +
                        " vs " + std::to_string(b.size()) + ")");
}

// 3-sigma bound on a paired difference of success rates: the number of
// discordant examples drives the variance.
inline double paired_slack(std::size_t discordant, std::size_t n) {
  return n ? 3.0 * std::sqrt(static_cast<double>(discordant)) / static_cast<double>(n)
           : std::numeric_limits<double>::infinity();
}

inline Json indices(const std::vector<std::size_t>& v) { return Json(v); }
}  // namespace detail

// ---------------------------------------------------------------------------
// Sanity checks

// Iterative attacks must be at least as strong as their single-step version.
inline Verdict check_iterative_vs_single(const AttackRun& iterative, const AttackRun& single) {
  detail::require_same_examples(iterative, single, "check_iterative_vs_single");
  Verdict v;
  v.check_id = check_id::iterative_vs_single;
  std::size_t n = 0, it_wins = 0, single_wins_n = 0, it_succ = 0, single_succ = 0;
  std::vector<std::size_t> single_wins;
  for (std::size_t i = 0; i < iterative.size(); ++i) {
    const Outcome a = iterative.outcomes[i];
    const Outcome b = single.outcomes[i];
    if ((a != Outcome::success && a != Outcome::failure) || (b != Outcome::success && b != Outcome::failure)) continue;
    ++n;
    it_succ += a == Outcome::success;
    single_succ += b == Outcome::success;
    if (a == Outcome::success && b == Outcome::failure) ++it_wins;
    if (b == Outcome::success && a == Outcome::failure) {
      ++single_wins_n;
      single_wins.push_back(i);
    }
  }
  const double p_it = n ? static_cast<double>(it_succ) / n : std::numeric_limits<double>::quiet_NaN();
  const double p_single = n ? static_cast<double>(single_succ) / n : std::numeric_limits<double>::quiet_NaN();
  const double gap = p_single - p_it;
  const double slack = detail::paired_slack(it_wins + single_wins_n, n);
  v.evidence = {{"epsilon", iterative.epsilon}, {"n", n},          {"iterative", iterative.attack},
                {"single", single.attack},      {"iterative_success", p_it}, {"single_success", p_single},
                {"gap", gap},                   {"slack", slack},  {"single_only_examples", single_wins}};
  if (n == 0) {
    v.status = Status::inconclusive;
    v.summary = "no originally-correct examples to compare";
  } else if (gap <= 0.0) {
    v.status = Status::pass;
    v.summary = gap == 0.0 ? "iterative and single-step attacks tie (allowed at saturation)"
                           : "iterative attack is at least as strong as the single-step attack";
  } else if (gap > slack) {
    v.status = Status::fail;
    v.summary = "single-step attack beats the iterative attack by " + std::to_string(gap);
  } else {
    v.status = Status::inconclusive;
    v.summary = "single-step attack ahead by " + std::to_string(gap) + ", within sampling slack";
  }
  return v;
}

// One verdict across a grid of budgets: each pair must pass.
inline Verdict check_iterative_vs_single(std::span<const AttackRun> iterative, std::span<const AttackRun> single) {
  if (iterative.size() != single.size()) throw ArgumentError("check_iterative_vs_single: grids differ in length");
  Verdict v;
  v.check_id = check_id::iterative_vs_single;
  v.status = Status::inapplicable;
  v.evidence = {{"per_epsilon", Json::array()}};
  for (std::size_t k = 0; k < iterative.size(); ++k) {
    const Verdict one = check_iterative_vs_single(iterative[k], single[k]);
    v.status = combine(v.status, one.status);
    Json e = one.evidence;
    e["status"] = to_string(one.status);
    v.evidence["per_epsilon"].push_back(std::move(e));
  }
  if (iterative.empty()) {
    v.status = Status::inconclusive;
    v.summary = "no budgets supplied";
  } else {
    v.summary = v.status == Status::pass ? "iterative attack at least as strong at every budget"
                : v.status == Status::fail ? "single-step attack stronger at some budget"
                                           : "comparison within sampling slack at some budget";
  }
  return v;
}

struct CurvePoint {
  double epsilon = 0.0;
  double model_accuracy = 0.0;
  double attack_success = 0.0;
  std::size_t n = 0;  // originally-correct examples behind attack_success
};

inline bool operator==(const CurvePoint& a, const CurvePoint& b) {
  auto same = [](double x, double y) { return x == y || (std::isnan(x) && std::isnan(y)); };
  return same(a.epsilon, b.epsilon) && same(a.model_accuracy, b.model_accuracy) &&
         same(a.attack_success, b.attack_success) && a.n == b.n;
}

// Success may not drop between consecutive budgets by more than
// 2*sqrt(p(1-p)/n); smaller dips are inconclusive.
inline Verdict check_budget_monotonicity(std::span<const CurvePoint> curve) {
  for (std::size_t i = 1; i < curve.size(); ++i)
    if (!(curve[i].epsilon > curve[i - 1].epsilon))
      throw ArgumentError("check_budget_monotonicity: epsilons must be strictly increasing");
  Verdict v;
  v.check_id = check_id::budget_monotone;
  v.status = Status::pass;
  Json dips = Json::array();
  Json failures = Json::array();
  for (std::size_t i = 1; i < curve.size(); ++i) {
    const double drop = curve[i - 1].attack_success - curve[i].attack_success;
    if (!(drop > 0.0)) continue;
    const double p = curve[i - 1].attack_success;
    const double slack = 2.0 * binomial_sigma(p, std::min(curve[i - 1].n, curve[i].n));
    Json d = {{"epsilon_pair", {curve[i - 1].epsilon, curve[i].epsilon}}, {"drop", drop}, {"slack", slack}};
    if (drop > slack) {
      failures.push_back(d);
      v.status = Status::fail;
    } else {
      v.status = combine(v.status, Status::inconclusive);
    }
    dips.push_back(std::move(d));
  }
  v.evidence = {{"points", curve.size()}, {"dips", dips}, {"violations", failures}};
  if (v.status == Status::pass)
    v.summary = "attack success is nondecreasing in the budget";
  else if (v.status == Status::fail)
    v.summary = "attack success drops between budgets " + failures[0]["epsilon_pair"].dump();
  else
    v.summary = "attack success dips within sampling slack";
  return v;
}

// At epsilon = half the box range (l-infinity) every input can be moved to
// the mid-grey point, so accuracy must fall to chance. The supplied attack is
// combined per example with that constant candidate.
inline Verdict check_high_distortion_floor(const Classifier& clf, const Dataset& data, const ThreatModel& tm,
                                           const ExampleAttack& attack, const Rng& rng, std::size_t jobs = 1,
                                           std::size_t votes = 25) {
  Verdict v;
  v.check_id = check_id::high_distortion_floor;
  if (tm.p != Norm::linf) {
    v.status = Status::inapplicable;
    v.summary = "defined for l-infinity threat models only";
    return v;
  }
  ThreatModel half = tm.with_epsilon((tm.box_hi - tm.box_lo) / 2.0);
  const std::size_t n = data.size();
  const auto correct = clean_correctness(clf, data, rng.fork(1).seed(), votes, jobs);
  const AttackRun run = run_attack(clf, data, correct, "floor", half, attack, rng.fork(2), jobs);
  const Vec grey(data.dim(), (tm.box_lo + tm.box_hi) / 2.0);

  std::vector<char> survived(n, 0);
  std::vector<char> grey_hit(n, 0);
  parallel_for(n, jobs, [&](std::size_t i) {
    if (!correct[i]) return;
    const Judgement g = judge_prediction(clf, AttackGoal::untargeted(), grey, data.labels[i],
                                         rng.fork(3).fork(i).seed(), votes);
    grey_hit[i] = g.goal_met;
    survived[i] = !g.goal_met && run.outcomes[i] != Outcome::success;
  });
  std::vector<std::size_t> still_correct;
  for (std::size_t i = 0; i < n; ++i)
    if (survived[i]) still_correct.push_back(i);

  // A victim predicting one class for every clean input is degenerate: its
  // accuracy equals that class's frequency whatever the attack does.
  bool degenerate = n > 1;
  {
    Rng probe = rng.fork(4);
    std::optional<std::size_t> first;
    for (std::size_t i = 0; i < n && degenerate; ++i) {
      const std::size_t p = clf.predict(data.inputs[i], &probe);
      if (!first) first = p;
      degenerate = p == *first;
    }
  }

  const double acc = n ? static_cast<double>(still_correct.size()) / n : 0.0;
  const double chance = 1.0 / static_cast<double>(std::max<std::size_t>(1, data.num_classes));
  const double bound = chance + 3.0 * binomial_sigma(chance, n);
  v.evidence = {{"epsilon", half.epsilon},
                {"n", n},
                {"accuracy", acc},
                {"chance", chance},
                {"bound", bound},
                {"attack_success", run.success_rate()},
                {"grey_candidate_hits", std::count(grey_hit.begin(), grey_hit.end(), 1)},
                {"degenerate_victim", degenerate},
                {"still_correct_examples", still_correct}};
  if (n == 0) {
    v.status = Status::inconclusive;
    v.summary = "empty dataset";
  } else if (acc > bound) {
    v.status = Status::fail;
    v.summary = "accuracy " + std::to_string(acc) + " at half-range distortion exceeds chance bound " + std::to_string(bound);
  } else if (degenerate && !still_correct.empty()) {
    v.status = Status::fail;
    v.summary = "victim predicts a single class on every clean input";
  } else {
    v.status = Status::pass;
    v.summary = "accuracy at half-range distortion is within the chance bound";
  }
  return v;
}

// With an unbounded budget every originally-correct example must fall.
inline Verdict check_unbounded_reaches_total(const AttackRun& min_distortion_run) {
  Verdict v;
  v.check_id = check_id::unbounded_total;
  std::vector<std::size_t> unreached;
  std::vector<std::size_t> inapplicable;
  for (std::size_t i = 0; i < min_distortion_run.size(); ++i) {
    if (min_distortion_run.outcomes[i] == Outcome::failure) unreached.push_back(i);
    if (min_distortion_run.outcomes[i] == Outcome::inapplicable) inapplicable.push_back(i);
  }
  v.evidence = {{"attack", min_distortion_run.attack},
                {"eligible", min_distortion_run.eligible()},
                {"success", min_distortion_run.success_rate()},
                {"unreached_examples", unreached},
                {"inapplicable_examples", inapplicable}};
  if (!unreached.empty()) {
    v.status = Status::fail;
    v.summary = std::to_string(unreached.size()) + " example(s) never became adversarial at any budget";
  } else if (!inapplicable.empty() || min_distortion_run.eligible() == 0) {
    v.status = Status::inconclusive;
    v.summary = "not every example could be attacked";
  } else {
    v.status = Status::pass;
    v.summary = "unbounded attack reaches 100% success";
  }
  return v;
}

// White-box access subsumes black-box access: no black-box attack may beat the
// best white-box attack beyond sampling slack.
inline Verdict check_whitebox_dominance(std::span<const AttackRun> white, std::span<const AttackRun> black) {
  Verdict v;
  v.check_id = check_id::whitebox_dominance;
  if (white.empty() || black.empty()) {
    v.status = Status::inapplicable;
    v.summary = "needs at least one white-box and one black-box attack";
    return v;
  }
  for (const auto& r : white) detail::require_same_examples(white[0], r, "check_whitebox_dominance");
  for (const auto& r : black) detail::require_same_examples(white[0], r, "check_whitebox_dominance");

  std::size_t best = 0;
  for (std::size_t k = 1; k < white.size(); ++k)
    if (white[k].success_rate() > white[best].success_rate() ||
        (std::isnan(white[best].success_rate()) && !std::isnan(white[k].success_rate())))
      best = k;
  const AttackRun& w = white[best];
  const std::size_t m = w.size();
  std::vector<char> any_white(m, 0);
  for (const auto& r : white)
    for (std::size_t i = 0; i < m; ++i) any_white[i] |= r.outcomes[i] == Outcome::success;

  v.status = Status::pass;
  Json comparisons = Json::array();
  for (const auto& b : black) {
    std::size_t n = 0, b_only = 0, w_only = 0, bs = 0, ws = 0;
    std::vector<std::size_t> examples;
    for (std::size_t i = 0; i < m; ++i) {
      const bool bok = b.outcomes[i] == Outcome::success || b.outcomes[i] == Outcome::failure;
      const bool wok = w.outcomes[i] == Outcome::success || w.outcomes[i] == Outcome::failure;
      if (!bok || !wok) continue;
      ++n;
      const bool bw = b.outcomes[i] == Outcome::success;
      const bool ww = w.outcomes[i] == Outcome::success;
      bs += bw;
      ws += ww;
      b_only += bw && !ww;
      w_only += ww && !bw;
      if (bw && !any_white[i]) examples.push_back(i);
    }
    const double gap = n ? (static_cast<double>(bs) - static_cast<double>(ws)) / n : 0.0;
    const double slack = detail::paired_slack(b_only + w_only, n);
    Status s = Status::pass;
    if (n == 0)
      s = Status::inconclusive;
    else if (gap > slack && !examples.empty())
      s = Status::fail;
    else if (gap > 0.0)
      s = Status::inconclusive;
    v.status = combine(v.status, s);
    comparisons.push_back({{"black_box", b.attack},
                           {"black_success", n ? static_cast<double>(bs) / n : std::numeric_limits<double>::quiet_NaN()},
                           {"white_success", n ? static_cast<double>(ws) / n : std::numeric_limits<double>::quiet_NaN()},
                           {"gap", gap},
                           {"slack", slack},
                           {"status", to_string(s)},
                           {"black_only_examples", examples}});
  }
  v.evidence = {{"best_white_box", w.attack}, {"epsilon", w.epsilon}, {"comparisons", comparisons}};
  if (v.status == Status::fail)
    v.summary = "a black-box attack beats the best white-box attack (" + w.attack +
                "): gradients are likely masked";
  else if (v.status == Status::inconclusive)
    v.summary = "a black-box attack is ahead within sampling slack";
  else
    v.summary = "best white-box attack dominates every black-box attack";
  return v;
}

// Mean objective per iteration across examples (examples with shorter traces
// drop out of later positions).
inline std::vector<double> mean_trace(const AttackRun& run) {
  std::vector<double> sum;
  std::vector<std::size_t> cnt;
  for (const auto& r : run.results) {
    if (r.loss_trace.size() > sum.size()) {
      sum.resize(r.loss_trace.size(), 0.0);
      cnt.resize(r.loss_trace.size(), 0);
    }
    for (std::size_t t = 0; t < r.loss_trace.size(); ++t)
      if (std::isfinite(r.loss_trace[t])) {
        sum[t] += r.loss_trace[t];
        ++cnt[t];
      }
  }
  for (std::size_t t = 0; t < sum.size(); ++t)
    sum[t] = cnt[t] ? sum[t] / cnt[t] : std::numeric_limits<double>::quiet_NaN();
  return sum;
}

// Doubling the iteration count must not raise success beyond slack.
inline Verdict check_convergence_doubling(const std::function<AttackRun(std::size_t iterations)>& run,
                                          std::size_t iterations) {
  if (iterations == 0) throw ArgumentError("check_convergence_doubling: iterations must be positive");
  const AttackRun a = run(iterations);
  const AttackRun b = run(2 * iterations);
  detail::require_same_examples(a, b, "check_convergence_doubling");
  Verdict v;
  v.check_id = check_id::convergence_doubling;
  std::size_t n = 0, only_b = 0, only_a = 0, sa = 0, sb = 0;
  std::vector<std::size_t> improved;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const bool aok = a.outcomes[i] == Outcome::success || a.outcomes[i] == Outcome::failure;
    const bool bok = b.outcomes[i] == Outcome::success || b.outcomes[i] == Outcome::failure;
    if (!aok || !bok) continue;
    ++n;
    const bool as = a.outcomes[i] == Outcome::success;
    const bool bs = b.outcomes[i] == Outcome::success;
    sa += as;
    sb += bs;
    only_a += as && !bs;
    if (bs && !as) {
      ++only_b;
      improved.push_back(i);
    }
  }
  const double gain = n ? (static_cast<double>(sb) - static_cast<double>(sa)) / n : 0.0;
  const double slack = detail::paired_slack(only_a + only_b, n);
  v.evidence = {{"attack", a.attack},
                {"iterations", {iterations, 2 * iterations}},
                {"success", {a.success_rate(), b.success_rate()}},
                {"gain", gain},
                {"slack", slack},
                {"improved_examples", improved},
                {"loss_trace", mean_trace(a)},
                {"loss_trace_doubled", mean_trace(b)}};
  if (n == 0) {
    v.status = Status::inconclusive;
    v.summary = "no originally-correct examples";
  } else if (gain > slack) {
    v.status = Status::fail;
    v.summary = "doubling iterations raises success by " + std::to_string(gain) + ": attack not converged";
  } else if (gain > 0.0) {
    v.status = Status::inconclusive;
    v.summary = "doubling iterations helps, within sampling slack";
  } else {
    v.status = Status::pass;
    v.summary = "success unchanged when iterations are doubled";
  }
  return v;
}

using ModelAttackRun = std::function<AttackRun(const Classifier&)>;

// Fix one draw of the defense's randomness and attack the now-deterministic
// model. Examples the attack defeats on the fully unwrapped model ought to
// fall here too; a miss rate above `tolerance` (plus 3 sigma) means the attack
// rather than the defense is at fault.
inline Verdict check_fixed_randomness(const ClassifierPtr& clf, const ModelAttackRun& attack, Rng& rng,
                                      double tolerance = 0.05) {
  Verdict v;
  v.check_id = check_id::fixed_randomness;
  const auto spec = clf->randomness();
  if (!spec || !spec->fixable) {
    v.status = Status::inapplicable;
    v.summary = spec ? "randomness cannot be fixed" : "model is deterministic";
    return v;
  }
  const ClassifierPtr fixed = clf->fix_randomness(rng);
  if (!fixed || fixed->randomness()) {
    v.status = Status::inapplicable;
    v.summary = "fixing the randomness did not yield a deterministic model";
    return v;
  }
  const ClassifierPtr reference = unwrap_all(clf);
  const AttackRun on_fixed = attack(*fixed);
  const AttackRun on_reference = attack(*reference);
  detail::require_same_examples(on_fixed, on_reference, "check_fixed_randomness");

  std::size_t should = 0;
  std::vector<std::size_t> missed;
  for (std::size_t i = 0; i < on_fixed.size(); ++i) {
    if (on_reference.outcomes[i] != Outcome::success) continue;
    if (on_fixed.outcomes[i] == Outcome::inapplicable) continue;
    ++should;
    if (on_fixed.outcomes[i] == Outcome::failure) missed.push_back(i);
  }
  const double miss = should ? static_cast<double>(missed.size()) / should : 0.0;
  const double bound = tolerance + 3.0 * binomial_sigma(tolerance, should);
  v.evidence = {{"attack", on_fixed.attack},
                {"fixed_model", fixed->id()},
                {"reference_model", reference->id()},
                {"fixed_success", on_fixed.success_rate()},
                {"reference_success", on_reference.success_rate()},
                {"should_defeat", should},
                {"miss_rate", miss},
                {"bound", bound},
                {"missed_examples", missed}};
  if (should == 0) {
    v.status = Status::inconclusive;
    v.summary = "attack defeats no example of the undefended model";
  } else if (miss > bound) {
    v.status = Status::fail;
    v.summary = "attack misses " + std::to_string(missed.size()) +
                " example(s) on the fixed-randomness model that it defeats undefended";
  } else {
    v.status = Status::pass;
    v.summary = "attack succeeds once the randomness is fixed";
  }
  return v;
}

// ---------------------------------------------------------------------------
// Aggregation

struct Aggregate {
  std::size_t examples = 0;
  std::size_t eligible = 0;
  double per_example_success = 0.0;   // any attack succeeded, over eligible
  double per_example_accuracy = 0.0;  // no attack succeeded, over all examples
  std::vector<double> per_attack_success;
  std::vector<double> per_attack_accuracy;
};

// matrix[a][e]: did attack a succeed on example e; nullopt is a hole.
// eligible[e] false marks an originally-misclassified example.
inline Aggregate aggregate_per_example(const std::vector<std::vector<std::optional<bool>>>& matrix,
                                       const std::vector<bool>& eligible) {
  const std::size_t e = eligible.size();
  std::vector<std::string> holes;
  for (std::size_t a = 0; a < matrix.size(); ++a) {
    if (matrix[a].size() != e) throw ArgumentError("aggregate_per_example: row " + std::to_string(a) + " has the wrong length");
    for (std::size_t i = 0; i < e; ++i)
      if (eligible[i] && !matrix[a][i]) holes.push_back("(" + std::to_string(a) + "," + std::to_string(i) + ")");
  }
  if (!holes.empty()) {
    std::string list;
    for (std::size_t k = 0; k < holes.size() && k < 20; ++k) list += (k ? " " : "") + holes[k];
    throw ArgumentError("aggregate_per_example: incomplete matrix, holes at " + list +
                        (holes.size() > 20 ? " ..." : ""));
  }
  Aggregate g;
  g.examples = e;
  g.eligible = static_cast<std::size_t>(std::count(eligible.begin(), eligible.end(), true));
  std::size_t any = 0;
  for (std::size_t i = 0; i < e; ++i) {
    if (!eligible[i]) continue;
    bool hit = false;
    for (const auto& row : matrix) hit = hit || *row[i];
    any += hit;
  }
  const double ne = static_cast<double>(g.eligible);
  const double nt = static_cast<double>(e);
  const double nan = std::numeric_limits<double>::quiet_NaN();
  g.per_example_success = g.eligible ? any / ne : nan;
  g.per_example_accuracy = e ? (g.eligible - any) / nt : nan;
  for (const auto& row : matrix) {
    std::size_t s = 0;
    for (std::size_t i = 0; i < e; ++i) s += eligible[i] && *row[i];
    g.per_attack_success.push_back(g.eligible ? s / ne : nan);
    g.per_attack_accuracy.push_back(e ? (g.eligible - s) / nt : nan);
  }
  return g;
}

inline Aggregate aggregate_per_example(std::span<const AttackRun> runs) {
  if (runs.empty()) throw ArgumentError("aggregate_per_example: no attacks");
  const std::size_t e = runs[0].size();
  std::vector<bool> eligible(e, true);
  std::vector<std::vector<std::optional<bool>>> matrix;
  for (const auto& r : runs) {
    if (r.size() != e) throw ArgumentError("aggregate_per_example: runs cover different example sets");
    std::vector<std::optional<bool>> row(e);
    for (std::size_t i = 0; i < e; ++i) {
      switch (r.outcomes[i]) {
        case Outcome::success: row[i] = true; break;
        case Outcome::failure: row[i] = false; break;
        case Outcome::excluded: eligible[i] = false; break;
        case Outcome::inapplicable: break;
      }
    }
    matrix.push_back(std::move(row));
  }
  return aggregate_per_example(matrix, eligible);
}

// ---------------------------------------------------------------------------
// Curves

struct AccuracyCurve {
  std::string attack;
  std::string mode;  // "auto" or "grid"
  std::vector<CurvePoint> points;
  std::vector<std::string> warnings;
};

// Derives the whole curve from per-example minimal distortions by
// thresholding. An empty grid uses 0 and every finite distinct distortion.
inline AccuracyCurve curve_from_min_distortion(const AttackRun& run, std::vector<double> grid = {}) {
  AccuracyCurve c;
  c.attack = run.attack;
  c.mode = "auto";
  if (run.results.size() != run.size()) throw ArgumentError("curve_from_min_distortion: run carries no results");
  std::vector<double> eps_star;
  std::size_t total = 0;
  for (std::size_t i = 0; i < run.size(); ++i) {
    if (run.outcomes[i] == Outcome::inapplicable) continue;
    ++total;
    if (run.outcomes[i] == Outcome::success) eps_star.push_back(run.results[i].distortion);
    if (run.outcomes[i] == Outcome::failure) eps_star.push_back(std::numeric_limits<double>::infinity());
  }
  std::sort(eps_star.begin(), eps_star.end());
  if (grid.empty()) {
    grid.push_back(0.0);
    for (double e : eps_star)
      if (std::isfinite(e) && e > grid.back()) grid.push_back(e);
  }
  if (!std::is_sorted(grid.begin(), grid.end())) throw ArgumentError("curve_from_min_distortion: grid must be sorted");
  const std::size_t n = eps_star.size();
  for (double eps : grid) {
    const auto fallen = static_cast<std::size_t>(std::upper_bound(eps_star.begin(), eps_star.end(), eps) - eps_star.begin());
    CurvePoint p;
    p.epsilon = eps;
    p.n = n;
    p.attack_success = n ? static_cast<double>(fallen) / n : std::numeric_limits<double>::quiet_NaN();
    p.model_accuracy = total ? static_cast<double>(n - fallen) / total : std::numeric_limits<double>::quiet_NaN();
    c.points.push_back(p);
  }
  if (!c.points.empty() && n && c.points.back().attack_success < 1.0)
    c.warnings.push_back("curve stops before attack success reaches 100%");
  if (!run.complete()) c.warnings.push_back("attack inapplicable on some examples; they are left out");
  return c;
}

inline AccuracyCurve curve_from_grid(std::span<const AttackRun> runs) {
  AccuracyCurve c;
  c.mode = "grid";
  if (!runs.empty()) c.attack = runs[0].attack;
  for (const auto& r : runs) {
    CurvePoint p;
    p.epsilon = r.epsilon;
    p.n = r.eligible();
    p.attack_success = r.success_rate();
    p.model_accuracy = r.model_accuracy();
    c.points.push_back(p);
    if (!r.complete()) c.warnings.push_back("attack inapplicable on some examples at epsilon " + std::to_string(r.epsilon));
  }
  if (!c.points.empty() && c.points.back().attack_success < 1.0)
    c.warnings.push_back("curve stops before attack success reaches 100%");
  return c;
}

// Grid mode attacks once per budget; auto mode (empty grid) runs
// `min_distortion_attack` once and thresholds.
inline AccuracyCurve build_accuracy_curve(const Classifier& clf, const Dataset& data, const std::vector<bool>& correct,
                                          const ThreatModel& tm, const ExampleAttack& attack,
                                          const std::vector<double>& grid, const Rng& rng, std::size_t jobs = 1,
                                          const std::string& name = "attack") {
  if (grid.empty()) {
    AttackRun run = run_attack(clf, data, correct, name, tm, attack, rng, jobs);
    return curve_from_min_distortion(run);
  }
  if (!std::is_sorted(grid.begin(), grid.end())) throw ArgumentError("build_accuracy_curve: grid must be sorted");
  std::vector<AttackRun> runs;
  for (std::size_t k = 0; k < grid.size(); ++k)
    runs.push_back(run_attack(clf, data, correct, name, tm.with_epsilon(grid[k]), attack, rng.fork(k), jobs));
  return curve_from_grid(runs);
}

// ---------------------------------------------------------------------------
// Detector ROC

struct RocPoint {
  double fpr = 0.0;
  double tpr = 0.0;
  double threshold = 0.0;
};

struct RocCurve {
  std::vector<RocPoint> points;
  double auc = 0.0;
};

// An input is flagged when its score is >= the threshold. Thresholds sweep
// every observed score plus +inf, giving (0,0) and (1,1) as endpoints.
inline RocCurve roc_from_scores(std::vector<double> clean, std::vector<double> adversarial) {
  if (clean.empty() || adversarial.empty()) throw ArgumentError("roc_from_scores: need clean and adversarial scores");
  std::vector<double> thresholds = clean;
  thresholds.insert(thresholds.end(), adversarial.begin(), adversarial.end());
  std::sort(thresholds.begin(), thresholds.end(), std::greater<>());
  thresholds.erase(std::unique(thresholds.begin(), thresholds.end()), thresholds.end());
  std::sort(clean.begin(), clean.end());
  std::sort(adversarial.begin(), adversarial.end());
  auto at_least = [](const std::vector<double>& v, double t) {
    return static_cast<double>(v.end() - std::lower_bound(v.begin(), v.end(), t)) / static_cast<double>(v.size());
  };
  RocCurve roc;
  roc.points.push_back({0.0, 0.0, std::numeric_limits<double>::infinity()});
  for (double t : thresholds) roc.points.push_back({at_least(clean, t), at_least(adversarial, t), t});
  std::stable_sort(roc.points.begin(), roc.points.end(), [](const RocPoint& a, const RocPoint& b) {
    return a.fpr < b.fpr || (a.fpr == b.fpr && a.tpr < b.tpr);
  });
  for (std::size_t k = 1; k < roc.points.size(); ++k)
    roc.auc += (roc.points[k].fpr - roc.points[k - 1].fpr) * (roc.points[k].tpr + roc.points[k - 1].tpr) / 2.0;
  return roc;
}

// nullopt when the model exposes no abstain score.
inline std::optional<RocCurve> build_roc(const Classifier& detector, std::span<const Vec> clean,
                                         std::span<const Vec> adversarial, Rng& rng) {
  std::vector<double> cs, as;
  for (const auto& x : clean) {
    auto s = detector.abstain_score(x, &rng);
    if (!s) return std::nullopt;
    cs.push_back(*s);
  }
  for (const auto& x : adversarial) {
    auto s = detector.abstain_score(x, &rng);
    if (!s) return std::nullopt;
    as.push_back(*s);
  }
  if (cs.empty() || as.empty()) return std::nullopt;
  return roc_from_scores(std::move(cs), std::move(as));
}

// ---------------------------------------------------------------------------
// Ablation

// Attacks the model with every defense layer removed; an attack that cannot
// beat `floor` there is itself broken. A bare model is attacked as is.
inline Verdict ablation_check(const ClassifierPtr& wrapped, const ModelAttackRun& attack, double floor = 0.9) {
  Verdict v;
  v.check_id = check_id::ablation;
  const std::size_t depth = wrapper_depth(wrapped);
  const ClassifierPtr bare = unwrap_all(wrapped);
  const AttackRun run = attack(*bare);
  const double s = run.success_rate();
  const std::size_t n = run.eligible();
  const double slack = 3.0 * binomial_sigma(floor, n);
  std::vector<std::size_t> failed;
  for (std::size_t i = 0; i < run.size(); ++i)
    if (run.outcomes[i] == Outcome::failure) failed.push_back(i);
  v.evidence = {{"model", wrapped->id()},      {"undefended_model", bare->id()}, {"wrapper_depth", depth},
                {"attack", run.attack},        {"epsilon", run.epsilon},         {"success", s},
                {"floor", floor},              {"slack", slack},                 {"n", n},
                {"failed_examples", failed}};
  if (depth == 0) v.evidence["note"] = "no defense layers; attacked directly";
  if (n == 0) {
    v.status = Status::inconclusive;
    v.summary = "no originally-correct examples";
  } else if (s >= floor) {
    v.status = Status::pass;
    v.summary = "attack succeeds on the undefended model";
  } else if (s + slack < floor) {
    v.status = Status::fail;
    v.summary = "attack reaches only " + std::to_string(s) + " on the undefended model: the attack is broken";
  } else {
    v.status = Status::inconclusive;
    v.summary = "undefended success below the floor within sampling slack";
  }
  return v;
}

// ---------------------------------------------------------------------------
// Risk estimates (lower bounds: attacks only approximate the inner max/min)

struct AdversarialRisk {
  double worst_case_loss_mean = 0.0;
  double min_dist_mean = 0.0;
  double min_dist_median = 0.0;
};

inline double median(std::vector<double> v) {
  if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
  std::sort(v.begin(), v.end());
  const std::size_t m = v.size() / 2;
  if (v.size() % 2) return v[m];
  if (std::isinf(v[m - 1]) && v[m - 1] == v[m]) return v[m];
  return 0.5 * (v[m - 1] + v[m]);
}

inline AdversarialRisk adversarial_risk(std::span<const double> worst_case_losses,
                                        std::span<const double> min_distances) {
  AdversarialRisk r;
  const double nan = std::numeric_limits<double>::quiet_NaN();
  r.worst_case_loss_mean = worst_case_losses.empty()
                               ? nan
                               : std::accumulate(worst_case_losses.begin(), worst_case_losses.end(), 0.0) /
                                     static_cast<double>(worst_case_losses.size());
  r.min_dist_mean = min_distances.empty() ? nan
                                          : std::accumulate(min_distances.begin(), min_distances.end(), 0.0) /
                                                static_cast<double>(min_distances.size());
  r.min_dist_median = median({min_distances.begin(), min_distances.end()});
  return r;
}

}  // namespace advcheck
