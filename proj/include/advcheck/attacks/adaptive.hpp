#pragma once

// Adaptive-attack adapters (expectation over randomness, backward-pass
// differentiable approximation) and the transfer driver.

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "advcheck/attacks/common.hpp"
#include "advcheck/attacks/gradient.hpp"

namespace advcheck {

// Averages logits, objective values and input gradients over k independent
// randomness draws of the inner model.
class EotClassifier final : public Classifier {
 public:
  EotClassifier(ClassifierPtr inner, std::size_t samples) : inner_(std::move(inner)), k_(samples) {
    if (!inner_) throw ArgumentError("eot: null model");
    if (k_ == 0) throw ArgumentError("eot: samples must be positive");
  }

  std::string id() const override { return "eot" + std::to_string(k_) + "(" + inner_->id() + ")"; }
  std::size_t num_classes() const override { return inner_->num_classes(); }
  std::size_t input_dim() const override { return inner_->input_dim(); }
  std::size_t query_cost() const override { return k_ * inner_->query_cost(); }
  std::optional<RandomnessSpec> randomness() const override { return inner_->randomness(); }
  std::size_t samples() const { return k_; }

  Vec logits(const Vec& x, Rng* noise = nullptr) const override {
    Vec mean(num_classes(), 0.0);
    for (std::size_t s = 0; s < k_; ++s) axpy(1.0, inner_->logits(x, noise), mean);
    for (double& v : mean) v /= static_cast<double>(k_);
    return mean;
  }

  std::optional<InputGradient> input_grad(const Vec& x, const LogitObjective& objective,
                                          Rng* noise = nullptr) const override {
    InputGradient out;
    out.logits.assign(num_classes(), 0.0);
    out.dx.assign(x.size(), 0.0);
    for (std::size_t s = 0; s < k_; ++s) {
      auto g = inner_->input_grad(x, objective, noise);
      if (!g) return std::nullopt;
      axpy(1.0, g->logits, out.logits);
      axpy(1.0, g->dx, out.dx);
      out.loss += g->loss;
    }
    const double inv = 1.0 / static_cast<double>(k_);
    for (double& v : out.logits) v *= inv;
    for (double& v : out.dx) v *= inv;
    out.loss *= inv;
    return out;
  }

 private:
  ClassifierPtr inner_;
  std::size_t k_;
};

inline ClassifierPtr eot_wrap(ClassifierPtr clf, std::size_t samples) {
  if (samples == 0) throw ArgumentError("eot: samples must be positive");
  return std::make_shared<EotClassifier>(std::move(clf), samples);
}

// Vector-Jacobian product of a surrogate for the preprocessor: (x, upstream) -> dx.
using SurrogateVjp = std::function<Vec(const Vec& x, const Vec& upstream)>;

// Exact forward pass through the model; on the backward pass the
// preprocessor's Jacobian is replaced by the surrogate (identity by default).
class BpdaClassifier final : public Classifier {
 public:
  BpdaClassifier(ClassifierPtr model, SurrogateVjp surrogate) : model_(std::move(model)), surrogate_(std::move(surrogate)) {
    if (!model_) throw ArgumentError("bpda: null model");
    if (!model_->inner() || !model_->preprocess(Vec(model_->input_dim(), 0.0)))
      throw ArgumentError("bpda: model '" + model_->id() + "' exposes no preprocessor boundary");
  }

  std::string id() const override { return "bpda(" + model_->id() + ")"; }
  std::size_t num_classes() const override { return model_->num_classes(); }
  std::size_t input_dim() const override { return model_->input_dim(); }
  std::size_t query_cost() const override { return model_->query_cost(); }
  std::optional<RandomnessSpec> randomness() const override { return model_->randomness(); }

  Vec logits(const Vec& x, Rng* noise = nullptr) const override { return model_->logits(x, noise); }
  std::size_t predict(const Vec& x, Rng* noise = nullptr) const override { return model_->predict(x, noise); }
  std::optional<double> abstain_score(const Vec& x, Rng* noise = nullptr) const override {
    return model_->abstain_score(x, noise);
  }

  std::optional<InputGradient> input_grad(const Vec& x, const LogitObjective& objective,
                                          Rng* noise = nullptr) const override {
    const Vec z = *model_->preprocess(x);
    auto g = model_->inner()->input_grad(z, objective, noise);
    if (!g) return std::nullopt;
    if (surrogate_) g->dx = surrogate_(x, g->dx);
    return g;
  }

 private:
  ClassifierPtr model_;
  SurrogateVjp surrogate_;
};

inline ClassifierPtr bpda_wrap(ClassifierPtr model, SurrogateVjp surrogate = nullptr) {
  return std::make_shared<BpdaClassifier>(std::move(model), std::move(surrogate));
}

// Mean-logit ensemble of substitute models.
class EnsembleClassifier final : public Classifier {
 public:
  explicit EnsembleClassifier(std::vector<ClassifierPtr> members) : members_(std::move(members)) {
    if (members_.empty()) throw ArgumentError("ensemble: no members");
    for (const auto& m : members_)
      if (!m || m->num_classes() != members_[0]->num_classes() || m->input_dim() != members_[0]->input_dim())
        throw ArgumentError("ensemble: members disagree on shape");
  }

  std::string id() const override {
    std::string s = "ensemble(";
    for (std::size_t i = 0; i < members_.size(); ++i) s += (i ? "," : "") + members_[i]->id();
    return s + ")";
  }
  std::size_t num_classes() const override { return members_[0]->num_classes(); }
  std::size_t input_dim() const override { return members_[0]->input_dim(); }
  std::size_t query_cost() const override {
    std::size_t c = 0;
    for (const auto& m : members_) c += m->query_cost();
    return c;
  }

  Vec logits(const Vec& x, Rng* noise = nullptr) const override {
    Vec mean(num_classes(), 0.0);
    for (const auto& m : members_) axpy(1.0, m->logits(x, noise), mean);
    for (double& v : mean) v /= static_cast<double>(members_.size());
    return mean;
  }

  std::optional<InputGradient> input_grad(const Vec& x, const LogitObjective& objective,
                                          Rng* noise = nullptr) const override {
    const Vec z = logits(x, noise);
    const LossAndGrad outer = objective(z);
    const double inv = 1.0 / static_cast<double>(members_.size());
    InputGradient out;
    out.logits = z;
    out.loss = outer.loss;
    out.dx.assign(x.size(), 0.0);
    const LogitObjective pass = [&](const Vec&) {
      LossAndGrad lg;
      lg.dlogits = scaled(outer.dlogits, inv);
      return lg;
    };
    for (const auto& m : members_) {
      auto g = m->input_grad(x, pass, noise);
      if (!g) return std::nullopt;
      axpy(1.0, g->dx, out.dx);
    }
    return out;
  }

 private:
  std::vector<ClassifierPtr> members_;
};

// PGD on the substitute, then `confidence_iters` further ascent steps once it
// succeeds there, then a single evaluation on the target.
inline AttackResult transfer_attack(const Classifier& substitute, const Classifier& target, const ThreatModel& tm,
                                    const AttackGoal& goal, const Vec& x, std::size_t y, const AttackConfig& cfg,
                                    Rng& rng) {
  Rng sub_stream = rng.fork(1);
  AttackResult on_sub = pgd(substitute, tm, goal, x, y, cfg, sub_stream);
  Vec cur = on_sub.final_x;
  std::size_t sub_queries = on_sub.queries;
  std::size_t extra = 0;
  if (on_sub.success && cfg.confidence_iters > 0) {
    Rng conf_stream = rng.fork(2);
    Oracle oracle(substitute, conf_stream);
    const auto objective = detail::objective_for(goal, y, cfg.loss);
    const double step = cfg.step_for(tm.epsilon);
    for (std::size_t it = 0; it < cfg.confidence_iters; ++it) {
      auto g = oracle.input_grad(cur, objective);
      if (!g) break;
      Vec next = cur;
      axpy(step, detail::ascent_direction(tm.p, g->dx), next);
      cur = project(tm, x, next);
      ++extra;
    }
    sub_queries += oracle.queries();
  }

  AttackResult r;
  r.attack = "transfer";
  r.seed = rng.seed();
  r.hyperparams = config_echo(cfg, tm, goal);
  r.hyperparams["substitute"] = substitute.id();
  r.hyperparams["iterations"] = cfg.iterations;
  r.hyperparams["restarts"] = cfg.restarts;
  r.hyperparams["step_size"] = cfg.step_for(tm.epsilon);
  r.hyperparams["confidence_iters"] = cfg.confidence_iters;
  r.hyperparams["substitute_queries"] = sub_queries;
  r.hyperparams["substitute_success"] = on_sub.success;
  r.hyperparams["confidence_steps_taken"] = extra;
  r.final_x = cur;
  r.final_loss = on_sub.final_loss;
  r.loss_trace = on_sub.loss_trace;
  r.iterations = on_sub.iterations;
  Rng target_stream = rng.fork(3);
  Oracle target_oracle(target, target_stream);
  r.hyperparams["target_prediction"] = target_oracle.predict(cur);
  r.queries = target_oracle.queries();
  verify_result(r, target, tm, goal, x, y, true, cfg.judge_votes);
  return r;
}

}  // namespace advcheck
