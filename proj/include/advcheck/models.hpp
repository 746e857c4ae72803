#pragma once

// The classifier contract every attack targets, the reference models, and the
// defense wrappers of the model zoo.

#include <cmath>
#include <functional>
#include <limits>
#include <map>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "advcheck/errors.hpp"
#include "advcheck/numerics.hpp"

namespace advcheck {

// Returned by predict() when a detector refuses to classify.
inline constexpr std::size_t kAbstain = std::numeric_limits<std::size_t>::max();

// Scalar objective on logits together with its gradient.
using LogitObjective = std::function<LossAndGrad(const Vec& logits)>;

// Result of a differentiable query: logits at x, objective value, d objective/dx.
struct InputGradient {
  Vec logits;
  double loss = 0.0;
  Vec dx;
};

struct RandomnessSpec {
  std::string distribution;  // e.g. "gaussian"
  double sigma = 0.0;
  std::string protocol;      // how draws are taken per call
  bool fixable = false;
};

class Classifier;
using ClassifierPtr = std::shared_ptr<const Classifier>;

// Immutable once built. Randomized models draw from the caller-supplied noise
// stream, so concurrent queries never share generator state.
class Classifier {
 public:
  virtual ~Classifier() = default;

  virtual std::string id() const = 0;
  virtual std::size_t num_classes() const = 0;
  virtual std::size_t input_dim() const = 0;

  virtual Vec logits(const Vec& x, Rng* noise = nullptr) const = 0;

  virtual std::size_t predict(const Vec& x, Rng* noise = nullptr) const { return argmax(logits(x, noise)); }

  // Gradient of objective(logits(x)) with respect to x, or nullopt when the
  // model offers no gradient access.
  virtual std::optional<InputGradient> input_grad(const Vec& /*x*/, const LogitObjective& /*objective*/,
                                                  Rng* /*noise*/ = nullptr) const {
    return std::nullopt;
  }

  virtual std::optional<double> abstain_score(const Vec& /*x*/, Rng* /*noise*/ = nullptr) const {
    return std::nullopt;
  }

  virtual std::optional<RandomnessSpec> randomness() const { return std::nullopt; }

  // Copy of this model with every random draw frozen to one sample; nullptr
  // when the model is deterministic or cannot be fixed.
  virtual ClassifierPtr fix_randomness(Rng& /*rng*/) const { return nullptr; }

  // Test metadata only; attacks must not read it.
  virtual bool masked() const { return false; }

  // Wrapped model, or nullptr for a base model.
  virtual ClassifierPtr inner() const { return nullptr; }

  // Preprocessing boundary: when present, logits(x) == inner()->logits(preprocess(x)).
  virtual std::optional<Vec> preprocess(const Vec& /*x*/) const { return std::nullopt; }

  // Number of underlying model evaluations one call costs.
  virtual std::size_t query_cost() const { return 1; }
};

// ---------------------------------------------------------------------------
// Reference models

class ReferenceClassifier final : public Classifier {
 public:
  ReferenceClassifier(std::string kind, MlpParams params) : kind_(std::move(kind)), params_(std::move(params)) {
    params_.validate();
  }

  std::string id() const override { return kind_; }
  std::size_t num_classes() const override { return params_.num_classes(); }
  std::size_t input_dim() const override { return params_.input_dim(); }
  const MlpParams& params() const { return params_; }

  Vec logits(const Vec& x, Rng* = nullptr) const override { return mlp_logits(params_, x); }

  std::optional<InputGradient> input_grad(const Vec& x, const LogitObjective& objective,
                                          Rng* = nullptr) const override {
    MlpTape tape = mlp_forward(params_, x);
    LossAndGrad lg = objective(tape.logits);
    InputGradient g;
    g.dx = mlp_backward(params_, tape, lg.dlogits, nullptr);
    g.loss = lg.loss;
    g.logits = std::move(tape.logits);
    return g;
  }

 private:
  std::string kind_;
  MlpParams params_;
};

// kind is "linear" (one layer) or "mlp" (two layers).
inline ClassifierPtr make_reference(const std::string& kind, const MlpParams& params) {
  params.validate();
  if (kind == "linear" && params.layers.size() != 1) throw ArgumentError("linear reference needs exactly one layer");
  if (kind == "mlp" && params.layers.size() != 2) throw ArgumentError("mlp reference needs exactly two layers");
  if (kind != "linear" && kind != "mlp") throw ArgumentError("unknown reference kind '" + kind + "'");
  return std::make_shared<ReferenceClassifier>(kind, params);
}

// ---------------------------------------------------------------------------
// Defense wrappers

class DefenseWrapper : public Classifier {
 public:
  explicit DefenseWrapper(ClassifierPtr inner) : inner_(std::move(inner)) {
    if (!inner_) throw ArgumentError("defense wrapper needs an inner classifier");
  }

  std::size_t num_classes() const override { return inner_->num_classes(); }
  std::size_t input_dim() const override { return inner_->input_dim(); }
  ClassifierPtr inner() const override { return inner_; }
  std::optional<RandomnessSpec> randomness() const override { return inner_->randomness(); }
  std::size_t query_cost() const override { return inner_->query_cost(); }
  bool masked() const override { return inner_->masked(); }

  ClassifierPtr fix_randomness(Rng& rng) const override {
    ClassifierPtr fixed = inner_->fix_randomness(rng);
    return fixed ? rewrap(std::move(fixed)) : nullptr;
  }

  virtual std::string kind() const = 0;
  // Same wrapper around a different inner model.
  virtual ClassifierPtr rewrap(ClassifierPtr inner) const = 0;

  std::string id() const override { return inner_->id() + "+" + kind(); }

 protected:
  const Classifier& in() const { return *inner_; }

 private:
  ClassifierPtr inner_;
};

// Snaps every coordinate to a uniform grid of `levels` values over the box.
// Piecewise constant: the gradient is zero wherever it exists.
class QuantizeWrapper final : public DefenseWrapper {
 public:
  QuantizeWrapper(ClassifierPtr inner, int levels, double box_lo = 0.0, double box_hi = 1.0)
      : DefenseWrapper(std::move(inner)), levels_(levels), lo_(box_lo), hi_(box_hi) {
    if (levels < 2) throw ArgumentError("quantize: levels must be at least 2");
  }

  std::string kind() const override { return "quantize:" + std::to_string(levels_); }
  ClassifierPtr rewrap(ClassifierPtr inner) const override {
    return std::make_shared<QuantizeWrapper>(std::move(inner), levels_, lo_, hi_);
  }
  bool masked() const override { return true; }
  int levels() const { return levels_; }

  std::optional<Vec> preprocess(const Vec& x) const override { return quantize(x); }

  Vec quantize(const Vec& x) const {
    Vec out(x.size());
    const double steps = static_cast<double>(levels_ - 1);
    const double span = hi_ - lo_;
    for (std::size_t i = 0; i < x.size(); ++i) {
      if (span <= 0.0) {
        out[i] = lo_;
        continue;
      }
      const double t = std::clamp((x[i] - lo_) / span, 0.0, 1.0);
      out[i] = lo_ + std::round(t * steps) / steps * span;
    }
    return out;
  }

  Vec logits(const Vec& x, Rng* noise = nullptr) const override { return in().logits(quantize(x), noise); }
  std::size_t predict(const Vec& x, Rng* noise = nullptr) const override { return in().predict(quantize(x), noise); }

  std::optional<InputGradient> input_grad(const Vec& x, const LogitObjective& objective,
                                          Rng* noise = nullptr) const override {
    InputGradient g;
    g.logits = in().logits(quantize(x), noise);
    g.loss = objective(g.logits).loss;
    g.dx.assign(x.size(), 0.0);
    return g;
  }

  std::optional<double> abstain_score(const Vec& x, Rng* noise = nullptr) const override {
    return in().abstain_score(quantize(x), noise);
  }

 private:
  int levels_;
  double lo_;
  double hi_;
};

// Adds N(0, σ²I) to the input on every call, drawn from the caller's stream.
class NoiseWrapper final : public DefenseWrapper {
 public:
  NoiseWrapper(ClassifierPtr inner, double sigma, std::optional<Vec> fixed = std::nullopt)
      : DefenseWrapper(std::move(inner)), sigma_(sigma), fixed_(std::move(fixed)) {
    if (!(sigma >= 0.0)) throw ArgumentError("noise: sigma must be non-negative");
  }

  std::string kind() const override {
    std::ostringstream os;
    os << "noise:" << sigma_;
    return os.str();
  }
  ClassifierPtr rewrap(ClassifierPtr inner) const override {
    return std::make_shared<NoiseWrapper>(std::move(inner), sigma_, fixed_);
  }
  bool masked() const override { return DefenseWrapper::masked(); }
  double sigma() const { return sigma_; }
  bool is_fixed() const { return fixed_.has_value(); }

  std::optional<RandomnessSpec> randomness() const override {
    if (fixed_) return DefenseWrapper::randomness();
    return RandomnessSpec{"gaussian", sigma_, "one independent N(0, sigma^2 I) draw added to the input per call", true};
  }

  ClassifierPtr fix_randomness(Rng& rng) const override {
    ClassifierPtr inner_fixed = in().fix_randomness(rng);
    ClassifierPtr base = inner_fixed ? inner_fixed : inner();
    if (fixed_) return inner_fixed ? rewrap(inner_fixed) : nullptr;
    return std::make_shared<NoiseWrapper>(base, sigma_, draw(input_dim(), rng));
  }

  Vec logits(const Vec& x, Rng* noise = nullptr) const override { return in().logits(perturb(x, noise), noise); }
  std::size_t predict(const Vec& x, Rng* noise = nullptr) const override {
    return in().predict(perturb(x, noise), noise);
  }

  std::optional<InputGradient> input_grad(const Vec& x, const LogitObjective& objective,
                                          Rng* noise = nullptr) const override {
    return in().input_grad(perturb(x, noise), objective, noise);
  }

  std::optional<double> abstain_score(const Vec& x, Rng* noise = nullptr) const override {
    return in().abstain_score(perturb(x, noise), noise);
  }

 private:
  Vec draw(std::size_t dim, Rng& rng) const {
    Vec n = rng.normal_vec(dim);
    for (double& v : n) v *= sigma_;
    return n;
  }

  Vec perturb(const Vec& x, Rng* noise) const {
    if (fixed_) return add(x, *fixed_);
    if (!noise) throw ArgumentError("noise wrapper queried without a noise stream");
    return add(x, draw(x.size(), *noise));
  }

  double sigma_;
  std::optional<Vec> fixed_;
};

// Replaces logits z by k·tanh(z). Monotone, so the ranking of classes is kept;
// for large k the softmax saturates and cross-entropy gradients underflow to 0.
class SaturateWrapper final : public DefenseWrapper {
 public:
  SaturateWrapper(ClassifierPtr inner, double k) : DefenseWrapper(std::move(inner)), k_(k) {
    if (!(k > 0.0)) throw ArgumentError("saturate: k must be positive");
  }

  std::string kind() const override {
    std::ostringstream os;
    os << "saturate:" << k_;
    return os.str();
  }
  ClassifierPtr rewrap(ClassifierPtr inner) const override { return std::make_shared<SaturateWrapper>(std::move(inner), k_); }
  bool masked() const override { return k_ >= 100.0 || DefenseWrapper::masked(); }

  Vec squash(const Vec& z) const {
    Vec out(z.size());
    for (std::size_t i = 0; i < z.size(); ++i) out[i] = k_ * std::tanh(z[i]);
    return out;
  }

  Vec logits(const Vec& x, Rng* noise = nullptr) const override { return squash(in().logits(x, noise)); }

  // tanh can round distinct large logits to the same value; the inner argmax is
  // always one of the maximisers of the squashed logits.
  std::size_t predict(const Vec& x, Rng* noise = nullptr) const override { return in().predict(x, noise); }

  std::optional<InputGradient> input_grad(const Vec& x, const LogitObjective& objective,
                                          Rng* noise = nullptr) const override {
    Vec squashed;
    LossAndGrad outer;
    auto chained = [&](const Vec& z) {
      squashed = squash(z);
      outer = objective(squashed);
      LossAndGrad lg;
      lg.loss = outer.loss;
      lg.dlogits.resize(z.size());
      for (std::size_t i = 0; i < z.size(); ++i) {
        const double t = std::tanh(z[i]);
        lg.dlogits[i] = outer.dlogits[i] * k_ * (1.0 - t * t);
      }
      return lg;
    };
    auto g = in().input_grad(x, chained, noise);
    if (!g) return std::nullopt;
    g->logits = squashed;
    return g;
  }

  std::optional<double> abstain_score(const Vec& x, Rng* noise = nullptr) const override {
    return in().abstain_score(x, noise);
  }

 private:
  double k_;
};

// Abstains when the top softmax probability is at or below τ. The score is
// τ - max probability; abstention happens when it is non-negative.
class DetectorWrapper final : public DefenseWrapper {
 public:
  DetectorWrapper(ClassifierPtr inner, double threshold) : DefenseWrapper(std::move(inner)), tau_(threshold) {}

  std::string kind() const override {
    std::ostringstream os;
    os << "detector:" << tau_;
    return os.str();
  }
  ClassifierPtr rewrap(ClassifierPtr inner) const override {
    return std::make_shared<DetectorWrapper>(std::move(inner), tau_);
  }
  double threshold() const { return tau_; }

  Vec logits(const Vec& x, Rng* noise = nullptr) const override { return in().logits(x, noise); }

  std::size_t predict(const Vec& x, Rng* noise = nullptr) const override {
    const Vec z = in().logits(x, noise);
    if (score_from_logits(z) >= 0.0) return kAbstain;
    return argmax(z);
  }

  std::optional<InputGradient> input_grad(const Vec& x, const LogitObjective& objective,
                                          Rng* noise = nullptr) const override {
    return in().input_grad(x, objective, noise);
  }

  std::optional<double> abstain_score(const Vec& x, Rng* noise = nullptr) const override {
    return score_from_logits(in().logits(x, noise));
  }

  double score_from_logits(const Vec& z) const {
    const Vec p = softmax(z);
    return tau_ - *std::max_element(p.begin(), p.end());
  }

 private:
  double tau_;
};

// Generic preprocessing wrapper: logits(x) = inner(g(x)); no gradient access.
class PreprocessWrapper final : public DefenseWrapper {
 public:
  using Fn = std::function<Vec(const Vec&)>;
  PreprocessWrapper(ClassifierPtr inner, Fn fn, std::string name)
      : DefenseWrapper(std::move(inner)), fn_(std::move(fn)), name_(std::move(name)) {}

  std::string kind() const override { return name_; }
  ClassifierPtr rewrap(ClassifierPtr inner) const override {
    return std::make_shared<PreprocessWrapper>(std::move(inner), fn_, name_);
  }
  std::optional<Vec> preprocess(const Vec& x) const override { return fn_(x); }
  Vec logits(const Vec& x, Rng* noise = nullptr) const override { return in().logits(fn_(x), noise); }
  std::size_t predict(const Vec& x, Rng* noise = nullptr) const override { return in().predict(fn_(x), noise); }

 private:
  Fn fn_;
  std::string name_;
};

inline ClassifierPtr wrap_quantize(ClassifierPtr inner, int levels, double lo = 0.0, double hi = 1.0) {
  return std::make_shared<QuantizeWrapper>(std::move(inner), levels, lo, hi);
}
inline ClassifierPtr wrap_noise(ClassifierPtr inner, double sigma) {
  return std::make_shared<NoiseWrapper>(std::move(inner), sigma);
}
inline ClassifierPtr wrap_saturate(ClassifierPtr inner, double k) {
  return std::make_shared<SaturateWrapper>(std::move(inner), k);
}
inline ClassifierPtr wrap_detector(ClassifierPtr inner, double threshold) {
  return std::make_shared<DetectorWrapper>(std::move(inner), threshold);
}

// Strips every defense wrapper.
inline ClassifierPtr unwrap_all(ClassifierPtr model) {
  while (model && model->inner()) model = model->inner();
  return model;
}

inline std::size_t wrapper_depth(const ClassifierPtr& model) {
  std::size_t depth = 0;
  for (ClassifierPtr m = model; m && m->inner(); m = m->inner()) ++depth;
  return depth;
}

// ---------------------------------------------------------------------------
// Model zoo ids: a base ("linear" | "mlp") followed by "+kind:arg" wrappers,
// applied left to right.

struct ZooBases {
  std::optional<MlpParams> linear;
  std::optional<MlpParams> mlp;
  double box_lo = 0.0;
  double box_hi = 1.0;
};

inline std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> parts;
  std::string cur;
  std::istringstream is(s);
  while (std::getline(is, cur, sep)) parts.push_back(cur);
  if (!s.empty() && s.back() == sep) parts.emplace_back();
  return parts;
}

inline double parse_number(const std::string& text, const std::string& context) {
  try {
    std::size_t used = 0;
    const double v = std::stod(text, &used);
    if (used != text.size()) throw std::invalid_argument("trailing characters");
    return v;
  } catch (const std::exception&) {
    throw ArgumentError(context + ": '" + text + "' is not a number");
  }
}

inline ClassifierPtr make_zoo_model(const std::string& id, const ZooBases& bases) {
  const auto parts = split(id, '+');
  if (parts.empty() || parts[0].empty()) throw ArgumentError("empty model id");
  ClassifierPtr model;
  if (parts[0] == "linear") {
    if (!bases.linear) throw ArgumentError("model id '" + id + "' needs linear parameters");
    model = make_reference("linear", *bases.linear);
  } else if (parts[0] == "mlp") {
    if (!bases.mlp) throw ArgumentError("model id '" + id + "' needs mlp parameters");
    model = make_reference("mlp", *bases.mlp);
  } else {
    throw ArgumentError("unknown base model '" + parts[0] + "'");
  }
  for (std::size_t i = 1; i < parts.size(); ++i) {
    const auto colon = parts[i].find(':');
    if (colon == std::string::npos) throw ArgumentError("wrapper '" + parts[i] + "' needs an argument (kind:value)");
    const std::string kind = parts[i].substr(0, colon);
    const double arg = parse_number(parts[i].substr(colon + 1), "wrapper " + kind);
    if (kind == "quantize") {
      if (arg != std::floor(arg)) throw ArgumentError("quantize levels must be an integer");
      model = wrap_quantize(model, static_cast<int>(arg), bases.box_lo, bases.box_hi);
    } else if (kind == "noise") {
      model = wrap_noise(model, arg);
    } else if (kind == "saturate") {
      model = wrap_saturate(model, arg);
    } else if (kind == "detector") {
      model = wrap_detector(model, arg);
    } else {
      throw ArgumentError("unknown wrapper '" + kind + "'");
    }
  }
  return model;
}

}  // namespace advcheck
