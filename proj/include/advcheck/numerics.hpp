#pragma once

// Dense numerics: vectors, a forkable seeded RNG, softmax cross-entropy,
// a manual-backprop two-layer MLP with an SGD trainer, a central-difference
// gradient checker and the AGMP parameter file format.

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <functional>
#include <iterator>
#include <limits>
#include <numbers>
#include <numeric>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "advcheck/errors.hpp"

namespace advcheck {

using Vec = std::vector<double>;

// ---------------------------------------------------------------------------
// Vector helpers

inline double dot(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw ArgumentError("dot: dimension mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

inline double norm_l2(std::span<const double> a) { return std::sqrt(dot(a, a)); }

inline double norm_l1(std::span<const double> a) {
  double s = 0.0;
  for (double v : a) s += std::abs(v);
  return s;
}

inline double norm_linf(std::span<const double> a) {
  double s = 0.0;
  for (double v : a) s = std::max(s, std::abs(v));
  return s;
}

inline Vec sub(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw ArgumentError("sub: dimension mismatch");
  Vec out(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] - b[i];
  return out;
}

inline Vec add(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw ArgumentError("add: dimension mismatch");
  Vec out(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] + b[i];
  return out;
}

// y += alpha * x
inline void axpy(double alpha, std::span<const double> x, std::span<double> y) {
  if (x.size() != y.size()) throw ArgumentError("axpy: dimension mismatch");
  for (std::size_t i = 0; i < x.size(); ++i) y[i] += alpha * x[i];
}

inline Vec scaled(std::span<const double> a, double s) {
  Vec out(a.begin(), a.end());
  for (double& v : out) v *= s;
  return out;
}

inline bool all_finite(std::span<const double> a) {
  return std::all_of(a.begin(), a.end(), [](double v) { return std::isfinite(v); });
}

inline bool all_zero(std::span<const double> a) {
  return std::all_of(a.begin(), a.end(), [](double v) { return v == 0.0; });
}

inline double sign(double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); }

// First index of the maximum.
inline std::size_t argmax(std::span<const double> a) {
  if (a.empty()) throw ArgumentError("argmax of empty vector");
  return static_cast<std::size_t>(std::distance(a.begin(), std::max_element(a.begin(), a.end())));
}

// ---------------------------------------------------------------------------
// Rng

namespace detail {
inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}
}  // namespace detail

// xoshiro256** seeded through splitmix64. Child streams are a pure function of
// (parent seed, stream id), never of how much the parent has been consumed, so
// forking up front gives the same streams regardless of scheduling.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : seed_(seed) {
    std::uint64_t s = seed;
    for (auto& word : state_) {
      s = detail::splitmix64(s);
      word = s;
    }
  }

  std::uint64_t seed() const noexcept { return seed_; }

  Rng fork(std::uint64_t stream) const {
    return Rng(detail::splitmix64(seed_ ^ detail::splitmix64(stream + 0x632be59bd9b4e019ULL)));
  }

  std::uint64_t next_u64() {
    const std::uint64_t result = std::rotl(state_[1] * 5, 7) * 9;
    const std::uint64_t t = state_[1] << 17;
    state_[2] ^= state_[0];
    state_[3] ^= state_[1];
    state_[1] ^= state_[2];
    state_[0] ^= state_[3];
    state_[2] ^= t;
    state_[3] = std::rotl(state_[3], 45);
    return result;
  }

  // Uniform in [0, 1).
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Standard normal via Box-Muller; one draw per call keeps the stream stateless.
  double normal() {
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }

  double rademacher() { return (next_u64() >> 63) ? 1.0 : -1.0; }

  std::size_t index(std::size_t n) {
    if (n == 0) throw ArgumentError("Rng::index on empty range");
    return static_cast<std::size_t>(uniform() * static_cast<double>(n)) % n;
  }

  Vec normal_vec(std::size_t dim) {
    Vec v(dim);
    for (double& x : v) x = normal();
    return v;
  }

  template <typename T>
  void shuffle(std::vector<T>& items) {
    for (std::size_t i = items.size(); i > 1; --i) std::swap(items[i - 1], items[index(i)]);
  }

 private:
  std::uint64_t seed_;
  std::uint64_t state_[4];
};

// ---------------------------------------------------------------------------
// Softmax cross-entropy

inline Vec softmax(std::span<const double> logits) {
  if (logits.empty()) throw ArgumentError("softmax of empty logits");
  const double m = *std::max_element(logits.begin(), logits.end());
  Vec p(logits.size());
  double z = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    p[i] = std::exp(logits[i] - m);
    z += p[i];
  }
  for (double& v : p) v /= z;
  return p;
}

// m + log1p(sum over non-max entries of exp(v - m)); the log1p form keeps the
// tiny losses of confidently classified inputs instead of rounding them to 0.
inline double logsumexp(std::span<const double> logits) {
  if (logits.empty()) throw ArgumentError("logsumexp of empty logits");
  const std::size_t top = argmax(logits);
  const double m = logits[top];
  double rest = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i)
    if (i != top) rest += std::exp(logits[i] - m);
  return m + std::log1p(rest);
}

struct LossAndGrad {
  double loss = 0.0;
  Vec dlogits;
};

// loss = logsumexp(logits) - logits[label]; dlogits = softmax - onehot(label).
inline LossAndGrad softmax_xent(std::span<const double> logits, std::size_t label) {
  if (label >= logits.size()) throw ArgumentError("softmax_xent: label out of range");
  LossAndGrad out;
  const std::size_t top = argmax(logits);
  double rest = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i)
    if (i != top) rest += std::exp(logits[i] - logits[top]);
  out.loss = (logits[top] - logits[label]) + std::log1p(rest);
  out.dlogits = softmax(logits);
  out.dlogits[label] -= 1.0;
  return out;
}

// ---------------------------------------------------------------------------
// MLP

enum class Activation : std::uint32_t { identity = 0, relu = 1, sigmoid = 2 };

inline std::string to_string(Activation a) {
  switch (a) {
    case Activation::identity: return "identity";
    case Activation::relu: return "relu";
    case Activation::sigmoid: return "sigmoid";
  }
  return "unknown";
}

inline Activation activation_from_string(const std::string& s) {
  if (s == "identity") return Activation::identity;
  if (s == "relu") return Activation::relu;
  if (s == "sigmoid") return Activation::sigmoid;
  throw ArgumentError("unknown activation '" + s + "'");
}

// Fully connected layer; weight is out x in, row-major.
struct Dense {
  std::size_t in = 0;
  std::size_t out = 0;
  Vec weight;
  Vec bias;

  double w(std::size_t row, std::size_t col) const { return weight[row * in + col]; }
};

// One layer (linear model) or two layers (input -> hidden -> classes). The
// activation applies to the hidden layer only.
struct MlpParams {
  std::vector<Dense> layers;
  Activation activation = Activation::relu;

  std::size_t input_dim() const { return layers.empty() ? 0 : layers.front().in; }
  std::size_t num_classes() const { return layers.empty() ? 0 : layers.back().out; }

  void validate() const {
    if (layers.empty() || layers.size() > 2) throw ArgumentError("MlpParams: expected one or two layers");
    for (std::size_t l = 0; l < layers.size(); ++l) {
      const Dense& d = layers[l];
      if (d.in == 0 || d.out == 0) throw ArgumentError("MlpParams: empty layer");
      if (d.weight.size() != d.in * d.out || d.bias.size() != d.out)
        throw ArgumentError("MlpParams: layer " + std::to_string(l) + " storage does not match its shape");
      if (l > 0 && layers[l - 1].out != d.in) throw ArgumentError("MlpParams: inconsistent shape chain");
      if (!all_finite(d.weight) || !all_finite(d.bias)) throw ArgumentError("MlpParams: non-finite entry");
    }
  }

  friend bool operator==(const MlpParams& a, const MlpParams& b) {
    if (a.activation != b.activation || a.layers.size() != b.layers.size()) return false;
    for (std::size_t l = 0; l < a.layers.size(); ++l) {
      const Dense& x = a.layers[l];
      const Dense& y = b.layers[l];
      if (x.in != y.in || x.out != y.out || x.weight != y.weight || x.bias != y.bias) return false;
    }
    return true;
  }
};

// Zeroed copy with the same shapes; used as a gradient accumulator.
inline MlpParams zeros_like(const MlpParams& p) {
  MlpParams z = p;
  for (Dense& d : z.layers) {
    std::fill(d.weight.begin(), d.weight.end(), 0.0);
    std::fill(d.bias.begin(), d.bias.end(), 0.0);
  }
  return z;
}

inline MlpParams make_linear(std::size_t in, std::size_t classes, Vec weight, Vec bias) {
  MlpParams p;
  p.activation = Activation::identity;
  p.layers.push_back(Dense{in, classes, std::move(weight), std::move(bias)});
  p.validate();
  return p;
}

// Two-class linear model whose logit difference is w.x + b: class 0 wins when
// w.x + b > 0.
inline MlpParams make_linear_binary(std::span<const double> w, double b) {
  Vec weight(2 * w.size(), 0.0);
  std::copy(w.begin(), w.end(), weight.begin());
  return make_linear(w.size(), 2, std::move(weight), Vec{b, 0.0});
}

// He-style initialisation for relu, Glorot-style otherwise.
inline MlpParams init_mlp(std::size_t in, std::size_t hidden, std::size_t classes, Activation act, Rng& rng) {
  auto layer = [&](std::size_t fan_in, std::size_t fan_out, double gain) {
    Dense d{fan_in, fan_out, Vec(fan_in * fan_out), Vec(fan_out, 0.0)};
    const double scale = gain / std::sqrt(static_cast<double>(fan_in));
    for (double& w : d.weight) w = scale * rng.normal();
    return d;
  };
  MlpParams p;
  p.activation = act;
  const double gain = act == Activation::relu ? std::sqrt(2.0) : 1.0;
  if (hidden == 0) {
    p.activation = Activation::identity;
    p.layers.push_back(layer(in, classes, 1.0));
  } else {
    p.layers.push_back(layer(in, hidden, gain));
    p.layers.push_back(layer(hidden, classes, 1.0));
  }
  return p;
}

namespace detail {
inline double activate(Activation a, double v) {
  switch (a) {
    case Activation::identity: return v;
    case Activation::relu: return v > 0.0 ? v : 0.0;
    case Activation::sigmoid: return 1.0 / (1.0 + std::exp(-v));
  }
  return v;
}

// Derivative expressed through the pre-activation and the activation value.
inline double activate_grad(Activation a, double pre, double post) {
  switch (a) {
    case Activation::identity: return 1.0;
    case Activation::relu: return pre > 0.0 ? 1.0 : 0.0;
    case Activation::sigmoid: return post * (1.0 - post);
  }
  return 1.0;
}

inline Vec affine(const Dense& d, std::span<const double> x) {
  Vec out(d.bias);
  for (std::size_t r = 0; r < d.out; ++r) {
    double s = 0.0;
    const double* row = d.weight.data() + r * d.in;
    for (std::size_t c = 0; c < d.in; ++c) s += row[c] * x[c];
    out[r] += s;
  }
  return out;
}

// dx = W^T dy
inline Vec affine_vjp(const Dense& d, std::span<const double> dy) {
  Vec dx(d.in, 0.0);
  for (std::size_t r = 0; r < d.out; ++r) {
    if (dy[r] == 0.0) continue;
    const double* row = d.weight.data() + r * d.in;
    for (std::size_t c = 0; c < d.in; ++c) dx[c] += row[c] * dy[r];
  }
  return dx;
}
}  // namespace detail

// Intermediate values of one forward pass, kept for the backward pass.
struct MlpTape {
  Vec input;
  Vec hidden_pre;
  Vec hidden;
  Vec logits;
};

inline MlpTape mlp_forward(const MlpParams& p, std::span<const double> x) {
  if (x.size() != p.input_dim()) throw ArgumentError("mlp_forward: input dimension does not match first layer");
  MlpTape t;
  t.input.assign(x.begin(), x.end());
  if (p.layers.size() == 1) {
    t.logits = detail::affine(p.layers[0], x);
    return t;
  }
  t.hidden_pre = detail::affine(p.layers[0], x);
  t.hidden.resize(t.hidden_pre.size());
  for (std::size_t i = 0; i < t.hidden.size(); ++i) t.hidden[i] = detail::activate(p.activation, t.hidden_pre[i]);
  t.logits = detail::affine(p.layers[1], t.hidden);
  return t;
}

inline Vec mlp_logits(const MlpParams& p, std::span<const double> x) { return mlp_forward(p, x).logits; }

// Backpropagates `dlogits` through the recorded pass. Returns d/dx and, when
// `grads` is non-null, accumulates parameter gradients into it.
inline Vec mlp_backward(const MlpParams& p, const MlpTape& t, std::span<const double> dlogits, MlpParams* grads) {
  if (dlogits.size() != p.num_classes()) throw ArgumentError("mlp_backward: dlogits dimension mismatch");
  auto accumulate = [](Dense& g, std::span<const double> in, std::span<const double> dy) {
    for (std::size_t r = 0; r < g.out; ++r) {
      g.bias[r] += dy[r];
      double* row = g.weight.data() + r * g.in;
      for (std::size_t c = 0; c < g.in; ++c) row[c] += dy[r] * in[c];
    }
  };
  if (p.layers.size() == 1) {
    if (grads) accumulate(grads->layers[0], t.input, dlogits);
    return detail::affine_vjp(p.layers[0], dlogits);
  }
  Vec dhidden = detail::affine_vjp(p.layers[1], dlogits);
  if (grads) accumulate(grads->layers[1], t.hidden, dlogits);
  for (std::size_t i = 0; i < dhidden.size(); ++i)
    dhidden[i] *= detail::activate_grad(p.activation, t.hidden_pre[i], t.hidden[i]);
  if (grads) accumulate(grads->layers[0], t.input, dhidden);
  return detail::affine_vjp(p.layers[0], dhidden);
}

struct MlpGradients {
  Vec logits;
  double loss = 0.0;
  Vec dx;
  MlpParams dparams;
};

inline MlpGradients mlp_forward_backward(const MlpParams& p, std::span<const double> x, std::size_t label) {
  MlpTape tape = mlp_forward(p, x);
  LossAndGrad lg = softmax_xent(tape.logits, label);
  MlpGradients out;
  out.dparams = zeros_like(p);
  out.dx = mlp_backward(p, tape, lg.dlogits, &out.dparams);
  out.loss = lg.loss;
  out.logits = std::move(tape.logits);
  return out;
}

// ---------------------------------------------------------------------------
// Training

struct TrainOptions {
  std::size_t epochs = 50;
  double lr = 0.1;
  std::size_t batch_size = 16;
};

inline double mean_loss(const MlpParams& p, std::span<const Vec> inputs, std::span<const std::size_t> labels) {
  double total = 0.0;
  for (std::size_t i = 0; i < inputs.size(); ++i) total += softmax_xent(mlp_logits(p, inputs[i]), labels[i]).loss;
  return total / static_cast<double>(inputs.size());
}

inline double accuracy(const MlpParams& p, std::span<const Vec> inputs, std::span<const std::size_t> labels) {
  std::size_t correct = 0;
  for (std::size_t i = 0; i < inputs.size(); ++i) correct += argmax(mlp_logits(p, inputs[i])) == labels[i];
  return static_cast<double>(correct) / static_cast<double>(inputs.size());
}

// Mini-batch SGD over shuffled epochs. Returns the epoch-end parameters with
// the lowest training loss, never worse than `init`.
inline MlpParams sgd_train(const MlpParams& init, std::span<const Vec> inputs, std::span<const std::size_t> labels,
                           const TrainOptions& opt, Rng& rng) {
  if (inputs.empty()) throw ArgumentError("sgd_train: empty dataset");
  if (inputs.size() != labels.size()) throw ArgumentError("sgd_train: inputs and labels differ in length");
  if (!(opt.lr > 0.0)) throw ArgumentError("sgd_train: learning rate must be positive");
  if (opt.batch_size == 0) throw ArgumentError("sgd_train: batch size must be positive");
  init.validate();
  if (opt.epochs == 0) return init;

  MlpParams params = init;
  MlpParams best = init;
  double best_loss = mean_loss(init, inputs, labels);
  std::vector<std::size_t> order(inputs.size());
  std::iota(order.begin(), order.end(), 0);

  for (std::size_t epoch = 1; epoch <= opt.epochs; ++epoch) {
    rng.shuffle(order);
    for (std::size_t start = 0; start < order.size(); start += opt.batch_size) {
      const std::size_t stop = std::min(order.size(), start + opt.batch_size);
      MlpParams grad = zeros_like(params);
      for (std::size_t k = start; k < stop; ++k) {
        MlpTape tape = mlp_forward(params, inputs[order[k]]);
        LossAndGrad lg = softmax_xent(tape.logits, labels[order[k]]);
        mlp_backward(params, tape, lg.dlogits, &grad);
      }
      const double step = opt.lr / static_cast<double>(stop - start);
      for (std::size_t l = 0; l < params.layers.size(); ++l) {
        axpy(-step, grad.layers[l].weight, params.layers[l].weight);
        axpy(-step, grad.layers[l].bias, params.layers[l].bias);
      }
    }
    const double loss = mean_loss(params, inputs, labels);
    if (!std::isfinite(loss)) throw TrainingDiverged(epoch, "non-finite training loss");
    for (const Dense& d : params.layers)
      if (!all_finite(d.weight) || !all_finite(d.bias)) throw TrainingDiverged(epoch, "non-finite parameter");
    if (loss <= best_loss) {
      best_loss = loss;
      best = params;
    }
  }
  return best;
}

// ---------------------------------------------------------------------------
// Gradient checking

inline constexpr double kFiniteDifferenceStep = 1e-5;

// Max over coordinates of |fd_i - analytic_i| / max(1, |fd_i|, |analytic_i|),
// fd by central differences with step 1e-5.
inline double gradient_check(const std::function<double(const Vec&)>& f, const Vec& x,
                             std::span<const double> analytic) {
  if (analytic.size() != x.size()) throw ArgumentError("gradient_check: gradient dimension mismatch");
  double worst = 0.0;
  Vec probe = x;
  for (std::size_t i = 0; i < x.size(); ++i) {
    probe[i] = x[i] + kFiniteDifferenceStep;
    const double up = f(probe);
    probe[i] = x[i] - kFiniteDifferenceStep;
    const double down = f(probe);
    probe[i] = x[i];
    const double fd = (up - down) / (2.0 * kFiniteDifferenceStep);
    const double denom = std::max({1.0, std::abs(fd), std::abs(analytic[i])});
    worst = std::max(worst, std::abs(fd - analytic[i]) / denom);
  }
  return worst;
}

// ---------------------------------------------------------------------------
// AGMP parameter files
//
//   "AGMP" | u32 version | u32 layer count | u32 activation
//   per layer: u32 out | u32 in | f64[out*in] weights (row-major) | f64[out] biases
//
// All integers and floats little-endian.

inline constexpr std::uint32_t kAgmpVersion = 1;

namespace detail {
inline void put_u32(std::string& buf, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) buf.push_back(static_cast<char>((v >> (8 * i)) & 0xffu));
}
inline void put_f64(std::string& buf, double d) {
  const auto bits = std::bit_cast<std::uint64_t>(d);
  for (int i = 0; i < 8; ++i) buf.push_back(static_cast<char>((bits >> (8 * i)) & 0xffu));
}

class ByteReader {
 public:
  explicit ByteReader(std::string_view bytes) : bytes_(bytes) {}
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
    pos_ += 4;
    return v;
  }
  double f64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
    pos_ += 8;
    return std::bit_cast<double>(v);
  }
  std::string_view take(std::size_t n) {
    need(n);
    auto s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  std::size_t pos() const { return pos_; }
  bool done() const { return pos_ == bytes_.size(); }

 private:
  void need(std::size_t n) const {
    if (bytes_.size() - pos_ < n) throw FormatError("truncated AGMP data", pos_);
  }
  std::string_view bytes_;
  std::size_t pos_ = 0;
};
}  // namespace detail

inline std::string encode_params(const MlpParams& p) {
  p.validate();
  std::string buf = "AGMP";
  detail::put_u32(buf, kAgmpVersion);
  detail::put_u32(buf, static_cast<std::uint32_t>(p.layers.size()));
  detail::put_u32(buf, static_cast<std::uint32_t>(p.activation));
  for (const Dense& d : p.layers) {
    detail::put_u32(buf, static_cast<std::uint32_t>(d.out));
    detail::put_u32(buf, static_cast<std::uint32_t>(d.in));
    for (double w : d.weight) detail::put_f64(buf, w);
    for (double b : d.bias) detail::put_f64(buf, b);
  }
  return buf;
}

inline MlpParams decode_params(std::string_view bytes) {
  detail::ByteReader in(bytes);
  if (in.take(4) != "AGMP") throw FormatError("bad AGMP magic", 0);
  const std::size_t version_at = in.pos();
  if (in.u32() != kAgmpVersion) throw FormatError("unsupported AGMP version", version_at);
  const std::size_t count_at = in.pos();
  const std::uint32_t count = in.u32();
  if (count == 0 || count > 2) throw FormatError("AGMP layer count must be 1 or 2", count_at);
  const std::size_t act_at = in.pos();
  const std::uint32_t act = in.u32();
  if (act > 2) throw FormatError("unknown AGMP activation tag", act_at);
  MlpParams p;
  p.activation = static_cast<Activation>(act);
  for (std::uint32_t l = 0; l < count; ++l) {
    Dense d;
    d.out = in.u32();
    d.in = in.u32();
    d.weight.resize(d.out * d.in);
    d.bias.resize(d.out);
    for (double& w : d.weight) w = in.f64();
    for (double& b : d.bias) b = in.f64();
    p.layers.push_back(std::move(d));
  }
  if (!in.done()) throw FormatError("trailing bytes after AGMP payload", in.pos());
  try {
    p.validate();
  } catch (const ArgumentError& e) {
    throw FormatError(std::string("invalid AGMP model: ") + e.what(), 0);
  }
  return p;
}

inline void save_params(const std::string& path, const MlpParams& p) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  const std::string buf = encode_params(p);
  out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  if (!out) throw IoError("failed writing '" + path + "'");
}

inline MlpParams load_params(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw NotFoundError("model file '" + path + "' not found");
  std::string buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_params(buf);
}

}  // namespace advcheck
