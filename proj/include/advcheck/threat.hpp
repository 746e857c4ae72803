#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <span>
#include <string>

#include "advcheck/errors.hpp"
#include "advcheck/numerics.hpp"

namespace advcheck {

enum class Norm { l0, l1, l2, linf };

inline std::string to_string(Norm p) {
  switch (p) {
    case Norm::l0: return "0";
    case Norm::l1: return "1";
    case Norm::l2: return "2";
    case Norm::linf: return "inf";
  }
  return "?";
}

inline Norm norm_from_string(const std::string& s) {
  if (s == "inf" || s == "linf") return Norm::linf;
  if (s == "2" || s == "l2") return Norm::l2;
  if (s == "1" || s == "l1") return Norm::l1;
  if (s == "0" || s == "l0") return Norm::l0;
  throw ArgumentError("unknown norm '" + s + "'");
}

// Distance metric, budget and box. The box is the same for every coordinate.
struct ThreatModel {
  Norm p = Norm::linf;
  double epsilon = 0.0;
  double box_lo = 0.0;
  double box_hi = 1.0;

  void validate() const {
    if (!(epsilon >= 0.0)) throw ArgumentError("ThreatModel: epsilon must be non-negative");
    if (!(box_lo <= box_hi)) throw ArgumentError("ThreatModel: box_lo must not exceed box_hi");
  }

  ThreatModel with_epsilon(double eps) const {
    ThreatModel t = *this;
    t.epsilon = eps;
    return t;
  }

  // Largest distance between two points of the box under this norm.
  double box_diameter(std::size_t dim) const {
    const double side = box_hi - box_lo;
    switch (p) {
      case Norm::linf: return side;
      case Norm::l2: return side * std::sqrt(static_cast<double>(dim));
      case Norm::l1: return side * static_cast<double>(dim);
      case Norm::l0: return static_cast<double>(dim);
    }
    return side;
  }
};

inline double norm_of(Norm p, std::span<const double> d) {
  switch (p) {
    case Norm::linf: return norm_linf(d);
    case Norm::l2: return norm_l2(d);
    case Norm::l1: return norm_l1(d);
    case Norm::l0:
      return static_cast<double>(std::count_if(d.begin(), d.end(), [](double v) { return v != 0.0; }));
  }
  return 0.0;
}

inline double distance(const ThreatModel& tm, std::span<const double> x, std::span<const double> x2) {
  if (x.size() != x2.size()) throw ArgumentError("distance: dimension mismatch");
  return norm_of(tm.p, sub(x, x2));
}

inline bool in_box(const ThreatModel& tm, std::span<const double> x) {
  return std::all_of(x.begin(), x.end(), [&](double v) { return v >= tm.box_lo && v <= tm.box_hi; });
}

inline Vec clip_to_box(const ThreatModel& tm, std::span<const double> x) {
  Vec out(x.begin(), x.end());
  for (double& v : out) v = std::clamp(v, tm.box_lo, tm.box_hi);
  return out;
}

inline bool satisfies(const ThreatModel& tm, std::span<const double> origin, std::span<const double> x) {
  return in_box(tm, x) && distance(tm, origin, x) <= tm.epsilon;
}

// ℓ0 budgets count coordinates; fractional budgets round down.
inline std::size_t l0_budget(const ThreatModel& tm, std::size_t dim) {
  if (!std::isfinite(tm.epsilon)) return dim;
  return std::min<std::size_t>(dim, static_cast<std::size_t>(std::floor(tm.epsilon)));
}

namespace detail {
// For ℓ1 and ℓ2 the Euclidean projection onto ball ∩ box is separable once a
// multiplier λ is fixed: ℓ2 gives clip((x + λo)/(1 + λ)), ℓ1 gives
// clip(o + soft(x - o, λ)). The constrained distance is nonincreasing in λ, so
// bisect λ and return the feasible endpoint.
template <typename Candidate>
Vec bisect_multiplier(const ThreatModel& tm, std::span<const double> origin, Candidate candidate) {
  double lo = 0.0;
  double hi = 1.0;
  Vec at_hi = candidate(hi);
  for (int guard = 0; distance(tm, origin, at_hi) > tm.epsilon && guard < 2000; ++guard) {
    lo = hi;
    hi *= 2.0;
    at_hi = candidate(hi);
  }
  for (int iter = 0; iter < 200; ++iter) {
    const double mid = 0.5 * (lo + hi);
    if (mid <= lo || mid >= hi) break;
    Vec at_mid = candidate(mid);
    if (distance(tm, origin, at_mid) <= tm.epsilon) {
      hi = mid;
      at_hi = std::move(at_mid);
    } else {
      lo = mid;
    }
  }
  return at_hi;
}
}  // namespace detail

// Nearest point to x in {z : D(origin, z) <= ε} ∩ box. Exact for ℓ∞, ℓ2 and
// ℓ1; ℓ0 keeps the ⌊ε⌋ largest-|δ| coordinates. A feasible x is returned
// unchanged.
inline Vec project(const ThreatModel& tm, std::span<const double> origin, std::span<const double> x) {
  if (origin.size() != x.size()) throw ArgumentError("project: dimension mismatch");
  tm.validate();
  if (satisfies(tm, origin, x)) return Vec(x.begin(), x.end());
  const std::size_t n = x.size();
  switch (tm.p) {
    case Norm::linf: {
      Vec out(n);
      for (std::size_t i = 0; i < n; ++i) {
        const double v = std::clamp(x[i], origin[i] - tm.epsilon, origin[i] + tm.epsilon);
        out[i] = std::clamp(v, tm.box_lo, tm.box_hi);
      }
      return out;
    }
    case Norm::l2: {
      Vec clipped = clip_to_box(tm, x);
      if (distance(tm, origin, clipped) <= tm.epsilon) return clipped;
      return detail::bisect_multiplier(tm, origin, [&](double lambda) {
        Vec z(n);
        for (std::size_t i = 0; i < n; ++i)
          z[i] = std::clamp((x[i] + lambda * origin[i]) / (1.0 + lambda), tm.box_lo, tm.box_hi);
        return z;
      });
    }
    case Norm::l1: {
      Vec clipped = clip_to_box(tm, x);
      if (distance(tm, origin, clipped) <= tm.epsilon) return clipped;
      return detail::bisect_multiplier(tm, origin, [&](double lambda) {
        Vec z(n);
        for (std::size_t i = 0; i < n; ++i) {
          const double d = x[i] - origin[i];
          const double shrunk = sign(d) * std::max(0.0, std::abs(d) - lambda);
          z[i] = std::clamp(origin[i] + shrunk, tm.box_lo, tm.box_hi);
        }
        return z;
      });
    }
    case Norm::l0: {
      const std::size_t keep = l0_budget(tm, n);
      std::vector<std::size_t> idx(n);
      std::iota(idx.begin(), idx.end(), 0);
      std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
        return std::abs(x[a] - origin[a]) > std::abs(x[b] - origin[b]);
      });
      Vec out(origin.begin(), origin.end());
      for (std::size_t k = 0; k < keep; ++k) out[idx[k]] = std::clamp(x[idx[k]], tm.box_lo, tm.box_hi);
      return out;
    }
  }
  return Vec(x.begin(), x.end());
}

// Random point of the ε-ball around origin, clipped to the box. ℓ∞ is uniform
// per coordinate; ℓ2 and ℓ1 are uniform in the ball; ℓ0 re-draws ⌊ε⌋ random
// coordinates uniformly in the box. Infinite budgets fall back to the box
// diameter.
inline Vec sample_in_ball(const ThreatModel& tm, std::span<const double> origin, Rng& rng) {
  tm.validate();
  const std::size_t n = origin.size();
  if (tm.epsilon == 0.0 || n == 0) return Vec(origin.begin(), origin.end());
  const double radius = std::min(tm.epsilon, tm.box_diameter(n));
  Vec out(origin.begin(), origin.end());
  switch (tm.p) {
    case Norm::linf:
      for (std::size_t i = 0; i < n; ++i) out[i] += rng.uniform(-radius, radius);
      break;
    case Norm::l2: {
      Vec dir = rng.normal_vec(n);
      const double len = norm_l2(dir);
      const double r = radius * std::pow(rng.uniform(), 1.0 / static_cast<double>(n));
      if (len > 0.0)
        for (std::size_t i = 0; i < n; ++i) out[i] += r * dir[i] / len;
      break;
    }
    case Norm::l1: {
      // First n coordinates of a flat Dirichlet over n + 1 cells, random signs.
      Vec e(n + 1);
      double total = 0.0;
      for (double& v : e) {
        double u = rng.uniform();
        while (u <= 0.0) u = rng.uniform();
        v = -std::log(u);
        total += v;
      }
      for (std::size_t i = 0; i < n; ++i) out[i] += rng.rademacher() * radius * e[i] / total;
      break;
    }
    case Norm::l0: {
      std::vector<std::size_t> idx(n);
      std::iota(idx.begin(), idx.end(), 0);
      rng.shuffle(idx);
      const std::size_t k = l0_budget(tm, n);
      for (std::size_t j = 0; j < k; ++j) out[idx[j]] = rng.uniform(tm.box_lo, tm.box_hi);
      break;
    }
  }
  return clip_to_box(tm, out);
}

}  // namespace advcheck
