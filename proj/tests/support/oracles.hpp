#pragma once

// Independent reference computations for tests, written from the loss
// definitions in long double without calling the library's softmax or losses.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

namespace nll::oracle {

using Vec = std::vector<long double>;

inline Vec widen(std::span<const double> z) { return Vec(z.begin(), z.end()); }

inline Vec softmax(const Vec& z) {
  const long double m = *std::max_element(z.begin(), z.end());
  Vec p(z.size());
  long double s = 0.0L;
  for (std::size_t i = 0; i < z.size(); ++i) s += p[i] = std::exp(z[i] - m);
  for (auto& v : p) v /= s;
  return p;
}

// -weight * log p_target (positive) or -weight * log(1 - p_target) (negative),
// with the weight held constant.
struct TargetLoss {
  bool negative = false;
  std::size_t target = 0;
  long double weight = 1.0L;
};

inline TargetLoss pl(std::size_t y) { return {false, y, 1.0L}; }
inline TargetLoss nl(std::size_t ybar) { return {true, ybar, 1.0L}; }

// Weight (1 - p_ybar) frozen at z0.
inline TargetLoss nlplus(std::size_t ybar, const Vec& z0) {
  const Vec p = softmax(z0);
  long double rest = 0.0L;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (i != ybar) rest += p[i];
  }
  return {true, ybar, rest};
}

inline long double plplus_weight(long double p, int n_exponent) {
  long double w = 1.0L;
  for (int n = 0; n <= n_exponent; ++n) w *= 1.0L + std::pow(p, std::pow(2.0L, n));
  return w;
}

// Weight prod (1 + p^(2^n)) frozen at z0.
inline TargetLoss plplus(std::size_t target, const Vec& z0, int n_exponent) {
  return {false, target, plplus_weight(softmax(z0)[target], n_exponent)};
}

// With e_t the target's exponential and r the sum of the others:
// -log p_t = log1p(r / e_t) and -log(1 - p_t) = log1p(e_t / r).
inline long double from_parts(const TargetLoss& f, long double e_t, long double rest) {
  return f.weight * std::log1p(f.negative ? e_t / rest : rest / e_t);
}

inline long double value(const TargetLoss& f, const Vec& z) {
  const long double m = *std::max_element(z.begin(), z.end());
  long double rest = 0.0L;
  for (std::size_t i = 0; i < z.size(); ++i) {
    if (i != f.target) rest += std::exp(z[i] - m);
  }
  return from_parts(f, std::exp(z[f.target] - m), rest);
}

// Central differences with step h on every coordinate. Only one exponential
// changes per probe, so each probe updates the partial sums instead of
// recomputing them.
inline Vec central_diff(const TargetLoss& f, const Vec& z, long double h) {
  const long double m = *std::max_element(z.begin(), z.end());
  Vec e(z.size());
  long double rest = 0.0L;
  for (std::size_t i = 0; i < z.size(); ++i) {
    e[i] = std::exp(z[i] - m);
    if (i != f.target) rest += e[i];
  }
  const long double e_t = e[f.target];
  Vec g(z.size());
  for (std::size_t i = 0; i < z.size(); ++i) {
    const long double up = std::exp(z[i] + h - m);
    const long double down = std::exp(z[i] - h - m);
    long double f_up, f_down;
    if (i == f.target) {
      f_up = from_parts(f, up, rest);
      f_down = from_parts(f, down, rest);
    } else {
      const long double base = rest - e[i];
      f_up = from_parts(f, e_t, base + up);
      f_down = from_parts(f, e_t, base + down);
    }
    g[i] = (f_up - f_down) / (2.0L * h);
  }
  return g;
}

// ||a - b|| / max(||a||, ||b||), with 0 when both vanish.
inline double relative_error(std::span<const double> a, const Vec& b) {
  long double diff = 0.0L, na = 0.0L, nb = 0.0L;
  for (std::size_t i = 0; i < a.size(); ++i) {
    diff += (a[i] - b[i]) * (a[i] - b[i]);
    na += static_cast<long double>(a[i]) * a[i];
    nb += b[i] * b[i];
  }
  const long double scale = std::sqrt(std::max(na, nb));
  if (scale == 0.0L) return 0.0;
  return static_cast<double>(std::sqrt(diff) / scale);
}

// |observed rate - p| within three binomial standard errors.
inline bool within_3se(std::size_t hits, std::size_t n, double p) {
  const double nn = static_cast<double>(n);
  const double se = std::sqrt(p * (1.0 - p) / nn);
  return std::abs(static_cast<double>(hits) / nn - p) <= 3.0 * se;
}

}  // namespace nll::oracle
