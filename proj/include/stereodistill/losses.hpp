#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <vector>

#include "stereodistill/autograd.hpp"
#include "stereodistill/config.hpp"
#include "stereodistill/errors.hpp"

namespace stereodistill {

/// Element-wise validity mask; 1 keeps an element. Empty means all valid.
using Mask = std::vector<uint8_t>;

namespace kernels {

// Every kernel returns the mean over valid elements (or locations) and,
// when `grad` is non-null, writes d(mean)/d(student) into it. The teacher
// argument is constant. Accumulation is in double regardless of T.

inline bool kept(const uint8_t* mask, int64_t i) { return !mask || mask[i]; }

inline int64_t count_kept(const uint8_t* mask, int64_t n) {
  if (!mask) return n;
  return static_cast<int64_t>(std::count_if(mask, mask + n, [](uint8_t m) { return m != 0; }));
}

template <class T>
double smooth_l1(const T* s, const T* t, const uint8_t* mask, int64_t n, double tau, T* grad) {
  if (tau <= 0) throw DomainError("smooth_l1: tau must be positive");
  const int64_t count = count_kept(mask, n);
  if (count == 0) throw DomainError("smooth_l1: mask selects no elements");
  double acc = 0;
  for (int64_t i = 0; i < n; ++i) {
    if (grad) grad[i] = 0;
    if (!kept(mask, i)) continue;
    const double d = static_cast<double>(s[i]) - static_cast<double>(t[i]);
    const double a = std::abs(d);
    if (a < tau) {
      acc += 0.5 * d * d / tau;
      if (grad) grad[i] = static_cast<T>(d / tau / count);
    } else {
      acc += a - 0.5 * tau;
      if (grad) grad[i] = static_cast<T>((d > 0 ? 1.0 : -1.0) / count);
    }
  }
  return acc / count;
}

template <class T>
double log_l1(const T* s, const T* t, const uint8_t* mask, int64_t n, double eps, T* grad) {
  if (!(eps >= 1)) throw DomainError("log_l1: eps must be >= 1 to keep the loss non-negative");
  const int64_t count = count_kept(mask, n);
  if (count == 0) throw DomainError("log_l1: mask selects no elements");
  double acc = 0;
  for (int64_t i = 0; i < n; ++i) {
    if (grad) grad[i] = 0;
    if (!kept(mask, i)) continue;
    const double d = static_cast<double>(s[i]) - static_cast<double>(t[i]);
    const double a = std::abs(d);
    acc += std::log(a + eps);
    if (grad && d != 0) grad[i] = static_cast<T>((d > 0 ? 1.0 : -1.0) / (a + eps) / count);
  }
  return acc / count;
}

/// 1 - cos along the middle axis of an [outer, channels, inner] layout;
/// `mask` has one entry per (outer, inner) location. Two all-zero vectors
/// are identical and cost 0 (the zero-padded band of a cost volume).
template <class T>
double cosine(const T* s, const T* t, const uint8_t* mask, int64_t outer, int64_t channels,
              int64_t inner, double eps, T* grad) {
  const int64_t count = count_kept(mask, outer * inner);
  if (count == 0) throw DomainError("cosine: mask selects no locations");
  if (grad) std::fill(grad, grad + outer * channels * inner, T(0));
  double acc = 0;
  for (int64_t o = 0; o < outer; ++o) {
    for (int64_t i = 0; i < inner; ++i) {
      if (!kept(mask, o * inner + i)) continue;
      const int64_t base = o * channels * inner + i;
      double ss = 0, tt = 0, st = 0;
      for (int64_t c = 0; c < channels; ++c) {
        const double a = s[base + c * inner], b = t[base + c * inner];
        ss += a * a;
        tt += b * b;
        st += a * b;
      }
      if (ss == 0 && tt == 0) continue;
      const double norm = std::sqrt(ss * tt);
      const double den = std::max(norm, eps);
      acc += 1.0 - st / den;
      if (!grad) continue;
      for (int64_t c = 0; c < channels; ++c) {
        const int64_t j = base + c * inner;
        double g = t[j] / den;
        if (norm > eps) g -= st * s[j] / (ss * den);
        grad[j] = static_cast<T>(-g / count);
      }
    }
  }
  return acc / count;
}

/// KL(p_t || p_s) along the middle axis of [outer, depth, inner].
template <class T>
double kld(const T* ps, const T* pt, const uint8_t* mask, int64_t outer, int64_t depth, int64_t inner,
           T* grad) {
  constexpr double kFloor = 1e-12;
  const int64_t count = count_kept(mask, outer * inner);
  if (count == 0) throw DomainError("kld: mask selects no locations");
  if (grad) std::fill(grad, grad + outer * depth * inner, T(0));
  double acc = 0;
  for (int64_t o = 0; o < outer; ++o) {
    for (int64_t i = 0; i < inner; ++i) {
      if (!kept(mask, o * inner + i)) continue;
      const int64_t base = o * depth * inner + i;
      double sum_s = 0, sum_t = 0;
      for (int64_t d = 0; d < depth; ++d) {
        sum_s += ps[base + d * inner];
        sum_t += pt[base + d * inner];
      }
      if (std::abs(sum_s - 1) > 1e-3 || std::abs(sum_t - 1) > 1e-3) {
        throw DomainError("kld: inputs are not normalized along the disparity axis");
      }
      for (int64_t d = 0; d < depth; ++d) {
        const int64_t j = base + d * inner;
        const double q = pt[j];
        if (q <= 0) continue;
        const double p = ps[j];
        acc += q * (std::log(std::max(q, kFloor)) - std::log(std::max(p, kFloor)));
        if (grad && p > kFloor) grad[j] = static_cast<T>(-q / p / count);
      }
    }
  }
  return acc / count;
}

}  // namespace kernels

/// Layout used by the channel- and distribution-axis losses.
struct AxisLayout {
  int64_t outer = 1, axis = 1, inner = 1;
};
/// Channel axis 1 for rank >= 4; rank <= 3 tensors are one vector per
/// leading index.
AxisLayout cosine_layout(const Shape& s);
AxisLayout axis_layout(const Shape& s, int axis);

// Autograd wrappers; the teacher side is a constant tensor.
Var smooth_l1(const Var& student, const Tensor& teacher, const Mask& mask = {}, double tau = 1.0);
Var log_l1(const Var& student, const Tensor& teacher, const Mask& mask = {}, double eps = 1.0);
/// `mask` is per location (numel / channels entries) or empty.
Var cosine_loss(const Var& student, const Tensor& teacher, const Mask& mask = {}, double eps = 1e-8);
/// Both arguments are probabilities normalized along `axis`.
Var kld_loss(const Var& p_student, const Tensor& p_teacher, int axis, const Mask& mask = {});

/// Applies the configured loss. KLD inputs are logits-free distributions.
Var apply_loss(LossKind kind, const Var& student, const Tensor& teacher, const Mask& mask = {},
               int distribution_axis = 1);

struct LossBreakdown {
  double l_fe = 0, l_cv = 0, l_ca = 0, l_spw = 0, l_stpw = 0;
  double total = 0;

  double get(Term t) const;
  void set(Term t, double v);
};

/// Weighted joint objective. Terms missing from `losses` contribute 0.
LossBreakdown combine(const std::map<Term, double>& losses, const ObjectiveWeights& w);

}  // namespace stereodistill
