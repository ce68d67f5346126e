#pragma once

// Brute-force reference implementations used by the unit and acceptance
// suites. Deliberately naive: plain loops, double accumulation.

#include <cmath>
#include <cstdint>
#include <functional>
#include <random>
#include <vector>

#include "stereodistill/tensor.hpp"

namespace oracle {

using stereodistill::Tensor;

// [B,C,H,W] x [B,C,H,W] -> [B,G,D4,H,W], mean over each group's channels.
inline Tensor groupwise_correlation(const Tensor& l, const Tensor& r, int64_t d4, int64_t groups) {
  const int64_t B = l.dim(0), C = l.dim(1), H = l.dim(2), W = l.dim(3), per = C / groups;
  Tensor out({B, groups, d4, H, W});
  for (int64_t b = 0; b < B; ++b)
    for (int64_t g = 0; g < groups; ++g)
      for (int64_t d = 0; d < d4; ++d)
        for (int64_t y = 0; y < H; ++y)
          for (int64_t x = 0; x < W; ++x) {
            if (x < d) continue;
            double acc = 0;
            for (int64_t c = g * per; c < (g + 1) * per; ++c) {
              acc += static_cast<double>(l.at({b, c, y, x})) * r.at({b, c, y, x - d});
            }
            out.at({b, g, d, y, x}) = static_cast<float>(acc / per);
          }
  return out;
}

inline double soft_argmin_column(const std::vector<double>& p) {
  double s = 0;
  for (size_t d = 0; d < p.size(); ++d) s += static_cast<double>(d) * p[d];
  return s;
}

// Central differences of f at x, one coordinate at a time.
inline std::vector<double> finite_difference(const std::function<double(const std::vector<double>&)>& f,
                                             std::vector<double> x, double h = 1e-5) {
  std::vector<double> g(x.size());
  for (size_t i = 0; i < x.size(); ++i) {
    const double keep = x[i];
    x[i] = keep + h;
    const double up = f(x);
    x[i] = keep - h;
    const double down = f(x);
    x[i] = keep;
    g[i] = (up - down) / (2 * h);
  }
  return g;
}

// ||a - b|| / max(||a||, ||b||); 0 when both vanish.
inline double relative_error(const std::vector<double>& a, const std::vector<double>& b) {
  double diff = 0, na = 0, nb = 0;
  for (size_t i = 0; i < a.size(); ++i) {
    diff += (a[i] - b[i]) * (a[i] - b[i]);
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  const double den = std::sqrt(std::max(na, nb));
  return den == 0 ? 0 : std::sqrt(diff) / den;
}

inline Tensor random_tensor(stereodistill::Shape s, std::mt19937_64& rng, float lo = -1, float hi = 1) {
  std::uniform_real_distribution<float> u(lo, hi);
  Tensor t(std::move(s));
  for (auto& v : t.values()) v = u(rng);
  return t;
}

// Columns along axis 1 of [B,D,...] normalized to sum 1.
inline Tensor random_distribution(int64_t batch, int64_t depth, int64_t plane, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.05, 1.0);
  Tensor t({batch, depth, plane});
  for (int64_t b = 0; b < batch; ++b)
    for (int64_t i = 0; i < plane; ++i) {
      double s = 0;
      std::vector<double> col(static_cast<size_t>(depth));
      for (auto& v : col) s += (v = u(rng));
      for (int64_t d = 0; d < depth; ++d) t[(b * depth + d) * plane + i] = static_cast<float>(col[static_cast<size_t>(d)] / s);
    }
  return t;
}

// |pred - gt| per pixel, all selected.
struct ErrorCounts {
  double epe = 0, d1 = 0, px[5] = {0, 0, 0, 0, 0};
};
inline ErrorCounts metrics(const std::vector<double>& pred, const std::vector<double>& gt) {
  ErrorCounts c;
  for (size_t i = 0; i < pred.size(); ++i) {
    const double e = std::abs(pred[i] - gt[i]);
    c.epe += e;
    if (e > 3 && e > 0.05 * std::abs(gt[i])) c.d1 += 1;
    for (int k = 1; k <= 4; ++k) c.px[k] += e > k;
  }
  const double n = static_cast<double>(pred.size());
  c.epe /= n;
  c.d1 *= 100 / n;
  for (int k = 1; k <= 4; ++k) c.px[k] *= 100 / n;
  return c;
}

}  // namespace oracle
