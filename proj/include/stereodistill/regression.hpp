#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "stereodistill/config.hpp"
#include "stereodistill/nn.hpp"

namespace stereodistill {

// Column kernels over [batch, D, plane] buffers. Templated so the same code
// serves float training and double-precision gradient checks.
namespace kernels {

template <class T>
void disparity_softmax(const T* logits, T* p, int64_t batch, int64_t depth, int64_t plane, bool negate) {
  const T sign = negate ? T(-1) : T(1);
  for (int64_t b = 0; b < batch; ++b) {
    const T* l = logits + b * depth * plane;
    T* o = p + b * depth * plane;
    for (int64_t i = 0; i < plane; ++i) {
      T mx = sign * l[i];
      for (int64_t d = 1; d < depth; ++d) mx = std::max(mx, sign * l[d * plane + i]);
      T sum = 0;
      for (int64_t d = 0; d < depth; ++d) {
        const T e = std::exp(sign * l[d * plane + i] - mx);
        o[d * plane + i] = e;
        sum += e;
      }
      for (int64_t d = 0; d < depth; ++d) o[d * plane + i] /= sum;
    }
  }
}

/// Accumulates d(loss)/d(logits) given p and d(loss)/dp.
template <class T>
void disparity_softmax_backward(const T* p, const T* gp, T* glogits, int64_t batch, int64_t depth,
                                int64_t plane, bool negate) {
  const T sign = negate ? T(-1) : T(1);
  for (int64_t b = 0; b < batch; ++b) {
    const int64_t off = b * depth * plane;
    for (int64_t i = 0; i < plane; ++i) {
      T dot = 0;
      for (int64_t d = 0; d < depth; ++d) dot += gp[off + d * plane + i] * p[off + d * plane + i];
      for (int64_t d = 0; d < depth; ++d) {
        const int64_t j = off + d * plane + i;
        glogits[j] += sign * p[j] * (gp[j] - dot);
      }
    }
  }
}

template <class T>
void soft_argmin(const T* p, T* out, int64_t batch, int64_t depth, int64_t plane) {
  for (int64_t b = 0; b < batch; ++b) {
    const T* pb = p + b * depth * plane;
    T* ob = out + b * plane;
    std::fill(ob, ob + plane, T(0));
    for (int64_t d = 1; d < depth; ++d) {
      const T dv = static_cast<T>(d);
      for (int64_t i = 0; i < plane; ++i) ob[i] += dv * pb[d * plane + i];
    }
  }
}

template <class T>
void soft_argmin_backward(const T* gout, T* gp, int64_t batch, int64_t depth, int64_t plane) {
  for (int64_t b = 0; b < batch; ++b) {
    for (int64_t d = 0; d < depth; ++d) {
      T* g = gp + (b * depth + d) * plane;
      const T* go = gout + b * plane;
      for (int64_t i = 0; i < plane; ++i) g[i] += static_cast<T>(d) * go[i];
    }
  }
}

}  // namespace kernels

/// Softmax over axis 1 of [B, D, H, W]; with `negate` over -x.
Var disparity_probabilities(const Var& logits, bool negate);
Tensor disparity_probabilities(const Tensor& logits, bool negate);

/// [B, D, H, W] probabilities -> [B, H, W] expected disparity.
Var soft_argmin(const Var& p);
Tensor soft_argmin(const Tensor& p);

/// conv(N->N)+norm+ReLU, conv(N->1), trilinear x4 to D x H x W, softmax.
class RegressionHead {
 public:
  RegressionHead() = default;
  RegressionHead(int64_t base_channels, int max_disparity, bool negate_logits,
                 bool upsample_before_head);

  /// volume [B, N, D/4, H/4, W/4] -> probabilities [B, D, H, W].
  Var probabilities(const Var& volume, const nn::ForwardMode& mode);
  void collect(const std::string& prefix, nn::StateRefs& refs);
  Shape profile(nn::Profiler& p, const std::string& name, const Shape& volume) const;

 private:
  int max_disparity_ = 192;
  bool negate_ = true;
  bool upsample_first_ = false;
  nn::ConvBn conv1_;
  nn::Conv conv2_;
};

enum class PredictMode { train, infer };

/// One head per ED output. Train mode regresses from every volume; infer
/// mode only from the last.
class DisparityRegression {
 public:
  DisparityRegression() = default;
  explicit DisparityRegression(const ModelConfig& cfg);

  std::vector<Var> predict(const std::vector<Var>& volumes, PredictMode mode,
                           const nn::ForwardMode& fwd);
  void collect(const std::string& prefix, nn::StateRefs& refs);
  /// Profiles the heads that run in `mode`.
  Shape profile(nn::Profiler& p, const std::vector<Shape>& volumes, PredictMode mode) const;

 private:
  std::vector<RegressionHead> heads_;
};

}  // namespace stereodistill
