#include "stereodistill/costvolume.hpp"

#include "stereodistill/errors.hpp"

namespace stereodistill {

namespace {

struct CorrDims {
  int64_t n, c, h, w, groups, per_group, disp;
};

CorrDims corr_dims(const Shape& l, const Shape& r, int64_t max_disparity, int64_t groups) {
  if (l != r) throw ShapeError("correlation: feature shape mismatch " + to_string(l) + " vs " + to_string(r));
  if (l.size() != 4) throw ShapeError("correlation: expected [N,C,H,W] features, got " + to_string(l));
  if (groups <= 0 || l[1] % groups != 0) {
    throw ShapeError("correlation: " + std::to_string(l[1]) + " channels not divisible by " +
                     std::to_string(groups) + " groups");
  }
  if (max_disparity <= 0 || max_disparity % 4 != 0) {
    throw ShapeError("correlation: max disparity must be a positive multiple of 4");
  }
  return {l[0], l[1], l[2], l[3], groups, l[1] / groups, max_disparity / 4};
}

void correlate(const float* left, const float* right, const CorrDims& d, float* out) {
  const int64_t plane = d.h * d.w;
  const float inv = 1.0f / static_cast<float>(d.per_group);
  for (int64_t b = 0; b < d.n; ++b) {
    for (int64_t g = 0; g < d.groups; ++g) {
      for (int64_t k = 0; k < d.disp; ++k) {
        float* o = out + (((b * d.groups + g) * d.disp) + k) * plane;
        for (int64_t ci = 0; ci < d.per_group; ++ci) {
          const int64_t c = g * d.per_group + ci;
          const float* lc = left + (b * d.c + c) * plane;
          const float* rc = right + (b * d.c + c) * plane;
          for (int64_t y = 0; y < d.h; ++y) {
            const float* lr = lc + y * d.w;
            const float* rr = rc + y * d.w;
            float* orow = o + y * d.w;
            for (int64_t x = k; x < d.w; ++x) orow[x] += lr[x] * rr[x - k];
          }
        }
        for (int64_t i = 0; i < plane; ++i) o[i] *= inv;
      }
    }
  }
}

}  // namespace

Tensor groupwise_correlation(const Tensor& left, const Tensor& right, int64_t max_disparity,
                             int64_t groups) {
  const CorrDims d = corr_dims(left.shape(), right.shape(), max_disparity, groups);
  Tensor out({d.n, d.groups, d.disp, d.h, d.w}, 0.0f);
  correlate(left.data(), right.data(), d, out.data());
  return out;
}

Var groupwise_correlation(const Var& left, const Var& right, int64_t max_disparity, int64_t groups) {
  const CorrDims d = corr_dims(left.shape(), right.shape(), max_disparity, groups);
  Tensor out({d.n, d.groups, d.disp, d.h, d.w}, 0.0f);
  correlate(left.value().data(), right.value().data(), d, out.data());
  return Var::make(std::move(out), {left, right}, [d](Node& self) {
    Node& ln = *self.inputs[0];
    Node& rn = *self.inputs[1];
    const int64_t plane = d.h * d.w;
    const float inv = 1.0f / static_cast<float>(d.per_group);
    float* dl = ln.requires_grad ? ln.grad_buffer().data() : nullptr;
    float* dr = rn.requires_grad ? rn.grad_buffer().data() : nullptr;
    for (int64_t b = 0; b < d.n; ++b) {
      for (int64_t g = 0; g < d.groups; ++g) {
        for (int64_t k = 0; k < d.disp; ++k) {
          const float* go = self.grad.data() + (((b * d.groups + g) * d.disp) + k) * plane;
          for (int64_t ci = 0; ci < d.per_group; ++ci) {
            const int64_t c = g * d.per_group + ci;
            const int64_t off = (b * d.c + c) * plane;
            const float* lc = ln.value.data() + off;
            const float* rc = rn.value.data() + off;
            for (int64_t y = 0; y < d.h; ++y) {
              const float* grow = go + y * d.w;
              for (int64_t x = k; x < d.w; ++x) {
                const float gv = grow[x] * inv;
                const int64_t i = y * d.w + x;
                if (dl) dl[off + i] += gv * rc[i - k];
                if (dr) dr[off + i - k] += gv * lc[i];
              }
            }
          }
        }
      }
    }
  });
}

namespace {

void check_attention_shapes(const Shape& v, const Shape& w) {
  if (v.size() != 5 || w.size() != 5 || w[1] != 1 || v[0] != w[0] || v[2] != w[2] ||
      v[3] != w[3] || v[4] != w[4]) {
    throw ShapeError("attention: volume " + to_string(v) + " incompatible with weights " + to_string(w));
  }
}

}  // namespace

Tensor apply_attention(const Tensor& volume, const Tensor& weights) {
  check_attention_shapes(volume.shape(), weights.shape());
  const Shape& s = volume.shape();
  const int64_t inner = s[2] * s[3] * s[4];
  Tensor out(s);
  for (int64_t b = 0; b < s[0]; ++b) {
    const float* w = weights.data() + b * inner;
    for (int64_t g = 0; g < s[1]; ++g) {
      const float* v = volume.data() + (b * s[1] + g) * inner;
      float* o = out.data() + (b * s[1] + g) * inner;
      for (int64_t i = 0; i < inner; ++i) o[i] = v[i] * w[i];
    }
  }
  return out;
}

Var apply_attention(const Var& volume, const Var& weights) {
  Tensor out = apply_attention(volume.value(), weights.value());
  const Shape s = volume.shape();
  return Var::make(std::move(out), {volume, weights}, [s](Node& self) {
    Node& vn = *self.inputs[0];
    Node& wn = *self.inputs[1];
    const int64_t inner = s[2] * s[3] * s[4];
    for (int64_t b = 0; b < s[0]; ++b) {
      const float* w = wn.value.data() + b * inner;
      for (int64_t g = 0; g < s[1]; ++g) {
        const int64_t off = (b * s[1] + g) * inner;
        const float* go = self.grad.data() + off;
        if (vn.requires_grad) {
          float* dv = vn.grad_buffer().data() + off;
          for (int64_t i = 0; i < inner; ++i) dv[i] += go[i] * w[i];
        }
        if (wn.requires_grad) {
          const float* v = vn.value.data() + off;
          float* dw = wn.grad_buffer().data() + b * inner;
          for (int64_t i = 0; i < inner; ++i) dw[i] += go[i] * v[i];
        }
      }
    }
  });
}

AttentionNet::AttentionNet(int max_disparity, bool softmax_over_disparity)
    : max_disparity_(max_disparity),
      softmax_(softmax_over_disparity),
      conv1_(3, kGroups, kHidden, 3, 1, 1, true),
      conv2_(3, kHidden, 1, 3, 1, 1) {}

Var AttentionNet::operator()(const Var& left_feat, const Var& right_feat, const nn::ForwardMode& mode) {
  Var corr = groupwise_correlation(left_feat, right_feat, max_disparity_, kGroups);
  Var logits = conv2_(conv1_(corr, mode));
  return softmax_ ? ops::softmax(logits, 2, false) : ops::sigmoid(logits);
}

void AttentionNet::collect(const std::string& prefix, nn::StateRefs& refs) {
  conv1_.collect(prefix + ".conv1", refs);
  conv2_.collect(prefix + ".conv2", refs);
}

Shape AttentionNet::profile(nn::Profiler& p, const Shape& feature_shape) const {
  const Shape corr{feature_shape[0], kGroups, max_disparity_ / 4, feature_shape[2], feature_shape[3]};
  return conv2_.profile(p, "conv2", conv1_.profile(p, "conv1", corr));
}

AttentionNet build_attention_network(const ModelConfig& cfg) {
  cfg.validate();
  if (!cfg.use_attention) throw ConfigError("attention network requested but use_attention is false");
  return AttentionNet(cfg.max_disparity, cfg.attention_softmax);
}

}  // namespace stereodistill
