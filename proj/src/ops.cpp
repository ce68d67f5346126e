#include "stereodistill/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <cstring>

#include "stereodistill/errors.hpp"

namespace stereodistill::ops {

namespace {

using RowMat = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using ConstMapMat = Eigen::Map<const RowMat>;

struct Dims3 {
  int64_t d = 1, h = 1, w = 1;
  int64_t size() const { return d * h * w; }
};

Dims3 spatial_of(const Shape& s) {
  if (s.size() == 4) return {1, s[2], s[3]};
  if (s.size() == 5) return {s[2], s[3], s[4]};
  throw ShapeError("expected a rank-4 or rank-5 activation, got " + to_string(s));
}

int64_t kernel_volume(const ConvGeometry& g) {
  return int64_t{g.kernel[0]} * g.kernel[1] * g.kernel[2];
}

bool is_pointwise(const ConvGeometry& g) {
  return kernel_volume(g) == 1 && g.stride == std::array<int, 3>{1, 1, 1} &&
         g.pad == std::array<int, 3>{0, 0, 0};
}

// Valid output range [lo, hi) along one axis for kernel tap k.
inline void valid_range(int64_t out, int64_t in, int stride, int pad, int k, int64_t& lo,
                        int64_t& hi) {
  // need 0 <= o*stride - pad + k < in
  int64_t num = pad - k;
  lo = num <= 0 ? 0 : (num + stride - 1) / stride;
  int64_t top = in - 1 + pad - k;
  hi = top < 0 ? 0 : std::min<int64_t>(out, top / stride + 1);
  if (hi < lo) hi = lo;
}

void vol2col(const float* x, int64_t channels, Dims3 in, const ConvGeometry& g, Dims3 out,
             float* cols) {
  const int64_t plane = out.size();
  const auto [kd, kh, kw] = g.kernel;
  const auto [sd, sh, sw] = g.stride;
  const auto [pd, ph, pw] = g.pad;
  for (int64_t c = 0; c < channels; ++c) {
    const float* xc = x + c * in.size();
    for (int z = 0; z < kd; ++z) {
      for (int y = 0; y < kh; ++y) {
        for (int k = 0; k < kw; ++k) {
          float* row = cols + (((c * kd + z) * kh + y) * kw + k) * plane;
          int64_t xlo, xhi;
          valid_range(out.w, in.w, sw, pw, k, xlo, xhi);
          for (int64_t oz = 0; oz < out.d; ++oz) {
            const int64_t iz = oz * sd - pd + z;
            float* rz = row + oz * out.h * out.w;
            if (iz < 0 || iz >= in.d) {
              std::fill(rz, rz + out.h * out.w, 0.0f);
              continue;
            }
            for (int64_t oy = 0; oy < out.h; ++oy) {
              const int64_t iy = oy * sh - ph + y;
              float* dst = rz + oy * out.w;
              if (iy < 0 || iy >= in.h) {
                std::fill(dst, dst + out.w, 0.0f);
                continue;
              }
              const float* src = xc + (iz * in.h + iy) * in.w;
              std::fill(dst, dst + xlo, 0.0f);
              if (sw == 1) {
                const int64_t off = k - pw;
                if (xhi > xlo) std::memcpy(dst + xlo, src + xlo + off, sizeof(float) * (xhi - xlo));
              } else {
                for (int64_t ox = xlo; ox < xhi; ++ox) dst[ox] = src[ox * sw - pw + k];
              }
              std::fill(dst + xhi, dst + out.w, 0.0f);
            }
          }
        }
      }
    }
  }
}

// Adjoint of vol2col: scatters columns back, accumulating into x.
void col2vol(const float* cols, int64_t channels, Dims3 in, const ConvGeometry& g, Dims3 out,
             float* x) {
  const int64_t plane = out.size();
  const auto [kd, kh, kw] = g.kernel;
  const auto [sd, sh, sw] = g.stride;
  const auto [pd, ph, pw] = g.pad;
  for (int64_t c = 0; c < channels; ++c) {
    float* xc = x + c * in.size();
    for (int z = 0; z < kd; ++z) {
      for (int y = 0; y < kh; ++y) {
        for (int k = 0; k < kw; ++k) {
          const float* row = cols + (((c * kd + z) * kh + y) * kw + k) * plane;
          int64_t xlo, xhi;
          valid_range(out.w, in.w, sw, pw, k, xlo, xhi);
          for (int64_t oz = 0; oz < out.d; ++oz) {
            const int64_t iz = oz * sd - pd + z;
            if (iz < 0 || iz >= in.d) continue;
            for (int64_t oy = 0; oy < out.h; ++oy) {
              const int64_t iy = oy * sh - ph + y;
              if (iy < 0 || iy >= in.h) continue;
              const float* src = row + (oz * out.h + oy) * out.w;
              float* dst = xc + (iz * in.h + iy) * in.w;
              for (int64_t ox = xlo; ox < xhi; ++ox) dst[ox * sw - pw + k] += src[ox];
            }
          }
        }
      }
    }
  }
}

Shape with_spatial(int64_t n, int64_t c, Dims3 s, bool rank5) {
  if (rank5) return {n, c, s.d, s.h, s.w};
  return {n, c, s.h, s.w};
}

void check_weight(const Shape& w, size_t rank, const ConvGeometry& g) {
  if (w.size() != rank) throw ShapeError("weight rank mismatch: " + to_string(w));
  const size_t off = 2;
  if (rank == 5) {
    if (w[off] != g.kernel[0] || w[off + 1] != g.kernel[1] || w[off + 2] != g.kernel[2]) {
      throw ShapeError("weight kernel does not match geometry: " + to_string(w));
    }
  } else if (w[off] != g.kernel[1] || w[off + 1] != g.kernel[2] || g.kernel[0] != 1) {
    throw ShapeError("weight kernel does not match geometry: " + to_string(w));
  }
}

}  // namespace

ConvGeometry ConvGeometry::conv2d(int k, int stride, int pad) {
  return {{1, k, k}, {1, stride, stride}, {0, pad, pad}};
}

ConvGeometry ConvGeometry::conv3d(int k, int stride, int pad) {
  return {{k, k, k}, {stride, stride, stride}, {pad, pad, pad}};
}

int64_t conv_output_size(int64_t in, int k, int stride, int pad) {
  return (in + 2 * pad - k) / stride + 1;
}

uint64_t& conv_mac_counter() {
  thread_local uint64_t counter = 0;
  return counter;
}

Var conv(const Var& x, const Var& w, const ConvGeometry& g) {
  const Shape& xs = x.shape();
  const bool rank5 = xs.size() == 5;
  const Dims3 in = spatial_of(xs);
  check_weight(w.shape(), xs.size(), g);
  const int64_t n = xs[0], c = xs[1], o = w.shape()[0];
  if (w.shape()[1] != c) {
    throw ShapeError("conv: input has " + std::to_string(c) + " channels, weight expects " +
                     std::to_string(w.shape()[1]));
  }
  const Dims3 out{conv_output_size(in.d, g.kernel[0], g.stride[0], g.pad[0]),
                  conv_output_size(in.h, g.kernel[1], g.stride[1], g.pad[1]),
                  conv_output_size(in.w, g.kernel[2], g.stride[2], g.pad[2])};
  if (out.d <= 0 || out.h <= 0 || out.w <= 0) throw ShapeError("conv: empty output");
  const int64_t ck = c * kernel_volume(g);
  const int64_t v = out.size();
  const bool pointwise = is_pointwise(g);

  Tensor y(with_spatial(n, o, out, rank5));
  std::vector<float> cols(pointwise ? 0 : static_cast<size_t>(ck * v));
  ConstMapMat wm(w.value().data(), o, ck);
  for (int64_t b = 0; b < n; ++b) {
    const float* xb = x.value().data() + b * c * in.size();
    const float* cp = xb;
    if (!pointwise) {
      vol2col(xb, c, in, g, out, cols.data());
      cp = cols.data();
    }
    MapMat ym(y.data() + b * o * v, o, v);
    ym.noalias() = wm * ConstMapMat(cp, ck, v);
  }
  conv_mac_counter() += static_cast<uint64_t>(n * o * ck * v);

  return Var::make(std::move(y), {x, w}, [g, in, out, n, c, o, ck, v, pointwise](Node& self) {
    Node& xn = *self.inputs[0];
    Node& wn = *self.inputs[1];
    const bool need_dx = xn.requires_grad;
    const bool need_dw = wn.requires_grad;
    std::vector<float> cols(pointwise ? 0 : static_cast<size_t>(ck * v));
    ConstMapMat wm(wn.value.data(), o, ck);
    for (int64_t b = 0; b < n; ++b) {
      ConstMapMat gy(self.grad.data() + b * o * v, o, v);
      if (need_dw) {
        const float* xb = xn.value.data() + b * c * in.size();
        const float* cp = xb;
        if (!pointwise) {
          vol2col(xb, c, in, g, out, cols.data());
          cp = cols.data();
        }
        MapMat(wn.grad_buffer().data(), o, ck).noalias() += gy * ConstMapMat(cp, ck, v).transpose();
      }
      if (need_dx) {
        float* dx = xn.grad_buffer().data() + b * c * in.size();
        if (pointwise) {
          MapMat(dx, c, v).noalias() += wm.transpose() * gy;
        } else {
          MapMat(cols.data(), ck, v).noalias() = wm.transpose() * gy;
          col2vol(cols.data(), c, in, g, out, dx);
        }
      }
    }
  });
}

Var conv_transpose(const Var& x, const Var& w, const ConvGeometry& g,
                   const std::vector<int64_t>& out_spatial) {
  const Shape& xs = x.shape();
  const bool rank5 = xs.size() == 5;
  const Dims3 in = spatial_of(xs);
  check_weight(w.shape(), xs.size(), g);
  const int64_t n = xs[0], cin = xs[1], cout = w.shape()[1];
  if (w.shape()[0] != cin) throw ShapeError("conv_transpose: weight/input channel mismatch");
  Dims3 out;
  if (rank5) {
    if (out_spatial.size() != 3) throw ShapeError("conv_transpose: need 3 output sizes");
    out = {out_spatial[0], out_spatial[1], out_spatial[2]};
  } else {
    if (out_spatial.size() != 2) throw ShapeError("conv_transpose: need 2 output sizes");
    out = {1, out_spatial[0], out_spatial[1]};
  }
  // The requested output must be a valid input for the forward conv that
  // produces `in`.
  const Dims3 back{conv_output_size(out.d, g.kernel[0], g.stride[0], g.pad[0]),
                   conv_output_size(out.h, g.kernel[1], g.stride[1], g.pad[1]),
                   conv_output_size(out.w, g.kernel[2], g.stride[2], g.pad[2])};
  if (back.d != in.d || back.h != in.h || back.w != in.w) {
    throw ShapeError("conv_transpose: output size incompatible with input " + to_string(xs));
  }
  const int64_t ck = cout * kernel_volume(g);
  const int64_t vin = in.size();

  Tensor y(with_spatial(n, cout, out, rank5));
  std::vector<float> cols(static_cast<size_t>(ck * vin));
  ConstMapMat wm(w.value().data(), cin, ck);
  for (int64_t b = 0; b < n; ++b) {
    MapMat(cols.data(), ck, vin).noalias() =
        wm.transpose() * ConstMapMat(x.value().data() + b * cin * vin, cin, vin);
    col2vol(cols.data(), cout, out, g, in, y.data() + b * cout * out.size());
  }
  conv_mac_counter() += static_cast<uint64_t>(n * cout * cin * kernel_volume(g) * out.size());

  return Var::make(std::move(y), {x, w}, [g, in, out, n, cin, cout, ck, vin](Node& self) {
    Node& xn = *self.inputs[0];
    Node& wn = *self.inputs[1];
    std::vector<float> cols(static_cast<size_t>(ck * vin));
    ConstMapMat wm(wn.value.data(), cin, ck);
    for (int64_t b = 0; b < n; ++b) {
      vol2col(self.grad.data() + b * cout * out.size(), cout, out, g, in, cols.data());
      ConstMapMat dcols(cols.data(), ck, vin);
      if (xn.requires_grad) {
        MapMat(xn.grad_buffer().data() + b * cin * vin, cin, vin).noalias() += wm * dcols;
      }
      if (wn.requires_grad) {
        MapMat(wn.grad_buffer().data(), cin, ck).noalias() +=
            ConstMapMat(xn.value.data() + b * cin * vin, cin, vin) * dcols.transpose();
      }
    }
  });
}

Var batch_norm(const Var& x, const Var& gamma, const Var& beta, Tensor& running_mean,
               Tensor& running_var, bool use_batch_stats, bool update_running, float momentum,
               float eps) {
  const Shape& xs = x.shape();
  if (xs.size() < 2) throw ShapeError("batch_norm: rank < 2");
  const int64_t n = xs[0], c = xs[1];
  const int64_t s = numel(xs) / (n * c);
  const int64_t m = n * s;
  if (gamma.value().numel() != c || beta.value().numel() != c || running_mean.numel() != c ||
      running_var.numel() != c) {
    throw ShapeError("batch_norm: parameter size does not match channels " + std::to_string(c));
  }
  std::vector<float> mean(static_cast<size_t>(c)), invstd(static_cast<size_t>(c));
  const float* xv = x.value().data();
  for (int64_t ch = 0; ch < c; ++ch) {
    if (use_batch_stats) {
      double sum = 0.0, sq = 0.0;
      for (int64_t b = 0; b < n; ++b) {
        const float* p = xv + (b * c + ch) * s;
        for (int64_t i = 0; i < s; ++i) sum += p[i];
      }
      const double mu = sum / static_cast<double>(m);
      for (int64_t b = 0; b < n; ++b) {
        const float* p = xv + (b * c + ch) * s;
        for (int64_t i = 0; i < s; ++i) {
          const double d = p[i] - mu;
          sq += d * d;
        }
      }
      const double var = sq / static_cast<double>(m);
      mean[ch] = static_cast<float>(mu);
      invstd[ch] = static_cast<float>(1.0 / std::sqrt(var + eps));
      if (update_running) {
        const double unbiased = m > 1 ? sq / static_cast<double>(m - 1) : var;
        running_mean[ch] = static_cast<float>((1.0 - momentum) * running_mean[ch] + momentum * mu);
        running_var[ch] =
            static_cast<float>((1.0 - momentum) * running_var[ch] + momentum * unbiased);
      }
    } else {
      mean[ch] = running_mean[ch];
      invstd[ch] = static_cast<float>(1.0 / std::sqrt(static_cast<double>(running_var[ch]) + eps));
    }
  }
  Tensor y(xs);
  const float* gv = gamma.value().data();
  const float* bv = beta.value().data();
  for (int64_t b = 0; b < n; ++b) {
    for (int64_t ch = 0; ch < c; ++ch) {
      const float* p = xv + (b * c + ch) * s;
      float* q = y.data() + (b * c + ch) * s;
      const float a = gv[ch] * invstd[ch];
      const float sh = bv[ch] - mean[ch] * a;
      for (int64_t i = 0; i < s; ++i) q[i] = p[i] * a + sh;
    }
  }
  return Var::make(std::move(y), {x, gamma, beta},
                   [mean, invstd, n, c, s, m, use_batch_stats](Node& self) {
                     Node& xn = *self.inputs[0];
                     Node& gn = *self.inputs[1];
                     Node& bn = *self.inputs[2];
                     const float* gy = self.grad.data();
                     const float* xv = xn.value.data();
                     for (int64_t ch = 0; ch < c; ++ch) {
                       double sdy = 0.0, sdyx = 0.0;
                       for (int64_t b = 0; b < n; ++b) {
                         const float* p = xv + (b * c + ch) * s;
                         const float* d = gy + (b * c + ch) * s;
                         for (int64_t i = 0; i < s; ++i) {
                           sdy += d[i];
                           sdyx += d[i] * (p[i] - mean[ch]) * invstd[ch];
                         }
                       }
                       if (gn.requires_grad) gn.grad_buffer()[ch] += static_cast<float>(sdyx);
                       if (bn.requires_grad) bn.grad_buffer()[ch] += static_cast<float>(sdy);
                       if (!xn.requires_grad) continue;
                       const float gam = gn.value[ch];
                       float* dx = xn.grad_buffer().data();
                       if (use_batch_stats) {
                         const double k = gam * invstd[ch] / static_cast<double>(m);
                         const double mdy = sdy, mdyx = sdyx;
                         for (int64_t b = 0; b < n; ++b) {
                           const float* p = xv + (b * c + ch) * s;
                           const float* d = gy + (b * c + ch) * s;
                           float* q = dx + (b * c + ch) * s;
                           for (int64_t i = 0; i < s; ++i) {
                             const double xhat = (p[i] - mean[ch]) * invstd[ch];
                             q[i] += static_cast<float>(
                                 k * (static_cast<double>(m) * d[i] - mdy - xhat * mdyx));
                           }
                         }
                       } else {
                         const float a = gam * invstd[ch];
                         for (int64_t b = 0; b < n; ++b) {
                           const float* d = gy + (b * c + ch) * s;
                           float* q = dx + (b * c + ch) * s;
                           for (int64_t i = 0; i < s; ++i) q[i] += a * d[i];
                         }
                       }
                     }
                   });
}

Var relu(const Var& x) {
  Tensor y = x.value();
  for (auto& v : y.values()) v = v > 0.0f ? v : 0.0f;
  return Var::make(std::move(y), {x}, [](Node& self) {
    Tensor& dx = self.inputs[0]->grad_buffer();
    const int64_t total = self.value.numel();
    for (int64_t i = 0; i < total; ++i) {
      if (self.value[i] > 0.0f) dx[i] += self.grad[i];
    }
  });
}

Var sigmoid(const Var& x) {
  Tensor y = x.value();
  for (auto& v : y.values()) v = 1.0f / (1.0f + std::exp(-v));
  return Var::make(std::move(y), {x}, [](Node& self) {
    Tensor& dx = self.inputs[0]->grad_buffer();
    const int64_t total = self.value.numel();
    for (int64_t i = 0; i < total; ++i) {
      const float s = self.value[i];
      dx[i] += self.grad[i] * s * (1.0f - s);
    }
  });
}

Var add(const Var& a, const Var& b) {
  if (a.shape() != b.shape()) {
    throw ShapeError("add: " + to_string(a.shape()) + " vs " + to_string(b.shape()));
  }
  Tensor y = a.value();
  const int64_t total = y.numel();
  for (int64_t i = 0; i < total; ++i) y[i] += b.value()[i];
  return Var::make(std::move(y), {a, b}, [total](Node& self) {
    for (auto& in : self.inputs) {
      if (!in->requires_grad) continue;
      Tensor& d = in->grad_buffer();
      for (int64_t i = 0; i < total; ++i) d[i] += self.grad[i];
    }
  });
}

Var scale(const Var& x, float factor) {
  Tensor y = x.value();
  for (auto& v : y.values()) v *= factor;
  return Var::make(std::move(y), {x}, [factor](Node& self) {
    Tensor& d = self.inputs[0]->grad_buffer();
    for (int64_t i = 0; i < d.numel(); ++i) d[i] += factor * self.grad[i];
  });
}

Var concat_channels(const std::vector<Var>& parts) {
  if (parts.empty()) throw ShapeError("concat: no inputs");
  Shape out = parts[0].shape();
  const int64_t n = out[0];
  const int64_t inner = numel(out) / (out[0] * out[1]);
  int64_t channels = 0;
  for (const auto& p : parts) {
    Shape s = p.shape();
    if (s.size() != out.size() || s[0] != n || numel(s) / (s[0] * s[1]) != inner) {
      throw ShapeError("concat: incompatible part " + to_string(s));
    }
    channels += s[1];
  }
  out[1] = channels;
  Tensor y(out);
  std::vector<int64_t> widths;
  for (int64_t b = 0; b < n; ++b) {
    float* dst = y.data() + b * channels * inner;
    for (const auto& p : parts) {
      const int64_t len = p.shape()[1] * inner;
      std::memcpy(dst, p.value().data() + b * len, sizeof(float) * static_cast<size_t>(len));
      dst += len;
    }
  }
  for (const auto& p : parts) widths.push_back(p.shape()[1]);
  return Var::make(std::move(y), parts, [widths, n, channels, inner](Node& self) {
    for (int64_t b = 0; b < n; ++b) {
      const float* src = self.grad.data() + b * channels * inner;
      for (size_t k = 0; k < widths.size(); ++k) {
        const int64_t len = widths[k] * inner;
        Node& in = *self.inputs[k];
        if (in.requires_grad) {
          float* d = in.grad_buffer().data() + b * len;
          for (int64_t i = 0; i < len; ++i) d[i] += src[i];
        }
        src += len;
      }
    }
  });
}

Var reshape(const Var& x, Shape shape) {
  Tensor y = x.value().reshaped(std::move(shape));
  return Var::make(std::move(y), {x}, [](Node& self) {
    Tensor& d = self.inputs[0]->grad_buffer();
    for (int64_t i = 0; i < d.numel(); ++i) d[i] += self.grad[i];
  });
}

Var weighted_sum(const std::vector<Var>& terms, const std::vector<double>& weights) {
  if (terms.size() != weights.size()) throw ShapeError("weighted_sum: size mismatch");
  double total = 0.0;
  for (size_t i = 0; i < terms.size(); ++i) {
    if (terms[i].value().numel() != 1) throw ShapeError("weighted_sum: terms must be scalars");
    total += weights[i] * static_cast<double>(terms[i].value()[0]);
  }
  return Var::make(Tensor({1}, {static_cast<float>(total)}), terms, [weights](Node& self) {
    for (size_t i = 0; i < self.inputs.size(); ++i) {
      if (self.inputs[i]->requires_grad) {
        self.inputs[i]->grad_buffer()[0] += static_cast<float>(weights[i]) * self.grad[0];
      }
    }
  });
}

namespace {

struct AxisSplit {
  int64_t outer = 1, len = 1, inner = 1;
};

AxisSplit split_at(const Shape& s, int axis) {
  if (axis < 0) axis += static_cast<int>(s.size());
  if (axis < 0 || axis >= static_cast<int>(s.size())) throw ShapeError("axis out of range");
  AxisSplit r;
  for (int i = 0; i < axis; ++i) r.outer *= s[static_cast<size_t>(i)];
  r.len = s[static_cast<size_t>(axis)];
  for (size_t i = static_cast<size_t>(axis) + 1; i < s.size(); ++i) r.inner *= s[i];
  return r;
}

}  // namespace

Tensor softmax(const Tensor& x, int axis, bool negate) {
  const AxisSplit sp = split_at(x.shape(), axis);
  Tensor y(x.shape());
  const float sign = negate ? -1.0f : 1.0f;
  std::vector<double> e(static_cast<size_t>(sp.len));
  for (int64_t o = 0; o < sp.outer; ++o) {
    for (int64_t i = 0; i < sp.inner; ++i) {
      const float* p = x.data() + o * sp.len * sp.inner + i;
      float* q = y.data() + o * sp.len * sp.inner + i;
      float mx = -std::numeric_limits<float>::infinity();
      for (int64_t a = 0; a < sp.len; ++a) mx = std::max(mx, sign * p[a * sp.inner]);
      double sum = 0.0;
      for (int64_t a = 0; a < sp.len; ++a) {
        e[a] = std::exp(static_cast<double>(sign * p[a * sp.inner] - mx));
        sum += e[a];
      }
      for (int64_t a = 0; a < sp.len; ++a) q[a * sp.inner] = static_cast<float>(e[a] / sum);
    }
  }
  return y;
}

Var softmax(const Var& x, int axis, bool negate) {
  const AxisSplit sp = split_at(x.shape(), axis);
  return Var::make(softmax(x.value(), axis, negate), {x}, [sp, negate](Node& self) {
    Tensor& dx = self.inputs[0]->grad_buffer();
    const float sign = negate ? -1.0f : 1.0f;
    for (int64_t o = 0; o < sp.outer; ++o) {
      for (int64_t i = 0; i < sp.inner; ++i) {
        const int64_t base = o * sp.len * sp.inner + i;
        double dot = 0.0;
        for (int64_t a = 0; a < sp.len; ++a) {
          dot += static_cast<double>(self.value[base + a * sp.inner]) * self.grad[base + a * sp.inner];
        }
        for (int64_t a = 0; a < sp.len; ++a) {
          const int64_t k = base + a * sp.inner;
          dx[k] += sign * static_cast<float>(self.value[k] * (self.grad[k] - dot));
        }
      }
    }
  });
}

namespace {

struct LinearPlan {
  std::vector<int64_t> i0, i1;
  std::vector<float> w0, w1;
};

LinearPlan linear_plan(int64_t in, int64_t out) {
  LinearPlan p;
  p.i0.resize(static_cast<size_t>(out));
  p.i1.resize(static_cast<size_t>(out));
  p.w0.resize(static_cast<size_t>(out));
  p.w1.resize(static_cast<size_t>(out));
  const double ratio = static_cast<double>(in) / static_cast<double>(out);
  for (int64_t j = 0; j < out; ++j) {
    double src = (static_cast<double>(j) + 0.5) * ratio - 0.5;
    if (src < 0.0) src = 0.0;
    int64_t a = static_cast<int64_t>(std::floor(src));
    if (a > in - 1) a = in - 1;
    const int64_t b = a < in - 1 ? a + 1 : a;
    const double lam = src - static_cast<double>(a);
    p.i0[j] = a;
    p.i1[j] = b;
    p.w1[j] = static_cast<float>(lam);
    p.w0[j] = static_cast<float>(1.0 - lam);
  }
  return p;
}

Tensor resize_axis(const Tensor& x, int axis, int64_t out_len, const LinearPlan& plan) {
  const AxisSplit sp = split_at(x.shape(), axis);
  Shape os = x.shape();
  os[static_cast<size_t>(axis)] = out_len;
  Tensor y(os);
  for (int64_t o = 0; o < sp.outer; ++o) {
    const float* src = x.data() + o * sp.len * sp.inner;
    float* dst = y.data() + o * out_len * sp.inner;
    for (int64_t j = 0; j < out_len; ++j) {
      const float* a = src + plan.i0[j] * sp.inner;
      const float* b = src + plan.i1[j] * sp.inner;
      const float w0 = plan.w0[j], w1 = plan.w1[j];
      float* q = dst + j * sp.inner;
      if (w1 == 0.0f) {
        std::memcpy(q, a, sizeof(float) * static_cast<size_t>(sp.inner));
      } else {
        for (int64_t i = 0; i < sp.inner; ++i) q[i] = w0 * a[i] + w1 * b[i];
      }
    }
  }
  return y;
}

Tensor resize_axis_adjoint(const Tensor& gy, const Shape& in_shape, int axis, const LinearPlan& plan) {
  const AxisSplit sp = split_at(in_shape, axis);
  const int64_t out_len = gy.shape()[static_cast<size_t>(axis)];
  Tensor gx(in_shape, 0.0f);
  for (int64_t o = 0; o < sp.outer; ++o) {
    const float* src = gy.data() + o * out_len * sp.inner;
    float* dst = gx.data() + o * sp.len * sp.inner;
    for (int64_t j = 0; j < out_len; ++j) {
      float* a = dst + plan.i0[j] * sp.inner;
      float* b = dst + plan.i1[j] * sp.inner;
      const float w0 = plan.w0[j], w1 = plan.w1[j];
      const float* q = src + j * sp.inner;
      for (int64_t i = 0; i < sp.inner; ++i) {
        a[i] += w0 * q[i];
        b[i] += w1 * q[i];
      }
    }
  }
  return gx;
}

}  // namespace

Tensor resize_linear(const Tensor& x, int first_axis, const std::vector<int64_t>& target) {
  if (first_axis + static_cast<int>(target.size()) != x.rank()) {
    throw ShapeError("resize_linear: target rank mismatch for " + to_string(x.shape()));
  }
  Tensor cur = x;
  for (size_t k = 0; k < target.size(); ++k) {
    const int axis = first_axis + static_cast<int>(k);
    const int64_t in = cur.dim(axis);
    if (in == target[k]) continue;
    cur = resize_axis(cur, axis, target[k], linear_plan(in, target[k]));
  }
  return cur;
}

Var resize_linear(const Var& x, int first_axis, const std::vector<int64_t>& target) {
  if (first_axis + static_cast<int>(target.size()) != static_cast<int>(x.shape().size())) {
    throw ShapeError("resize_linear: target rank mismatch for " + to_string(x.shape()));
  }
  struct Step {
    int axis;
    Shape in_shape;
    LinearPlan plan;
  };
  std::vector<Step> steps;
  Tensor cur = x.value();
  for (size_t k = 0; k < target.size(); ++k) {
    const int axis = first_axis + static_cast<int>(k);
    const int64_t in = cur.dim(axis);
    if (in == target[k]) continue;
    Step st{axis, cur.shape(), linear_plan(in, target[k])};
    cur = resize_axis(cur, axis, target[k], st.plan);
    steps.push_back(std::move(st));
  }
  return Var::make(std::move(cur), {x}, [steps](Node& self) {
    Tensor g = self.grad;
    for (auto it = steps.rbegin(); it != steps.rend(); ++it) {
      g = resize_axis_adjoint(g, it->in_shape, it->axis, it->plan);
    }
    Tensor& dx = self.inputs[0]->grad_buffer();
    for (int64_t i = 0; i < dx.numel(); ++i) dx[i] += g[i];
  });
}

}  // namespace stereodistill::ops
