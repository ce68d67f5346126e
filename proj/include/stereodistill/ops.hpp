#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "stereodistill/autograd.hpp"

namespace stereodistill::ops {

/// Kernel/stride/padding per spatial axis in (depth, height, width) order.
/// 2-D convolutions use depth = 1 with unit kernel and stride.
struct ConvGeometry {
  std::array<int, 3> kernel{1, 1, 1};
  std::array<int, 3> stride{1, 1, 1};
  std::array<int, 3> pad{0, 0, 0};

  static ConvGeometry conv2d(int k, int stride, int pad);
  static ConvGeometry conv3d(int k, int stride, int pad);
};

int64_t conv_output_size(int64_t in, int k, int stride, int pad);

/// Cross-correlation without bias. x: [N,C,H,W] or [N,C,D,H,W];
/// w: [O,C,kh,kw] or [O,C,kd,kh,kw].
Var conv(const Var& x, const Var& w, const ConvGeometry& g);

/// Transposed convolution without bias, the adjoint of `conv` with the same
/// geometry. w: [Cin,Cout,k...]. `out_spatial` fixes the output size, which
/// resolves the output-padding ambiguity of strided layers.
Var conv_transpose(const Var& x, const Var& w, const ConvGeometry& g,
                   const std::vector<int64_t>& out_spatial);

/// Running MAC count of every conv executed on this thread, using
/// Cout * Cin * prod(kernel) * prod(output spatial) per batch item for both
/// direct and transposed layers.
uint64_t& conv_mac_counter();

/// Per-channel normalization over batch and spatial axes. In training mode
/// batch statistics are used and the running buffers updated; otherwise the
/// running buffers are used.
Var batch_norm(const Var& x, const Var& gamma, const Var& beta, Tensor& running_mean,
               Tensor& running_var, bool use_batch_stats, bool update_running,
               float momentum = 0.1f, float eps = 1e-5f);

Var relu(const Var& x);
Var sigmoid(const Var& x);
Var add(const Var& a, const Var& b);
Var scale(const Var& x, float factor);
/// Channel (axis 1) concatenation.
Var concat_channels(const std::vector<Var>& parts);
Var reshape(const Var& x, Shape shape);

/// Scalar result: sum_i weights[i] * terms[i]; every term must be a scalar.
Var weighted_sum(const std::vector<Var>& terms, const std::vector<double>& weights);

/// Softmax along `axis`; with `negate` the logits are -x.
Var softmax(const Var& x, int axis, bool negate);
Tensor softmax(const Tensor& x, int axis, bool negate);

/// Linear interpolation of every axis from `first_axis` on to `target`
/// (half-pixel centers, corner alignment off, edge clamp).
Var resize_linear(const Var& x, int first_axis, const std::vector<int64_t>& target);
Tensor resize_linear(const Tensor& x, int first_axis, const std::vector<int64_t>& target);

}  // namespace stereodistill::ops
