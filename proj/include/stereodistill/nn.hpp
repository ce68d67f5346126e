#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "stereodistill/autograd.hpp"
#include "stereodistill/ops.hpp"

namespace stereodistill::nn {

/// How a forward pass treats normalization and which outputs it emits.
struct ForwardMode {
  bool batch_stats = false;     // normalize with batch statistics
  bool update_running = false;  // refresh running statistics (needs batch_stats)
  bool all_outputs = false;     // regress disparity from every ED output

  static ForwardMode train() { return {true, true, true}; }
  /// Training with frozen normalization statistics.
  static ForwardMode train_frozen_norm() { return {false, false, true}; }
  static ForwardMode infer() { return {false, false, false}; }
};

enum class ParamRole { conv_weight, norm_scale, norm_shift };

struct ParamRef {
  std::string name;
  Var* var = nullptr;
  ParamRole role = ParamRole::conv_weight;
  int64_t fan_out = 1;
};

struct BufferRef {
  std::string name;
  Tensor* tensor = nullptr;
};

/// Flat view over a module tree's trainable parameters and buffers.
struct StateRefs {
  std::vector<ParamRef> params;
  std::vector<BufferRef> buffers;

  int64_t trainable_count() const;
};

/// He-style (fan-out) normal init for conv weights, unit scale and zero
/// shift for norms, zero mean / unit variance buffers. Each tensor draws from
/// a stream keyed by (seed, name), so init does not depend on visit order.
void initialize(StateRefs& refs, uint64_t seed);

void zero_grad(StateRefs& refs);

/// One row of an analytic complexity report.
struct LayerCost {
  std::string module;
  std::string name;
  std::string kind;
  Shape output;
  int64_t params = 0;
  uint64_t macs = 0;
};

/// Collects analytic per-layer costs while shapes are propagated.
struct Profiler {
  std::string module;
  std::vector<LayerCost> layers;
};

/// Bias-free 2-D or 3-D convolution (optionally transposed).
class Conv {
 public:
  Conv() = default;
  Conv(int dims, int64_t in_channels, int64_t out_channels, int kernel, int stride, int pad,
       bool transposed = false);

  Var operator()(const Var& x) const;
  /// Transposed layers need the output spatial size.
  Var operator()(const Var& x, const std::vector<int64_t>& out_spatial) const;

  void collect(const std::string& prefix, StateRefs& refs);
  Shape profile(Profiler& p, const std::string& name, const Shape& in,
                const std::vector<int64_t>* out_spatial = nullptr) const;

  int dims() const { return dims_; }
  int64_t in_channels() const { return in_; }
  int64_t out_channels() const { return out_; }
  bool transposed() const { return transposed_; }
  int stride() const { return stride_; }
  int64_t param_count() const { return weight.value().numel(); }

  Var weight;

 private:
  ops::ConvGeometry geometry() const;

  int dims_ = 2;
  int64_t in_ = 0, out_ = 0;
  int kernel_ = 3, stride_ = 1, pad_ = 1;
  bool transposed_ = false;
};

class BatchNorm {
 public:
  BatchNorm() = default;
  explicit BatchNorm(int64_t channels);

  Var operator()(const Var& x, const ForwardMode& mode);
  void collect(const std::string& prefix, StateRefs& refs);
  int64_t param_count() const { return 2 * channels_; }

  Var gamma, beta;
  Tensor running_mean, running_var;

 private:
  int64_t channels_ = 0;
};

/// conv -> norm -> optional ReLU.
class ConvBn {
 public:
  ConvBn() = default;
  ConvBn(int dims, int64_t in_channels, int64_t out_channels, int kernel, int stride, int pad,
         bool relu, bool transposed = false);

  Var operator()(const Var& x, const ForwardMode& mode);
  Var operator()(const Var& x, const std::vector<int64_t>& out_spatial, const ForwardMode& mode);
  void collect(const std::string& prefix, StateRefs& refs);
  Shape profile(Profiler& p, const std::string& name, const Shape& in,
                const std::vector<int64_t>* out_spatial = nullptr) const;

  Conv conv;
  BatchNorm bn;
  bool relu = true;
};

}  // namespace stereodistill::nn
