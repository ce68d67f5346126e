#pragma once

#include <vector>

#include "stereodistill/config.hpp"
#include "stereodistill/nn.hpp"

namespace stereodistill {

/// 3-D encoder-decoder over an [B, N, D4, H4, W4] volume. Two stride-2
/// stages (2N, 4N channels) each followed by a stride-1 conv, then two
/// transposed stages back to 2N and N with additive skips.
class EDNetwork {
 public:
  EDNetwork() = default;
  explicit EDNetwork(int64_t base_channels);

  /// `bottleneck`, when given, receives the 4N-channel row-4 activation.
  Var forward(const Var& x, const nn::ForwardMode& mode, Var* bottleneck = nullptr);
  void collect(const std::string& prefix, nn::StateRefs& refs);
  Shape profile(nn::Profiler& p, const std::string& name, const Shape& in) const;

  int64_t base_channels() const { return n_; }
  static constexpr int kConvLayers = 6;

 private:
  int64_t n_ = 0;
  nn::ConvBn down1_, conv2_, down3_, conv4_;
  nn::ConvBn up5_, up6_;  // transposed, no ReLU before the skip add
};

EDNetwork build_ed_network(int64_t base_channels);

/// Pre-convolution (G -> N -> N) followed by a chain of ED networks.
class CostAggregation {
 public:
  CostAggregation() = default;
  CostAggregation(int64_t groups, int64_t base_channels, int num_ed_networks);

  /// One output per ED, in chain order. `bottlenecks` collects row-4
  /// activations when non-null.
  std::vector<Var> operator()(const Var& volume, const nn::ForwardMode& mode,
                              std::vector<Var>* bottlenecks = nullptr);
  void collect(const std::string& prefix, nn::StateRefs& refs);
  /// Returns the shape of every ED output.
  std::vector<Shape> profile(nn::Profiler& p, const Shape& volume) const;

  int num_ed_networks() const { return static_cast<int>(eds_.size()); }

 private:
  int64_t groups_ = 0;
  nn::ConvBn pre1_, pre2_;
  std::vector<EDNetwork> eds_;
};

CostAggregation build_aggregation(const ModelConfig& cfg);

}  // namespace stereodistill
