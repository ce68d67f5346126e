#pragma once

#include "stereodistill/config.hpp"
#include "stereodistill/nn.hpp"

namespace stereodistill {

/// Group-wise correlation volume [N, G, D/4, H4, W4] from quarter-resolution
/// features [N, C, H4, W4]:
///   V(g,d,y,x) = (G/C) * sum_{c in group g} L(c,y,x) * R(c,y,x-d),
/// zero where x - d < 0. `max_disparity` is the full-resolution D.
Tensor groupwise_correlation(const Tensor& left, const Tensor& right, int64_t max_disparity,
                             int64_t groups);
Var groupwise_correlation(const Var& left, const Var& right, int64_t max_disparity, int64_t groups);

/// out(g,d,y,x) = volume(g,d,y,x) * weights(0,d,y,x).
Tensor apply_attention(const Tensor& volume, const Tensor& weights);
Var apply_attention(const Var& volume, const Var& weights);

/// Small network predicting per-(d,y,x) gating weights from the backbone
/// features: 8-group correlation -> conv3d 8->16 (+norm, ReLU) -> conv3d
/// 16->1 -> sigmoid (or softmax over disparity when configured).
class AttentionNet {
 public:
  static constexpr int64_t kGroups = 8;
  static constexpr int64_t kHidden = 16;

  AttentionNet() = default;
  AttentionNet(int max_disparity, bool softmax_over_disparity);

  Var operator()(const Var& left_feat, const Var& right_feat, const nn::ForwardMode& mode);
  void collect(const std::string& prefix, nn::StateRefs& refs);
  Shape profile(nn::Profiler& p, const Shape& feature_shape) const;

 private:
  int max_disparity_ = 192;
  bool softmax_ = false;
  nn::ConvBn conv1_;
  nn::Conv conv2_;
};

AttentionNet build_attention_network(const ModelConfig& cfg);

}  // namespace stereodistill
