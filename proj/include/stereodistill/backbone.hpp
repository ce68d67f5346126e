#pragma once

#include <optional>
#include <vector>

#include "stereodistill/config.hpp"
#include "stereodistill/nn.hpp"

namespace stereodistill {

/// Residual block. B1: two 3x3 conv layers with a skip (1x1 projection when
/// the channel count changes). B2: the first conv and the 1x1 skip are
/// stride 2, halving height and width.
class Block {
 public:
  Block() = default;
  Block(int64_t channels_in, int64_t channels_out, int stride);

  Var operator()(const Var& x, const nn::ForwardMode& mode);
  void collect(const std::string& prefix, nn::StateRefs& refs);
  Shape profile(nn::Profiler& p, const std::string& name, const Shape& in) const;

  bool has_projection() const { return skip_.has_value(); }
  int stride() const { return stride_; }
  /// Conv layers including the skip projection.
  int conv_count() const { return has_projection() ? 3 : 2; }

 private:
  nn::ConvBn conv1_, conv2_;
  std::optional<nn::ConvBn> skip_;
  int stride_ = 1;
};

Block build_block_b1(int64_t channels_in, int64_t channels_out);
Block build_block_b2(int64_t channels_in, int64_t channels_out);

/// Early-layer activations captured for feature distillation.
struct BackboneTaps {
  Var layer3;  // last stem conv, 32 x H/2 x W/2
  Var layer5;  // level-1 output, 32 x H/2 x W/2
};

/// Shared-weight 2-D feature extractor producing 320 x H/4 x W/4 features.
class FeatureExtractor {
 public:
  struct Row {
    int table_row = 0;  // 1-based row of the BB21 schedule
    std::optional<nn::ConvBn> conv;
    std::optional<Block> block;
  };

  FeatureExtractor() = default;
  explicit FeatureExtractor(BackboneVariant variant);

  Var forward(const Var& image, const nn::ForwardMode& mode, BackboneTaps* taps = nullptr);
  void collect(const std::string& prefix, nn::StateRefs& refs);
  Shape profile(nn::Profiler& p, const Shape& in) const;

  BackboneVariant variant() const { return variant_; }
  const std::vector<Row>& rows() const { return rows_; }
  int conv_layer_count() const;
  static constexpr int64_t kOutputChannels = 320;

 private:
  BackboneVariant variant_ = BackboneVariant::bb21;
  std::vector<Row> rows_;
  size_t tap3_index_ = 0;  // row index whose output is the layer-3 tap
  size_t tap5_index_ = 0;  // row index whose output is the layer-5 tap
};

/// BB21 rows kept by a variant (BB18 drops rows 3 and 9; BB14 drops 3, 5, 7, 9).
std::vector<int> backbone_rows(BackboneVariant variant);

FeatureExtractor build_backbone(const ModelConfig& cfg);

struct StereoFeatures {
  Var left;
  Var right;
  BackboneTaps left_taps;
  BackboneTaps right_taps;  // only when requested
};

/// Runs both views through the same weights. Taps come from the left view
/// unless `tap_right` is set.
StereoFeatures extract_features(FeatureExtractor& fx, const Var& left, const Var& right,
                                const nn::ForwardMode& mode, bool tap_right = false);

}  // namespace stereodistill
