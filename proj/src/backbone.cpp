#include "stereodistill/backbone.hpp"

#include <algorithm>

#include "stereodistill/errors.hpp"

namespace stereodistill {

Block::Block(int64_t channels_in, int64_t channels_out, int stride)
    : conv1_(2, channels_in, channels_out, 3, stride, 1, true),
      conv2_(2, channels_out, channels_out, 3, 1, 1, false),
      stride_(stride) {
  if (stride != 1 || channels_in != channels_out) {
    skip_.emplace(2, channels_in, channels_out, 1, stride, 0, false);
  }
}

Var Block::operator()(const Var& x, const nn::ForwardMode& mode) {
  Var y = conv2_(conv1_(x, mode), mode);
  Var s = skip_ ? (*skip_)(x, mode) : x;
  return ops::relu(ops::add(y, s));
}

void Block::collect(const std::string& prefix, nn::StateRefs& refs) {
  conv1_.collect(prefix + ".conv1", refs);
  conv2_.collect(prefix + ".conv2", refs);
  if (skip_) skip_->collect(prefix + ".skip", refs);
}

Shape Block::profile(nn::Profiler& p, const std::string& name, const Shape& in) const {
  Shape out = conv2_.profile(p, name + ".conv2", conv1_.profile(p, name + ".conv1", in));
  if (skip_) skip_->profile(p, name + ".skip", in);
  return out;
}

Block build_block_b1(int64_t channels_in, int64_t channels_out) {
  return Block(channels_in, channels_out, 1);
}

Block build_block_b2(int64_t channels_in, int64_t channels_out) {
  return Block(channels_in, channels_out, 2);
}

std::vector<int> backbone_rows(BackboneVariant variant) {
  switch (variant) {
    case BackboneVariant::bb21: return {1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11};
    case BackboneVariant::bb18: return {1, 2, 4, 5, 6, 7, 8, 10, 11};
    case BackboneVariant::bb14: return {1, 2, 4, 6, 8, 10, 11};
  }
  return {};
}

FeatureExtractor::FeatureExtractor(BackboneVariant variant) : variant_(variant) {
  for (int r : backbone_rows(variant)) {
    Row row;
    row.table_row = r;
    switch (r) {
      case 1: row.conv.emplace(2, 3, 32, 3, 2, 1, true); break;
      case 2:
      case 3: row.conv.emplace(2, 32, 32, 3, 1, 1, true); break;
      case 4:
      case 5: row.block = build_block_b1(32, 32); break;
      case 6: row.block = build_block_b2(32, 64); break;
      case 7:
      case 8:
      case 9: row.block = build_block_b1(64, 64); break;
      case 10: row.block = build_block_b1(64, 128); break;
      case 11: row.block = build_block_b1(128, 128); break;
      default: throw ConfigError("bad backbone row");
    }
    rows_.push_back(std::move(row));
  }
  for (size_t i = 0; i < rows_.size(); ++i) {
    if (rows_[i].conv) tap3_index_ = i;
    if (rows_[i].table_row <= 5) tap5_index_ = i;
  }
}

int FeatureExtractor::conv_layer_count() const {
  int n = 0;
  for (const auto& r : rows_) n += r.conv ? 1 : r.block->conv_count();
  return n;
}

Var FeatureExtractor::forward(const Var& image, const nn::ForwardMode& mode, BackboneTaps* taps) {
  const Shape& s = image.shape();
  if (s.size() != 4 || s[1] != 3) {
    throw ShapeError("backbone expects [N,3,H,W] images, got " + to_string(s));
  }
  if (s[2] % 4 != 0 || s[3] % 4 != 0) {
    throw ShapeError("image height and width must be divisible by 4, got " + to_string(s));
  }
  Var x = image;
  std::vector<Var> outputs;
  outputs.reserve(rows_.size());
  for (size_t i = 0; i < rows_.size(); ++i) {
    auto& row = rows_[i];
    x = row.conv ? (*row.conv)(x, mode) : (*row.block)(x, mode);
    outputs.push_back(x);
  }
  if (taps) {
    taps->layer3 = outputs[tap3_index_];
    taps->layer5 = outputs[tap5_index_];
  }
  const size_t n = outputs.size();
  return ops::concat_channels({outputs[n - 3], outputs[n - 2], outputs[n - 1]});
}

void FeatureExtractor::collect(const std::string& prefix, nn::StateRefs& refs) {
  for (auto& row : rows_) {
    const std::string name = prefix + ".row" + std::to_string(row.table_row);
    if (row.conv) {
      row.conv->collect(name, refs);
    } else {
      row.block->collect(name, refs);
    }
  }
}

Shape FeatureExtractor::profile(nn::Profiler& p, const Shape& in) const {
  Shape x = in;
  std::vector<Shape> outs;
  for (const auto& row : rows_) {
    const std::string name = "row" + std::to_string(row.table_row);
    x = row.conv ? row.conv->profile(p, name, x) : row.block->profile(p, name, x);
    outs.push_back(x);
  }
  const size_t n = outs.size();
  Shape out = outs[n - 1];
  out[1] = outs[n - 3][1] + outs[n - 2][1] + outs[n - 1][1];
  return out;
}

FeatureExtractor build_backbone(const ModelConfig& cfg) {
  cfg.validate();
  return FeatureExtractor(cfg.backbone);
}

StereoFeatures extract_features(FeatureExtractor& fx, const Var& left, const Var& right,
                                const nn::ForwardMode& mode, bool tap_right) {
  if (left.shape() != right.shape()) {
    throw ShapeError("left/right shape mismatch: " + to_string(left.shape()) + " vs " +
                     to_string(right.shape()));
  }
  StereoFeatures f;
  f.left = fx.forward(left, mode, &f.left_taps);
  f.right = fx.forward(right, mode, tap_right ? &f.right_taps : nullptr);
  return f;
}

}  // namespace stereodistill
