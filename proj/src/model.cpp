#include "stereodistill/model.hpp"

#include "stereodistill/errors.hpp"

namespace stereodistill {

std::string to_string(DistillPoint p) {
  switch (p) {
    case DistillPoint::fe_early: return "fe_early";
    case DistillPoint::cost_volume: return "cost_volume";
    case DistillPoint::cost_aggregation: return "cost_aggregation";
    case DistillPoint::disparity: return "disparity";
  }
  return "?";
}

DistillPoint parse_distill_point(std::string_view s) {
  for (auto p : {DistillPoint::fe_early, DistillPoint::cost_volume, DistillPoint::cost_aggregation,
                 DistillPoint::disparity}) {
    if (to_string(p) == s) return p;
  }
  if (s == "fe") return DistillPoint::fe_early;
  if (s == "cv") return DistillPoint::cost_volume;
  if (s == "ca") return DistillPoint::cost_aggregation;
  if (s == "disp" || s == "stpw") return DistillPoint::disparity;
  throw ConfigError("unknown distillation point '" + std::string(s) + "'");
}

std::optional<DistillPoint> point_of(Term t) {
  switch (t) {
    case Term::fe: return DistillPoint::fe_early;
    case Term::cv: return DistillPoint::cost_volume;
    case Term::ca: return DistillPoint::cost_aggregation;
    case Term::stpw: return DistillPoint::disparity;
    case Term::spw: return std::nullopt;
  }
  return std::nullopt;
}

const std::vector<Var>& TapSet::at(DistillPoint p) const {
  auto it = entries.find(p);
  if (it == entries.end() || it->second.empty()) {
    throw CapabilityError("tap set has no '" + to_string(p) + "' entry");
  }
  return it->second;
}

std::vector<DistillPoint> TapSet::points() const {
  std::vector<DistillPoint> out;
  for (const auto& [p, v] : entries) {
    if (!v.empty()) out.push_back(p);
  }
  return out;
}

StereoNet::StereoNet(const ModelConfig& cfg)
    : cfg_(cfg),
      backbone_(build_backbone(cfg)),
      aggregation_(build_aggregation(cfg)),
      regression_(cfg) {
  if (cfg.use_attention) attention_.emplace(build_attention_network(cfg));
}

StereoNet::Output StereoNet::forward(const Var& left, const Var& right, const nn::ForwardMode& mode,
                                     bool want_bottlenecks) {
  Output out;
  StereoFeatures f = extract_features(backbone_, left, right, mode, cfg_.fe_taps_both_views);
  out.features_left = f.left;
  out.features_right = f.right;
  Var volume = groupwise_correlation(f.left, f.right, cfg_.max_disparity, cfg_.correlation_groups);
  if (attention_) {
    out.attention = (*attention_)(f.left, f.right, mode);
    volume = apply_attention(volume, out.attention);
  }
  out.aggregated = aggregation_(volume, mode, want_bottlenecks ? &out.bottlenecks : nullptr);
  out.disparities = regression_.predict(
      out.aggregated, mode.all_outputs ? PredictMode::train : PredictMode::infer, mode);

  auto& fe = out.taps.entries[DistillPoint::fe_early];
  fe = {f.left_taps.layer3, f.left_taps.layer5};
  if (cfg_.fe_taps_both_views) {
    fe.push_back(f.right_taps.layer3);
    fe.push_back(f.right_taps.layer5);
  }
  out.taps.entries[DistillPoint::cost_volume] = {volume};
  out.taps.entries[DistillPoint::cost_aggregation] = {out.aggregated.back()};
  out.taps.entries[DistillPoint::disparity] = out.disparities;
  return out;
}

Tensor StereoNet::predict(const Tensor& left, const Tensor& right) {
  NoGradGuard guard;
  return forward(Var(left), Var(right), nn::ForwardMode::infer()).disparities.back().value();
}

nn::StateRefs StereoNet::state() {
  nn::StateRefs refs;
  backbone_.collect("backbone", refs);
  if (attention_) attention_->collect("attention", refs);
  aggregation_.collect("aggregation", refs);
  regression_.collect("regression", refs);
  return refs;
}

void StereoNet::initialize(uint64_t seed) {
  nn::StateRefs refs = state();
  nn::initialize(refs, seed);
}

std::vector<nn::Profiler> StereoNet::profile(int64_t height, int64_t width, PredictMode mode) const {
  if (height % 4 != 0 || width % 4 != 0) {
    throw ShapeError("profile input " + std::to_string(height) + "x" + std::to_string(width) +
                     " is not divisible by 4");
  }
  std::vector<nn::Profiler> out;
  // Both views share weights: profiling a batch of two counts their MACs
  // once per view and the parameters once.
  nn::Profiler bb{"backbone", {}};
  const Shape feat = backbone_.profile(bb, {2, 3, height, width});
  out.push_back(std::move(bb));
  const Shape one_view{1, feat[1], feat[2], feat[3]};
  if (attention_) {
    nn::Profiler at{"attention", {}};
    attention_->profile(at, one_view);
    out.push_back(std::move(at));
  }
  const Shape volume{1, cfg_.correlation_groups, cfg_.quarter_disparity(), feat[2], feat[3]};
  nn::Profiler ag{"aggregation", {}};
  const std::vector<Shape> vols = aggregation_.profile(ag, volume);
  out.push_back(std::move(ag));
  nn::Profiler rg{"regression", {}};
  regression_.profile(rg, vols, mode);
  out.push_back(std::move(rg));
  return out;
}

}  // namespace stereodistill
