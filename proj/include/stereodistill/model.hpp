#pragma once

#include <map>
#include <optional>
#include <vector>

#include "stereodistill/aggregation.hpp"
#include "stereodistill/backbone.hpp"
#include "stereodistill/costvolume.hpp"
#include "stereodistill/regression.hpp"

namespace stereodistill {

/// Locations where student activations can be matched to a teacher.
enum class DistillPoint { fe_early, cost_volume, cost_aggregation, disparity };
std::string to_string(DistillPoint p);
DistillPoint parse_distill_point(std::string_view s);

/// Point a teacher-matching term reads. `spw` has none (it uses ground truth).
std::optional<DistillPoint> point_of(Term t);

/// Named intermediate activations keyed by distillation point.
///   fe_early:          [layer3, layer5] (plus the right view when configured)
///   cost_volume:       [volume after optional attention]
///   cost_aggregation:  [final ED output]
///   disparity:         one map per emitted output, final last
/// A point flagged as a distribution already holds normalized
/// probabilities along its disparity axis.
struct TapSet {
  std::map<DistillPoint, std::vector<Var>> entries;
  std::map<DistillPoint, bool> distribution;

  bool has(DistillPoint p) const { return entries.count(p) && !entries.at(p).empty(); }
  const std::vector<Var>& at(DistillPoint p) const;
  bool is_distribution(DistillPoint p) const {
    auto it = distribution.find(p);
    return it != distribution.end() && it->second;
  }
  std::vector<DistillPoint> points() const;
};

/// Full student/teacher network: backbone, correlation (+attention),
/// aggregation and regression.
class StereoNet {
 public:
  struct Output {
    std::vector<Var> disparities;  // per ED in training mode, final only otherwise
    std::vector<Var> aggregated;   // every ED output
    std::vector<Var> bottlenecks;  // when requested
    Var features_left, features_right;
    Var attention;                 // when enabled
    TapSet taps;
  };

  StereoNet() = default;
  explicit StereoNet(const ModelConfig& cfg);

  /// left/right: [B, 3, H, W] standardized images.
  Output forward(const Var& left, const Var& right, const nn::ForwardMode& mode,
                 bool want_bottlenecks = false);
  /// Inference disparity [B, H, W] without recording history.
  Tensor predict(const Tensor& left, const Tensor& right);

  /// References into this instance; re-collect after moving the object.
  nn::StateRefs state();
  void initialize(uint64_t seed);

  /// Analytic per-module costs. `mode` selects which heads run.
  std::vector<nn::Profiler> profile(int64_t height, int64_t width, PredictMode mode) const;

  const ModelConfig& config() const { return cfg_; }
  const FeatureExtractor& backbone() const { return backbone_; }

 private:
  ModelConfig cfg_;
  FeatureExtractor backbone_;
  std::optional<AttentionNet> attention_;
  CostAggregation aggregation_;
  DisparityRegression regression_;
};

}  // namespace stereodistill
