#pragma once

#include <map>
#include <string>
#include <vector>

#include "stereodistill/losses.hpp"
#include "stereodistill/model.hpp"

namespace stereodistill {

// Per-pixel metrics over the mask (empty = all pixels). An empty selection
// raises DomainError. Non-finite ground truth is never read when masked.
double epe(const Tensor& pred, const Tensor& gt, const Mask& mask = {});
double d1(const Tensor& pred, const Tensor& gt, const Mask& mask = {});
double kpx(const Tensor& pred, const Tensor& gt, const Mask& mask, int k);

struct MetricReport {
  double epe_px = 0;
  double d1_percent = 0;
  std::map<int, double> kpx_percent;  // k = 1..4
  int64_t n_valid = 0;
};

/// Pixel-weighted running totals, so a report over many frames equals the
/// report over their concatenation.
class MetricAccumulator {
 public:
  void add(const Tensor& pred, const Tensor& gt, const Mask& mask = {});
  MetricReport report() const;

 private:
  double abs_err_ = 0;
  int64_t n_ = 0, d1_ = 0;
  int64_t over_[5] = {0, 0, 0, 0, 0};
};

MetricReport evaluate_metrics(const Tensor& pred, const Tensor& gt, const Mask& mask = {});

struct ModuleCost {
  std::string module;
  int64_t params = 0;
  uint64_t macs = 0;
};

struct ComplexityReport {
  std::string variant;
  int64_t height = 0, width = 0;
  int64_t params = 0;
  uint64_t macs = 0;
  std::vector<ModuleCost> modules;
  std::vector<nn::LayerCost> layers;

  double params_millions() const { return static_cast<double>(params) / 1e6; }
  double macs_giga() const { return static_cast<double>(macs) / 1e9; }
};

/// Analytic costs for one stereo pair at height x width. Conv layers use
/// Cout * Cin * prod(kernel) * prod(output); norms add parameters only;
/// correlation, interpolation and softmax are excluded.
ComplexityReport profile_model(const ModelConfig& cfg, int64_t height, int64_t width,
                               PredictMode mode = PredictMode::infer);
int64_t count_params(StereoNet& net);
uint64_t count_macs(const StereoNet& net, int64_t height, int64_t width, PredictMode mode = PredictMode::infer);

std::string complexity_csv(const ComplexityReport& r, bool per_layer = false);
std::string complexity_table(const ComplexityReport& r);
std::string metrics_csv_header();
std::string metrics_csv_row(const std::string& id, const MetricReport& m);

/// Error map: |pred - gt| mapped from blue (0) to red (>= max_error); invalid
/// pixels are black. pred/gt are [H, W].
Tensor error_map_image(const Tensor& pred, const Tensor& gt, const Mask& mask, float max_error = 3.0f);
/// Disparity in [0, max_disparity] as a blue-to-red image.
Tensor disparity_image(const Tensor& disparity, float max_disparity);

}  // namespace stereodistill
