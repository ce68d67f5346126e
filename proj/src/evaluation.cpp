#include "stereodistill/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "stereodistill/errors.hpp"

namespace stereodistill {

namespace {

void check_pair(const Tensor& pred, const Tensor& gt, const Mask& mask) {
  if (pred.shape() != gt.shape()) {
    throw ShapeError("prediction " + to_string(pred.shape()) + " vs ground truth " + to_string(gt.shape()));
  }
  if (!mask.empty() && static_cast<int64_t>(mask.size()) != gt.numel()) throw ShapeError("mask size mismatch");
}

bool d1_outlier(double err, double gt) { return err > 3.0 && err > 0.05 * std::abs(gt); }

}  // namespace

void MetricAccumulator::add(const Tensor& pred, const Tensor& gt, const Mask& mask) {
  check_pair(pred, gt, mask);
  for (int64_t i = 0; i < gt.numel(); ++i) {
    if (!mask.empty() && !mask[static_cast<size_t>(i)]) continue;
    const double err = std::abs(static_cast<double>(pred[i]) - gt[i]);
    abs_err_ += err;
    ++n_;
    if (d1_outlier(err, gt[i])) ++d1_;
    for (int k = 1; k <= 4; ++k) {
      if (err > k) ++over_[k];
    }
  }
}

MetricReport MetricAccumulator::report() const {
  if (n_ == 0) throw DomainError("metrics: mask selects no pixels");
  MetricReport r;
  r.n_valid = n_;
  const double n = static_cast<double>(n_);
  r.epe_px = abs_err_ / n;
  r.d1_percent = 100.0 * static_cast<double>(d1_) / n;
  for (int k = 1; k <= 4; ++k) r.kpx_percent[k] = 100.0 * static_cast<double>(over_[k]) / n;
  return r;
}

MetricReport evaluate_metrics(const Tensor& pred, const Tensor& gt, const Mask& mask) {
  MetricAccumulator acc;
  acc.add(pred, gt, mask);
  return acc.report();
}

double epe(const Tensor& pred, const Tensor& gt, const Mask& mask) { return evaluate_metrics(pred, gt, mask).epe_px; }

double d1(const Tensor& pred, const Tensor& gt, const Mask& mask) {
  return evaluate_metrics(pred, gt, mask).d1_percent;
}

double kpx(const Tensor& pred, const Tensor& gt, const Mask& mask, int k) {
  if (k < 1 || k > 4) throw DomainError("kpx: k must be in 1..4");
  return evaluate_metrics(pred, gt, mask).kpx_percent.at(k);
}

ComplexityReport profile_model(const ModelConfig& cfg, int64_t height, int64_t width, PredictMode mode) {
  StereoNet net(cfg);
  ComplexityReport r;
  r.variant = cfg.name();
  r.height = height;
  r.width = width;
  for (auto& p : net.profile(height, width, mode)) {
    ModuleCost m{p.module, 0, 0};
    for (auto& l : p.layers) {
      m.params += l.params;
      m.macs += l.macs;
      r.layers.push_back(l);
    }
    r.params += m.params;
    r.macs += m.macs;
    r.modules.push_back(m);
  }
  return r;
}

int64_t count_params(StereoNet& net) { return net.state().trainable_count(); }

uint64_t count_macs(const StereoNet& net, int64_t height, int64_t width, PredictMode mode) {
  uint64_t total = 0;
  for (const auto& p : net.profile(height, width, mode)) {
    for (const auto& l : p.layers) total += l.macs;
  }
  return total;
}

std::string complexity_csv(const ComplexityReport& r, bool per_layer) {
  std::ostringstream os;
  if (per_layer) {
    os << "module,layer,kind,output,params,macs\n";
    for (const auto& l : r.layers) {
      std::string shape = to_string(l.output);
      std::replace(shape.begin(), shape.end(), ',', 'x');
      os << l.module << ',' << l.name << ',' << l.kind << ',' << shape << ',' << l.params << ',' << l.macs << '\n';
    }
    return os.str();
  }
  os << "variant,height,width,module,params,macs\n";
  for (const auto& m : r.modules) {
    os << r.variant << ',' << r.height << ',' << r.width << ',' << m.module << ',' << m.params << ',' << m.macs << '\n';
  }
  os << r.variant << ',' << r.height << ',' << r.width << ",total," << r.params << ',' << r.macs << '\n';
  return os.str();
}

std::string complexity_table(const ComplexityReport& r) {
  std::ostringstream os;
  char line[160];
  std::snprintf(line, sizeof line, "%s at %lldx%lld\n", r.variant.c_str(), static_cast<long long>(r.height),
                static_cast<long long>(r.width));
  os << line;
  std::snprintf(line, sizeof line, "%-14s %14s %14s\n", "module", "params (M)", "MACs (G)");
  os << line;
  for (const auto& m : r.modules) {
    std::snprintf(line, sizeof line, "%-14s %14.4f %14.3f\n", m.module.c_str(), static_cast<double>(m.params) / 1e6,
                  static_cast<double>(m.macs) / 1e9);
    os << line;
  }
  std::snprintf(line, sizeof line, "%-14s %14.4f %14.3f\n", "total", r.params_millions(), r.macs_giga());
  os << line;
  return os.str();
}

std::string metrics_csv_header() { return "id,n_valid,epe_px,d1_percent,px1_percent,px2_percent,px3_percent,px4_percent"; }

std::string metrics_csv_row(const std::string& id, const MetricReport& m) {
  std::ostringstream os;
  os.precision(9);
  os << id << ',' << m.n_valid << ',' << m.epe_px << ',' << m.d1_percent;
  for (int k = 1; k <= 4; ++k) os << ',' << m.kpx_percent.at(k);
  return os.str();
}

namespace {

// Blue -> cyan -> green -> yellow -> red.
void ramp(double t, float rgb[3]) {
  t = std::clamp(t, 0.0, 1.0);
  const double r = std::clamp(2.0 * t - 0.5, 0.0, 1.0) * 1.0;
  const double g = 1.0 - std::abs(2.0 * t - 1.0);
  const double b = std::clamp(1.5 - 2.0 * t, 0.0, 1.0);
  rgb[0] = static_cast<float>(t > 0.75 ? 1.0 : r);
  rgb[1] = static_cast<float>(g);
  rgb[2] = static_cast<float>(t < 0.25 ? 1.0 : b);
}

}  // namespace

Tensor error_map_image(const Tensor& pred, const Tensor& gt, const Mask& mask, float max_error) {
  check_pair(pred, gt, mask);
  if (gt.rank() != 2) throw ShapeError("error_map_image expects [H,W]");
  const int64_t plane = gt.numel();
  Tensor img({3, gt.dim(0), gt.dim(1)});
  for (int64_t i = 0; i < plane; ++i) {
    if ((!mask.empty() && !mask[static_cast<size_t>(i)]) || !std::isfinite(gt[i])) continue;
    float rgb[3];
    ramp(std::abs(pred[i] - gt[i]) / max_error, rgb);
    for (int c = 0; c < 3; ++c) img[c * plane + i] = rgb[c];
  }
  return img;
}

Tensor disparity_image(const Tensor& disparity, float max_disparity) {
  if (disparity.rank() != 2) throw ShapeError("disparity_image expects [H,W]");
  const int64_t plane = disparity.numel();
  Tensor img({3, disparity.dim(0), disparity.dim(1)});
  for (int64_t i = 0; i < plane; ++i) {
    if (!std::isfinite(disparity[i])) continue;
    float rgb[3];
    ramp(disparity[i] / max_disparity, rgb);
    for (int c = 0; c < 3; ++c) img[c * plane + i] = rgb[c];
  }
  return img;
}

}  // namespace stereodistill
