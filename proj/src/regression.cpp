#include "stereodistill/regression.hpp"

#include "stereodistill/errors.hpp"

namespace stereodistill {

namespace {

void check_prob_shape(const Shape& s, const char* what) {
  if (s.size() != 4) throw ShapeError(std::string(what) + ": expected [B,D,H,W], got " + to_string(s));
}

}  // namespace

Tensor disparity_probabilities(const Tensor& logits, bool negate) {
  check_prob_shape(logits.shape(), "disparity_probabilities");
  const Shape& s = logits.shape();
  Tensor p(s);
  kernels::disparity_softmax(logits.data(), p.data(), s[0], s[1], s[2] * s[3], negate);
  return p;
}

Var disparity_probabilities(const Var& logits, bool negate) {
  Tensor p = disparity_probabilities(logits.value(), negate);
  return Var::make(std::move(p), {logits}, [negate](Node& self) {
    const Shape& s = self.value.shape();
    kernels::disparity_softmax_backward(self.value.data(), self.grad.data(),
                                        self.inputs[0]->grad_buffer().data(), s[0], s[1],
                                        s[2] * s[3], negate);
  });
}

Tensor soft_argmin(const Tensor& p) {
  check_prob_shape(p.shape(), "soft_argmin");
  const Shape& s = p.shape();
  Tensor out({s[0], s[2], s[3]});
  kernels::soft_argmin(p.data(), out.data(), s[0], s[1], s[2] * s[3]);
  return out;
}

Var soft_argmin(const Var& p) {
  Tensor out = soft_argmin(p.value());
  return Var::make(std::move(out), {p}, [](Node& self) {
    const Shape& s = self.inputs[0]->value.shape();
    kernels::soft_argmin_backward(self.grad.data(), self.inputs[0]->grad_buffer().data(), s[0], s[1],
                                  s[2] * s[3]);
  });
}

RegressionHead::RegressionHead(int64_t n, int max_disparity, bool negate_logits,
                               bool upsample_before_head)
    : max_disparity_(max_disparity),
      negate_(negate_logits),
      upsample_first_(upsample_before_head),
      conv1_(3, n, n, 3, 1, 1, true),
      conv2_(3, n, 1, 3, 1, 1) {}

Var RegressionHead::probabilities(const Var& volume, const nn::ForwardMode& mode) {
  const Shape& s = volume.shape();
  if (s.size() != 5) throw ShapeError("regression head expects a rank-5 volume, got " + to_string(s));
  const std::vector<int64_t> full{max_disparity_, 4 * s[3], 4 * s[4]};
  Var logits;
  if (upsample_first_) {
    logits = conv2_(conv1_(ops::resize_linear(volume, 2, full), mode));
  } else {
    logits = ops::resize_linear(conv2_(conv1_(volume, mode)), 2, full);
  }
  logits = ops::reshape(logits, {s[0], full[0], full[1], full[2]});
  return disparity_probabilities(logits, negate_);
}

void RegressionHead::collect(const std::string& prefix, nn::StateRefs& refs) {
  conv1_.collect(prefix + ".conv1", refs);
  conv2_.collect(prefix + ".conv2", refs);
}

Shape RegressionHead::profile(nn::Profiler& p, const std::string& name, const Shape& volume) const {
  Shape in = volume;
  if (upsample_first_) in = {volume[0], volume[1], max_disparity_, 4 * volume[3], 4 * volume[4]};
  conv2_.profile(p, name + ".conv2", conv1_.profile(p, name + ".conv1", in));
  return {volume[0], 4 * volume[3], 4 * volume[4]};
}

DisparityRegression::DisparityRegression(const ModelConfig& cfg) {
  for (int i = 0; i < cfg.num_ed_networks; ++i) {
    heads_.emplace_back(cfg.base_channels, cfg.max_disparity, cfg.negate_logits, cfg.upsample_before_head);
  }
}

std::vector<Var> DisparityRegression::predict(const std::vector<Var>& volumes, PredictMode mode,
                                              const nn::ForwardMode& fwd) {
  if (volumes.empty()) throw ShapeError("predict needs at least one aggregated volume");
  if (volumes.size() != heads_.size()) {
    throw ShapeError("predict got " + std::to_string(volumes.size()) + " volumes for " +
                     std::to_string(heads_.size()) + " heads");
  }
  std::vector<Var> maps;
  const size_t first = mode == PredictMode::train ? 0 : volumes.size() - 1;
  for (size_t i = first; i < volumes.size(); ++i) {
    maps.push_back(soft_argmin(heads_[i].probabilities(volumes[i], fwd)));
  }
  return maps;
}

void DisparityRegression::collect(const std::string& prefix, nn::StateRefs& refs) {
  for (size_t i = 0; i < heads_.size(); ++i) heads_[i].collect(prefix + ".head" + std::to_string(i + 1), refs);
}

Shape DisparityRegression::profile(nn::Profiler& p, const std::vector<Shape>& volumes,
                                   PredictMode mode) const {
  Shape out;
  const size_t first = mode == PredictMode::train ? 0 : volumes.size() - 1;
  for (size_t i = first; i < volumes.size(); ++i) {
    out = heads_[i].profile(p, "head" + std::to_string(i + 1), volumes[i]);
  }
  return out;
}

}  // namespace stereodistill
