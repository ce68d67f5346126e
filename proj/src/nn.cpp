#include "stereodistill/nn.hpp"

#include <cmath>
#include <random>

#include "stereodistill/errors.hpp"
#include "stereodistill/rng.hpp"

namespace stereodistill::nn {

int64_t StateRefs::trainable_count() const {
  int64_t n = 0;
  for (const auto& p : params) n += p.var->value().numel();
  return n;
}

void initialize(StateRefs& refs, uint64_t seed) {
  for (auto& p : refs.params) {
    Tensor& t = p.var->mutable_value();
    switch (p.role) {
      case ParamRole::conv_weight: {
        std::mt19937_64 gen(stream_seed(seed, p.name));
        std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / static_cast<double>(p.fan_out)));
        for (auto& v : t.values()) v = static_cast<float>(dist(gen));
        break;
      }
      case ParamRole::norm_scale: t.fill(1.0f); break;
      case ParamRole::norm_shift: t.fill(0.0f); break;
    }
  }
  for (auto& b : refs.buffers) {
    const bool is_var = b.name.size() >= 3 && b.name.compare(b.name.size() - 3, 3, "var") == 0;
    b.tensor->fill(is_var ? 1.0f : 0.0f);
  }
}

void zero_grad(StateRefs& refs) {
  for (auto& p : refs.params) p.var->zero_grad();
}

Conv::Conv(int dims, int64_t in_channels, int64_t out_channels, int kernel, int stride, int pad,
           bool transposed)
    : dims_(dims), in_(in_channels), out_(out_channels), kernel_(kernel), stride_(stride),
      pad_(pad), transposed_(transposed) {
  if (dims != 2 && dims != 3) throw ConfigError("Conv supports 2-D and 3-D only");
  if (in_channels < 1 || out_channels < 1) throw ConfigError("Conv channels must be positive");
  Shape w = transposed ? Shape{in_channels, out_channels} : Shape{out_channels, in_channels};
  for (int i = 0; i < dims; ++i) w.push_back(kernel);
  weight = Var(Tensor(w), true);
}

ops::ConvGeometry Conv::geometry() const {
  return dims_ == 2 ? ops::ConvGeometry::conv2d(kernel_, stride_, pad_)
                    : ops::ConvGeometry::conv3d(kernel_, stride_, pad_);
}

Var Conv::operator()(const Var& x) const {
  if (transposed_) throw ShapeError("transposed conv needs an output size");
  return ops::conv(x, weight, geometry());
}

Var Conv::operator()(const Var& x, const std::vector<int64_t>& out_spatial) const {
  if (!transposed_) return ops::conv(x, weight, geometry());
  return ops::conv_transpose(x, weight, geometry(), out_spatial);
}

void Conv::collect(const std::string& prefix, StateRefs& refs) {
  int64_t k = 1;
  for (int i = 0; i < dims_; ++i) k *= kernel_;
  refs.params.push_back({prefix + ".weight", &weight, ParamRole::conv_weight, out_ * k});
}

Shape Conv::profile(Profiler& p, const std::string& name, const Shape& in,
                    const std::vector<int64_t>* out_spatial) const {
  if (in.size() != static_cast<size_t>(dims_ + 2) || in[1] != in_) {
    throw ShapeError("profile: " + name + " got input " + to_string(in));
  }
  Shape out{in[0], out_};
  if (transposed_) {
    if (!out_spatial) throw ShapeError("profile: transposed layer needs output size");
    for (auto s : *out_spatial) out.push_back(s);
  } else {
    for (size_t i = 2; i < in.size(); ++i) out.push_back(ops::conv_output_size(in[i], kernel_, stride_, pad_));
  }
  int64_t k = 1;
  for (int i = 0; i < dims_; ++i) k *= kernel_;
  int64_t vout = 1;
  for (size_t i = 2; i < out.size(); ++i) vout *= out[i];
  LayerCost c;
  c.module = p.module;
  c.name = name;
  c.kind = std::string(transposed_ ? "convT" : "conv") + std::to_string(dims_) + "d";
  c.output = out;
  c.params = param_count();
  c.macs = static_cast<uint64_t>(out_ * in_ * k * vout * in[0]);
  p.layers.push_back(c);
  return out;
}

BatchNorm::BatchNorm(int64_t channels)
    : gamma(Tensor({channels}, 1.0f), true),
      beta(Tensor({channels}, 0.0f), true),
      running_mean({channels}, 0.0f),
      running_var({channels}, 1.0f),
      channels_(channels) {}

Var BatchNorm::operator()(const Var& x, const ForwardMode& mode) {
  return ops::batch_norm(x, gamma, beta, running_mean, running_var, mode.batch_stats,
                         mode.batch_stats && mode.update_running);
}

void BatchNorm::collect(const std::string& prefix, StateRefs& refs) {
  refs.params.push_back({prefix + ".gamma", &gamma, ParamRole::norm_scale, 1});
  refs.params.push_back({prefix + ".beta", &beta, ParamRole::norm_shift, 1});
  refs.buffers.push_back({prefix + ".running_mean", &running_mean});
  refs.buffers.push_back({prefix + ".running_var", &running_var});
}

ConvBn::ConvBn(int dims, int64_t in_channels, int64_t out_channels, int kernel, int stride, int pad,
               bool relu_, bool transposed)
    : conv(dims, in_channels, out_channels, kernel, stride, pad, transposed),
      bn(out_channels),
      relu(relu_) {}

Var ConvBn::operator()(const Var& x, const ForwardMode& mode) {
  Var y = bn(conv(x), mode);
  return relu ? ops::relu(y) : y;
}

Var ConvBn::operator()(const Var& x, const std::vector<int64_t>& out_spatial, const ForwardMode& mode) {
  Var y = bn(conv(x, out_spatial), mode);
  return relu ? ops::relu(y) : y;
}

void ConvBn::collect(const std::string& prefix, StateRefs& refs) {
  conv.collect(prefix + ".conv", refs);
  bn.collect(prefix + ".bn", refs);
}

Shape ConvBn::profile(Profiler& p, const std::string& name, const Shape& in,
                      const std::vector<int64_t>* out_spatial) const {
  Shape out = conv.profile(p, name + ".conv", in, out_spatial);
  LayerCost c;
  c.module = p.module;
  c.name = name + ".bn";
  c.kind = "norm";
  c.output = out;
  c.params = bn.param_count();
  p.layers.push_back(c);
  return out;
}

}  // namespace stereodistill::nn
