#pragma once

#include <doctest.h>

#include <functional>
#include <random>

#include "../support/oracles.hpp"
#include "stereodistill/autograd.hpp"
#include "stereodistill/ops.hpp"

namespace testing {

using namespace stereodistill;

// Scalar <x, w> with a hand-written backward, so gradient checks do not rely
// on the loss functions under test.
inline Var dot(const Var& x, const Tensor& w) {
  double s = 0;
  for (int64_t i = 0; i < w.numel(); ++i) s += static_cast<double>(x.value()[i]) * w[i];
  return Var::make(Tensor({1}, {static_cast<float>(s)}), {x}, [w](Node& self) {
    Tensor& g = self.inputs[0]->grad_buffer();
    const float go = self.grad[0];
    for (int64_t i = 0; i < w.numel(); ++i) g[i] += go * w[i];
  });
}

inline double dot_value(const Tensor& x, const Tensor& w) {
  double s = 0;
  for (int64_t i = 0; i < w.numel(); ++i) s += static_cast<double>(x[i]) * w[i];
  return s;
}

// Relative error between the autograd gradient of <f(x), r> and central
// differences, on up to `probes` coordinates.
inline double gradcheck(const std::function<Var(const Var&)>& f, Tensor x, uint64_t seed = 1, double h = 1e-2,
                        int probes = 48) {
  std::mt19937_64 rng(seed);
  Var xv(x, true);
  Var y = f(xv);
  const Tensor r = oracle::random_tensor(y.shape(), rng);
  backward(dot(y, r));
  const Tensor analytic = xv.grad();
  std::vector<double> a, n;
  const int64_t step = std::max<int64_t>(1, x.numel() / probes);
  NoGradGuard guard;
  for (int64_t i = 0; i < x.numel(); i += step) {
    const float keep = x[i];
    x[i] = keep + static_cast<float>(h);
    const double up = dot_value(f(Var(x)).value(), r);
    x[i] = keep - static_cast<float>(h);
    const double down = dot_value(f(Var(x)).value(), r);
    x[i] = keep;
    a.push_back(analytic[i]);
    n.push_back((up - down) / (2 * h));
  }
  return oracle::relative_error(a, n);
}

inline Tensor randn(Shape s, uint64_t seed, float lo = -1, float hi = 1) {
  std::mt19937_64 rng(seed);
  return oracle::random_tensor(std::move(s), rng, lo, hi);
}

}  // namespace testing
