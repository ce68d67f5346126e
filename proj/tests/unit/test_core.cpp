#include "helpers.hpp"
#include "stereodistill/errors.hpp"

using namespace stereodistill;
using testing::gradcheck;
using testing::randn;

namespace {

// Direct convolution, zero padding, [N,Cin,H,W] x [Cout,Cin,k,k].
Tensor naive_conv2d(const Tensor& x, const Tensor& w, int stride, int pad) {
  const int64_t N = x.dim(0), Ci = x.dim(1), H = x.dim(2), W = x.dim(3), Co = w.dim(0), k = w.dim(2);
  const int64_t Ho = (H + 2 * pad - k) / stride + 1, Wo = (W + 2 * pad - k) / stride + 1;
  Tensor y({N, Co, Ho, Wo});
  for (int64_t n = 0; n < N; ++n)
    for (int64_t o = 0; o < Co; ++o)
      for (int64_t i = 0; i < Ho; ++i)
        for (int64_t j = 0; j < Wo; ++j) {
          double acc = 0;
          for (int64_t c = 0; c < Ci; ++c)
            for (int64_t a = 0; a < k; ++a)
              for (int64_t b = 0; b < k; ++b) {
                const int64_t yy = i * stride - pad + a, xx = j * stride - pad + b;
                if (yy < 0 || yy >= H || xx < 0 || xx >= W) continue;
                acc += static_cast<double>(x.at({n, c, yy, xx})) * w.at({o, c, a, b});
              }
          y.at({n, o, i, j}) = static_cast<float>(acc);
        }
  return y;
}

}  // namespace

TEST_CASE("tensor basics") {
  Tensor t({2, 3}, {1, 2, 3, 4, 5, 6});
  CHECK(t.numel() == 6);
  CHECK(t.at({1, 2}) == 6);
  CHECK(to_string(t.shape()) == "[2x3]");
  CHECK_THROWS_AS(t.reshape({4, 2}), ShapeError);
  t.reshape({3, 2});
  CHECK(t.at({2, 0}) == 5);
  CHECK(max_abs_diff(t, t) == 0);
  t[0] = std::nanf("");
  CHECK_FALSE(all_finite(t));
}

TEST_CASE("autograd accumulates through shared inputs and frees interior grads") {
  Var x(Tensor({3}, {1, 2, 3}), true);
  Var y = ops::add(x, ops::scale(x, 2.0f));  // 3x
  Var z = ops::relu(y);
  backward(testing::dot(z, Tensor({3}, {1, 1, 1})));
  for (int i = 0; i < 3; ++i) CHECK(x.grad()[i] == doctest::Approx(3));
  CHECK_FALSE(y.has_grad());
  CHECK_THROWS_AS(backward(y), ShapeError);
}

TEST_CASE("no-grad guard records nothing") {
  Var x(Tensor({2}, {1, 2}), true);
  {
    NoGradGuard g;
    CHECK_FALSE(grad_enabled());
    CHECK_FALSE(ops::relu(x).requires_grad());
  }
  CHECK(grad_enabled());
  CHECK(ops::relu(x).requires_grad());
}

TEST_CASE("conv2d matches the direct loop") {
  for (int stride : {1, 2}) {
    const Tensor x = randn({2, 3, 7, 9}, 1), w = randn({4, 3, 3, 3}, 2);
    const Tensor got = ops::conv(Var(x), Var(w), ops::ConvGeometry::conv2d(3, stride, 1)).value();
    const Tensor want = naive_conv2d(x, w, stride, 1);
    REQUIRE(got.shape() == want.shape());
    CHECK(max_abs_diff(got, want) < 1e-5);
  }
}

TEST_CASE("transposed convolution is the adjoint of convolution") {
  // <conv(x), y> == <x, conv_t(y)> for the same weight tensor.
  SUBCASE("2-D") {
    const Tensor x = randn({1, 3, 9, 7}, 3), w = randn({5, 3, 3, 3}, 4);
    const auto g = ops::ConvGeometry::conv2d(3, 2, 1);
    const Tensor cx = ops::conv(Var(x), Var(w), g).value();
    const Tensor y = randn(cx.shape(), 5);
    const Tensor ty = ops::conv_transpose(Var(y), Var(w), g, {9, 7}).value();
    CHECK(testing::dot_value(cx, y) == doctest::Approx(testing::dot_value(x, ty)).epsilon(1e-5));
  }
  SUBCASE("3-D") {
    const Tensor x = randn({2, 2, 6, 5, 7}, 6), w = randn({3, 2, 3, 3, 3}, 7);
    const auto g = ops::ConvGeometry::conv3d(3, 2, 1);
    const Tensor cx = ops::conv(Var(x), Var(w), g).value();
    const Tensor y = randn(cx.shape(), 8);
    const Tensor ty = ops::conv_transpose(Var(y), Var(w), g, {6, 5, 7}).value();
    CHECK(testing::dot_value(cx, y) == doctest::Approx(testing::dot_value(x, ty)).epsilon(1e-5));
  }
}

TEST_CASE("operator gradients match finite differences") {
  const double tol = 2e-2;
  const Tensor w2 = randn({4, 3, 3, 3}, 11), w3 = randn({3, 2, 3, 3, 3}, 12);
  CHECK(gradcheck([&](const Var& x) { return ops::conv(x, Var(w2), ops::ConvGeometry::conv2d(3, 2, 1)); },
                  randn({2, 3, 6, 6}, 13)) < tol);
  CHECK(gradcheck([&](const Var& w) { return ops::conv(Var(randn({2, 3, 5, 5}, 14)), w, ops::ConvGeometry::conv2d(3, 1, 1)); },
                  w2) < tol);
  CHECK(gradcheck([&](const Var& x) { return ops::conv(x, Var(w3), ops::ConvGeometry::conv3d(3, 1, 1)); },
                  randn({1, 2, 4, 4, 4}, 15)) < tol);
  CHECK(gradcheck([&](const Var& x) {
          return ops::conv_transpose(x, Var(w3), ops::ConvGeometry::conv3d(3, 2, 1), {5, 4, 3});
        }, randn({1, 3, 3, 2, 2}, 16)) < tol);
  CHECK(gradcheck([](const Var& x) { return ops::sigmoid(x); }, randn({10}, 17)) < tol);
  CHECK(gradcheck([](const Var& x) { return ops::softmax(x, 2, true); }, randn({2, 3, 5, 2}, 18)) < tol);
  CHECK(gradcheck([](const Var& x) { return ops::softmax(x, 1, false); }, randn({2, 4, 3}, 19)) < tol);
  CHECK(gradcheck([](const Var& x) { return ops::resize_linear(x, 2, {7, 9, 4}); }, randn({1, 2, 3, 4, 5}, 20)) < tol);
  CHECK(gradcheck([](const Var& x) { return ops::concat_channels({x, ops::scale(x, -2)}); }, randn({2, 3, 2}, 21)) < tol);
  CHECK(gradcheck([](const Var& x) {
          Tensor mean({3}), var({3}, 1.0f);
          return ops::batch_norm(x, Var(Tensor({3}, {1.5f, 0.5f, 2})), Var(Tensor({3}, {0, 1, -1})), mean, var, true,
                                 false);
        }, randn({4, 3, 2, 2}, 22)) < tol);
  CHECK(gradcheck([](const Var& x) {
          return ops::weighted_sum({testing::dot(x, Tensor({3}, {1, 2, 3})), testing::dot(x, Tensor({3}, {-1, 0, 4}))},
                                   {0.7, 1.0});
        }, randn({3}, 23)) < tol);
}

TEST_CASE("linear resize uses half-pixel centres") {
  const Tensor x({1, 2}, {0, 1});
  const Tensor y = ops::resize_linear(x, 1, {4});
  CHECK(y[0] == doctest::Approx(0));
  CHECK(y[1] == doctest::Approx(0.25));
  CHECK(y[2] == doctest::Approx(0.75));
  CHECK(y[3] == doctest::Approx(1));
  const Tensor c({1, 3, 3}, 2.5f);
  const Tensor up = ops::resize_linear(c, 1, {12, 12});
  for (float v : up.values()) CHECK(v == doctest::Approx(2.5));
  CHECK(ops::resize_linear(c, 1, {3, 3}) == c);
}

TEST_CASE("batch norm running statistics") {
  Tensor mean({2}), var({2}, 1.0f);
  const Tensor x({2, 2, 1, 1}, {1, 10, 3, 30});  // channel 0: {1,3}, channel 1: {10,30}
  Var gamma(Tensor({2}, 1.0f)), beta(Tensor({2}, 0.0f));
  const Tensor y = ops::batch_norm(Var(x), gamma, beta, mean, var, true, true).value();
  CHECK(y.at({0, 0, 0, 0}) == doctest::Approx(-1).epsilon(1e-3));
  CHECK(mean[0] == doctest::Approx(0.2));  // momentum 0.1 towards 2
  CHECK(mean[1] == doctest::Approx(2.0));
  // Frozen statistics leave the buffers alone.
  const Tensor before = mean;
  ops::batch_norm(Var(x), gamma, beta, mean, var, false, false);
  CHECK(mean == before);
}
