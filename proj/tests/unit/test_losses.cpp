#include <cmath>

#include "helpers.hpp"
#include "stereodistill/errors.hpp"
#include "stereodistill/losses.hpp"

using namespace stereodistill;
using testing::randn;

namespace {

double value(const Var& v) { return v.value()[0]; }

// Double-precision gradient of a kernel against central differences.
template <class F>
double kernel_gradcheck(F f, std::vector<double> s) {
  std::vector<double> g(s.size());
  f(s.data(), g.data());
  const auto fd = oracle::finite_difference([&](const std::vector<double>& x) { return f(x.data(), nullptr); }, s);
  return oracle::relative_error(g, fd);
}

}  // namespace

TEST_CASE("smooth L1 hand values") {
  const Tensor t({4}, {0, 0, 0, 0});
  CHECK(value(smooth_l1(Var(Tensor({4}, {0.5f, -0.5f, 2, -3})), t)) ==
        doctest::Approx((0.125 + 0.125 + 1.5 + 2.5) / 4));
  CHECK(value(smooth_l1(Var(t), t)) == 0);
  // Mask keeps the last element only.
  CHECK(value(smooth_l1(Var(Tensor({4}, {9, 9, 9, 2})), t, Mask{0, 0, 0, 1})) == doctest::Approx(1.5));
  CHECK_THROWS_AS(smooth_l1(Var(t), t, Mask{0, 0, 0, 0}), DomainError);
  CHECK_THROWS_AS(smooth_l1(Var(t), Tensor({3})), ShapeError);
}

TEST_CASE("log L1 hand values") {
  const Tensor t({2}, {1, 1});
  CHECK(value(log_l1(Var(t), t)) == 0);
  CHECK(value(log_l1(Var(Tensor({2}, {1 + static_cast<float>(M_E) - 1, 1})), t)) == doctest::Approx(0.5));
  CHECK(value(log_l1(Var(Tensor({2}, {3, 1})), t)) >= 0);
}

TEST_CASE("cosine loss") {
  SUBCASE("parallel, orthogonal and opposite channels") {
    const Tensor t({1, 2, 1, 3}, {1, 0, 2, 0, 1, 0});
    const Tensor s({1, 2, 1, 3}, {3, 0, -1, 0, 5, 0});
    // locations: (1,0)vs(3,0) cos 1; (0,1)vs(0,5) cos 1; (2,0)vs(-1,0) cos -1.
    CHECK(value(cosine_loss(Var(s), t)) == doctest::Approx(2.0 / 3));
  }
  SUBCASE("scale invariance") {
    const Tensor t = randn({2, 5, 3, 4}, 1), s = randn({2, 5, 3, 4}, 2);
    Tensor s3 = s;
    for (float& v : s3.values()) v *= 3;
    CHECK(value(cosine_loss(Var(s), t)) == doctest::Approx(value(cosine_loss(Var(s3), t))).epsilon(1e-5));
  }
  SUBCASE("two zero vectors cost nothing") {
    const Tensor z({1, 3, 1, 2});
    CHECK(value(cosine_loss(Var(z), z)) == 0);
  }
  SUBCASE("rank 3 treats each leading index as one vector") {
    const Tensor t({2, 2, 2}, {1, 2, 3, 4, 1, 0, 0, 0});
    const Tensor s({2, 2, 2}, {2, 4, 6, 8, -1, 0, 0, 0});
    CHECK(cosine_layout(t.shape()).axis == 4);
    CHECK(value(cosine_loss(Var(s), t)) == doctest::Approx(1.0));
  }
  CHECK(testing::gradcheck([](const Var& s) { return cosine_loss(s, randn({2, 4, 3}, 9)); }, randn({2, 4, 3}, 10)) <
        2e-2);
}

TEST_CASE("KL divergence") {
  std::mt19937_64 rng(4);
  Tensor p = oracle::random_distribution(2, 6, 10, rng);
  CHECK(value(kld_loss(Var(p), p, 1)) == doctest::Approx(0).epsilon(1e-7));
  Tensor q = oracle::random_distribution(2, 6, 10, rng);
  CHECK(value(kld_loss(Var(q), p, 1)) > 0);
  Tensor bad = q;
  bad[0] += 0.5f;
  CHECK_THROWS_AS(kld_loss(Var(bad), p, 1), DomainError);

  // Two-bin hand case: KL([0.5,0.5] || [0.25,0.75]).
  const Tensor t({1, 2, 1}, {0.5f, 0.5f}), s({1, 2, 1}, {0.25f, 0.75f});
  CHECK(value(kld_loss(Var(s), t, 1)) == doctest::Approx(0.5 * std::log(2.0) + 0.5 * std::log(0.5 / 0.75)));
}

TEST_CASE("double-precision kernel gradients") {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(-2, 2);
  std::vector<double> s(12), t(12);
  for (auto& v : s) v = u(rng);
  for (auto& v : t) v = u(rng);
  // Keep smooth-L1 and log-L1 away from their kinks.
  for (size_t i = 0; i < s.size(); ++i)
    if (std::abs(std::abs(s[i] - t[i]) - 1) < 0.05 || std::abs(s[i] - t[i]) < 0.05) s[i] += 0.2;
  CHECK(kernel_gradcheck([&](const double* x, double* g) { return kernels::smooth_l1(x, t.data(), nullptr, 12, 1.0, g); },
                         s) < 1e-6);
  CHECK(kernel_gradcheck([&](const double* x, double* g) { return kernels::log_l1(x, t.data(), nullptr, 12, 1.0, g); },
                         s) < 1e-6);
  CHECK(kernel_gradcheck(
            [&](const double* x, double* g) { return kernels::cosine(x, t.data(), nullptr, 2, 3, 2, 1e-12, g); }, s) <
        1e-6);
}

TEST_CASE("combine applies the objective weights") {
  const ObjectiveWeights w = default_objective_weights(2);
  const auto b = combine({{Term::fe, 1.0}, {Term::cv, 2.0}, {Term::ca, 3.0}, {Term::spw, 4.0}, {Term::stpw, 5.0}}, w);
  CHECK(b.total == doctest::Approx(0.1 + 0.2 + 0.3 + 1.6 + 2.0));
  CHECK(b.get(Term::ca) == 3.0);
  CHECK(combine({{Term::spw, 2.0}}, w).total == doctest::Approx(0.8));
  CHECK_THROWS_AS(combine({{Term::spw, std::nan("")}}, w), DomainError);
}

TEST_CASE("apply_loss dispatch") {
  const Tensor t = randn({1, 3, 2, 2}, 1), s = randn({1, 3, 2, 2}, 2);
  CHECK(value(apply_loss(LossKind::smooth_l1, Var(s), t)) == value(smooth_l1(Var(s), t)));
  CHECK(value(apply_loss(LossKind::cosine, Var(s), t)) == value(cosine_loss(Var(s), t)));
}
