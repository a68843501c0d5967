#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "gsmt/autodiff.hpp"
#include "gsmt/error.hpp"
#include "gsmt/fft.hpp"
#include "gsmt/gradcheck.hpp"
#include "gsmt/ops.hpp"
#include "gsmt/tensor.hpp"

using namespace gsmt;

namespace {

Tensor randn(Shape shape, std::mt19937_64& rng, double scale = 1.0) {
  Tensor t(std::move(shape));
  std::normal_distribution<double> n(0.0, scale);
  for (auto& v : t.data()) v = n(rng);
  return t;
}

// Triple loop, no blocking.
Tensor naive_matmul(const Tensor& a, const Tensor& b) {
  Tensor out({a.rows(), b.cols()});
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < b.cols(); ++j) {
      double acc = 0;
      for (std::size_t p = 0; p < a.cols(); ++p) acc += a(i, p) * b(p, j);
      out(i, j) = acc;
    }
  return out;
}

}  // namespace

TEST(Tensor, ShapeChecks) {
  EXPECT_THROW(Tensor({2, 3}, {1.0, 2.0}), DimensionError);
  Tensor m = Tensor::matrix({{1, 2, 3}, {4, 5, 6}});
  EXPECT_EQ(m.rows(), 2u);
  EXPECT_EQ(m.cols(), 3u);
  EXPECT_DOUBLE_EQ(m(1, 2), 6.0);
  EXPECT_THROW(m.reshaped({4}), DimensionError);
  EXPECT_EQ(m.reshaped({3, 2})(2, 1), 6.0);
  Tensor r3({2, 2, 2});
  EXPECT_THROW(r3.rows(), DimensionError);
}

TEST(Tensor, AllFinite) {
  Tensor t({3}, {1.0, 2.0, 3.0});
  EXPECT_TRUE(t.all_finite());
  t[1] = std::nan("");
  EXPECT_FALSE(t.all_finite());
}

TEST(Ops, MatmulMatchesTripleLoopOnOddShapes) {
  std::mt19937_64 rng(3);
  for (auto [m, k, n] : {std::tuple{1, 1, 1}, {5, 7, 3}, {9, 4, 13}, {16, 16, 16}, {3, 17, 6}, {10, 33, 27}}) {
    Tensor a = randn({std::size_t(m), std::size_t(k)}, rng);
    Tensor b = randn({std::size_t(k), std::size_t(n)}, rng);
    EXPECT_EQ(ops::matmul(a, b), naive_matmul(a, b));  // same summation order
    EXPECT_EQ(ops::matmul_nt(a, ops::transpose(b)), naive_matmul(a, b));
    EXPECT_EQ(ops::matmul_tn(ops::transpose(a), b), naive_matmul(a, b));
  }
  EXPECT_THROW(ops::matmul(Tensor({2, 3}), Tensor({2, 3})), DimensionError);
}

TEST(Ops, SoftmaxRowsSumToOneAndSurviveLargeInputs) {
  Tensor a = Tensor::matrix({{1000, 1001, 999}, {-5, 0, 5}});
  Tensor s = ops::softmax_rows(a);
  for (std::size_t r = 0; r < 2; ++r) {
    double t = 0;
    for (double v : s.row(r)) t += v;
    EXPECT_NEAR(t, 1.0, 1e-15);
  }
  EXPECT_NEAR(s(0, 1), std::exp(1.0) / (1 + std::exp(1.0) + std::exp(-1.0)), 1e-15);
}

TEST(Ops, MaxPoolRowsAndTies) {
  Tensor a = Tensor::matrix({{1, 5}, {3, 5}, {2, 0}, {2, 7}});
  Tensor p = ops::max_pool_rows(a, 2);
  EXPECT_EQ(p, Tensor::matrix({{3, 5}, {2, 7}}));
  EXPECT_THROW(ops::max_pool_rows(a, 3), DimensionError);
}

TEST(Ops, RelativeErrorIsNormwise) {
  Tensor ref({3}, {1.0, 1e-20, -2.0});
  Tensor got({3}, {1.0, 2e-20, -2.0});
  EXPECT_LT(ops::max_rel_error(got, ref), 1e-19);
}

TEST(Fft, RoundTrip) {
  std::mt19937_64 rng(11);
  std::normal_distribution<double> n;
  ComplexBuffer b(64);
  for (std::size_t i = 0; i < 64; ++i) b.re[i] = n(rng), b.im[i] = n(rng);
  ComplexBuffer orig = b;
  fft_forward(b);
  fft_inverse(b);
  for (std::size_t i = 0; i < 64; ++i) {
    EXPECT_NEAR(b.re[i], orig.re[i], 1e-13);
    EXPECT_NEAR(b.im[i], orig.im[i], 1e-13);
  }
}

TEST(Fft, MatchesNaiveDft) {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> n;
  const std::size_t len = 32;
  ComplexBuffer b(len);
  for (std::size_t i = 0; i < len; ++i) b.re[i] = n(rng);
  ComplexBuffer x = b;
  fft_forward(b);
  for (std::size_t k = 0; k < len; ++k) {
    double re = 0, im = 0;
    for (std::size_t t = 0; t < len; ++t) {
      const double ang = -2.0 * M_PI * double(k * t) / double(len);
      re += x.re[t] * std::cos(ang);
      im += x.re[t] * std::sin(ang);
    }
    EXPECT_NEAR(b.re[k], re, 1e-11);
    EXPECT_NEAR(b.im[k], im, 1e-11);
  }
}

TEST(Fft, RejectsNonPowerOfTwo) {
  ComplexBuffer b(12);
  EXPECT_THROW(fft_forward(b), DimensionError);
  EXPECT_TRUE(is_power_of_two(1));
  EXPECT_FALSE(is_power_of_two(0));
  EXPECT_EQ(next_power_of_two(17), 32u);
}

TEST(Fft, CausalConvolutionMatchesDirect) {
  std::mt19937_64 rng(2);
  for (std::size_t len : {1u, 3u, 100u, 1024u}) {
    Tensor x = randn({len}, rng), kernel = randn({len}, rng);
    EXPECT_LT(ops::max_rel_error(fft_convolve_causal(x, kernel), direct_convolve_causal(x, kernel)), 1e-11)
        << "L=" << len;
  }
}

TEST(Fft, DirectConvolutionByHand) {
  Tensor x({4}, {1, 2, 3, 4});
  Tensor kernel({2}, {1, -1});
  EXPECT_EQ(direct_convolve_causal(x, kernel), Tensor({4}, {1, 1, 1, 1}));
}

TEST(BufferStats, ScopeSeesTransientPeak) {
  BufferScope scope;
  {
    Tensor a({1000});
    Tensor b({500});
  }
  Tensor c({10});
  EXPECT_EQ(scope.peak(), 1500u);
  EXPECT_GE(scope.allocations(), 3u);
}

class OpGradient : public ::testing::Test {
 protected:
  std::mt19937_64 rng{17};

  void check(const LossBuilder& build, std::vector<Tensor> params, double tol = 1e-6) {
    const GradCheckResult r = tape_grad_check(build, params);
    EXPECT_LT(r.max_rel_error, tol) << "worst " << r.worst_index << " analytic " << r.analytic << " numeric "
                                    << r.numeric;
  }
};

// Each loss is sum(op(x) * w) with a random w, so every output coordinate
// contributes with its own weight.
TEST_F(OpGradient, Elementwise) {
  Tensor w = randn({3, 4}, rng);
  auto weighted = [w](Tape& t, Var v) { return sum(mul(v, t.constant(w))); };
  check([&](Tape& t, const auto& p) { return weighted(t, add(p[0], p[1])); }, {randn({3, 4}, rng), randn({3, 4}, rng)});
  check([&](Tape& t, const auto& p) { return weighted(t, sub(p[0], p[1])); }, {randn({3, 4}, rng), randn({3, 4}, rng)});
  check([&](Tape& t, const auto& p) { return weighted(t, mul(p[0], p[1])); }, {randn({3, 4}, rng), randn({3, 4}, rng)});
  check([&](Tape& t, const auto& p) { return weighted(t, scale(p[0], -2.5)); }, {randn({3, 4}, rng)});
  check([&](Tape& t, const auto& p) { return weighted(t, exp(p[0])); }, {randn({3, 4}, rng)});
  Tensor pos = randn({3, 4}, rng);
  for (auto& v : pos.data()) v = 0.5 + std::abs(v);
  check([&](Tape& t, const auto& p) { return weighted(t, log_clamped(p[0])); }, {pos});
  Tensor away = randn({3, 4}, rng);
  for (auto& v : away.data()) v += v > 0 ? 0.1 : -0.1;
  check([&](Tape& t, const auto& p) { return weighted(t, relu(p[0])); }, {away});
}

TEST_F(OpGradient, Matrix) {
  Tensor w = randn({3, 5}, rng);
  auto weighted = [w](Tape& t, Var v) { return sum(mul(v, t.constant(w))); };
  check([&](Tape& t, const auto& p) { return weighted(t, matmul(p[0], p[1])); }, {randn({3, 4}, rng), randn({4, 5}, rng)});
  check([&](Tape& t, const auto& p) { return weighted(t, matmul_nt(p[0], p[1])); },
        {randn({3, 4}, rng), randn({5, 4}, rng)});
  check([&](Tape& t, const auto& p) { return weighted(t, transpose(p[0])); }, {randn({5, 3}, rng)});
  check([&](Tape& t, const auto& p) { return weighted(t, softmax_rows(p[0])); }, {randn({3, 5}, rng)});
  check([&](Tape& t, const auto& p) { return weighted(t, normalize_rows(p[0])); }, {randn({3, 5}, rng)});
}

TEST_F(OpGradient, Structural) {
  Tensor w2 = randn({2, 3}, rng);
  auto weighted = [](Tape& t, Var v, const Tensor& w) { return sum(mul(v, t.constant(w))); };
  check([&](Tape& t, const auto& p) { return weighted(t, max_pool_rows(p[0], 3), w2); }, {randn({6, 3}, rng)});
  check([&](Tape& t, const auto& p) { return weighted(t, maximum(p[0], p[1]), w2); },
        {randn({2, 3}, rng), randn({2, 3}, rng)});
  Tensor w3 = randn({3, 3}, rng);
  check([&](Tape& t, const auto& p) { return weighted(t, gather_rows(p[0], {2, 0, 2}), w3); }, {randn({4, 3}, rng)});
  Tensor w5 = randn({5, 3}, rng);
  check([&](Tape& t, const auto& p) { return weighted(t, concat_rows({p[0], p[1]}), w5); },
        {randn({2, 3}, rng), randn({3, 3}, rng)});
  check([&](Tape&, const auto& p) { return mean(mul(p[0], p[0])); }, {randn({2, 3}, rng)});
  check([&](Tape&, const auto& p) { return cross_entropy(p[0], 2); }, {randn({1, 4}, rng)});
}

TEST_F(OpGradient, CausalConv) {
  Tensor w = randn({6, 2}, rng);
  check([&](Tape& t, const auto& p) { return sum(mul(causal_conv(p[0], p[1]), t.constant(w))); },
        {randn({6, 2}, rng), randn({2, 6}, rng)});
  check([&](Tape& t, const auto& p) { return sum(mul(causal_conv(p[0], p[1]), t.constant(w))); },
        {randn({6, 2}, rng), randn({2, 3}, rng)});
}

TEST(Autodiff, CausalConvInferencePathMatchesRecording) {
  std::mt19937_64 rng(4);
  Tensor x = randn({64, 3}, rng), kernel = randn({3, 64}, rng);
  Tape rec, inf(Tape::Mode::inference);
  const Tensor a = causal_conv(rec.parameter(x), rec.parameter(kernel)).value();
  const Tensor b = causal_conv(inf.constant(x), inf.constant(kernel)).value();
  EXPECT_LT(ops::max_rel_error(b, a), 1e-12);
}

TEST(Autodiff, StraightThroughValueIsHardPick) {
  Tape t;
  Tensor soft_v = Tensor::matrix({{0.1, 0.7, 0.2}});
  Var rows = t.parameter(Tensor::matrix({{1, 2}, {3, 4}, {5, 6}}));
  Var soft = t.parameter(soft_v);
  Var out = select_straight_through({1}, soft, soft_v, rows);
  EXPECT_EQ(out.value(), Tensor::matrix({{3, 4}}));
  t.backward(sum(out));
  // d/d soft_j = sum(rows_j)
  EXPECT_DOUBLE_EQ(soft.grad()(0, 0), 3.0);
  EXPECT_DOUBLE_EQ(soft.grad()(0, 2), 11.0);
}

TEST(Autodiff, BackwardNeedsScalar) {
  Tape t;
  Var a = t.parameter(Tensor({2}, {1.0, 2.0}));
  EXPECT_THROW(t.backward(a), ContractError);
}

TEST(Autodiff, UntouchedParameterHasZeroGradient) {
  Tape t;
  Var a = t.parameter(Tensor({2}, {1.0, 2.0}));
  Var b = t.parameter(Tensor({3}, {1.0, 2.0, 3.0}));
  t.backward(sum(a));
  EXPECT_EQ(b.grad(), Tensor({3}));
}

TEST(Autodiff, FirstNonFiniteNode) {
  Tape t;
  Var a = t.parameter(Tensor({2}, {1.0, 1000.0}));
  Var e = exp(a);
  (void)sum(e);
  auto nf = t.first_non_finite();
  ASSERT_TRUE(nf.has_value());
  EXPECT_EQ(nf->id, e.id());
  EXPECT_EQ(nf->kind, OpKind::exp);
}

TEST(GradCheck, DetectsWrongGradient) {
  const double x[] = {1.0, 2.0};
  const double wrong[] = {2.0, 5.0};  // true gradient of x0^2 + x1^2 is (2, 4)
  auto f = [](std::span<const double> v) { return v[0] * v[0] + v[1] * v[1]; };
  GradCheckResult r = finite_diff_check(f, x, wrong, 1e-5);
  EXPECT_EQ(r.worst_index, 1u);
  EXPECT_NEAR(r.max_rel_error, 0.25, 1e-8);  // |5 - 4| / max|fd|
  EXPECT_NEAR(r.max_coord_error, 0.2, 1e-8);
}
