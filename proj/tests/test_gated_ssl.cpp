#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "gsmt/error.hpp"
#include "gsmt/gated_ssl.hpp"
#include "gsmt/gradcheck.hpp"
#include "gsmt/ops.hpp"

using namespace gsmt;

namespace {

Tensor randn(Shape shape, std::mt19937_64& rng) {
  Tensor t(std::move(shape));
  std::normal_distribution<double> n;
  for (auto& v : t.data()) v = n(rng);
  return t;
}

// Scalar loops over every stage, with the state-space part run as an explicit
// per-mode recurrence.
Tensor gated_ssl_loops(const GatedSslParams& p, const Tensor& x) {
  const std::size_t L = x.rows(), d = x.cols(), g = p.w_u.cols(), dh = p.w_h.cols();
  const std::size_t ds = p.dss.log_neg_lambda.size();
  const double delta = std::exp(p.dss.log_delta[0]);
  Tensor u({L, g}), v({L, g}), s({L, g}), o({L, g}), out({L, dh});
  for (std::size_t t = 0; t < L; ++t)
    for (std::size_t c = 0; c < g; ++c) {
      double a = 0, b = 0;
      for (std::size_t i = 0; i < d; ++i) {
        a += x(t, i) * p.w_u(i, c);
        if (!p.w_v.empty()) b += x(t, i) * p.w_v(i, c);
      }
      u(t, c) = std::max(a, 0.0);
      v(t, c) = std::max(b, 0.0);
    }
  for (std::size_t c = 0; c < g; ++c) {
    std::vector<double> state(ds, 0.0);
    for (std::size_t t = 0; t < L; ++t) {
      double y = 0;
      for (std::size_t i = 0; i < ds; ++i) {
        const double lam = -std::exp(p.dss.log_neg_lambda[i]);
        state[i] = std::exp(lam * delta) * state[i] + (std::exp(lam * delta) - 1.0) / lam * u(t, c);
        y += p.dss.c(c, i) * state[i];
      }
      s(t, c) = y;
    }
  }
  for (std::size_t t = 0; t < L; ++t)
    for (std::size_t c = 0; c < g; ++c) {
      double a = 0;
      for (std::size_t i = 0; i < g; ++i) a += s(t, i) * p.w_o(i, c);
      o(t, c) = p.w_v.empty() ? a : a * v(t, c);
    }
  for (std::size_t t = 0; t < L; ++t)
    for (std::size_t c = 0; c < dh; ++c) {
      double a = 0;
      for (std::size_t i = 0; i < g; ++i) a += o(t, i) * p.w_h(i, c);
      out(t, c) = a;
    }
  return out;
}

}  // namespace

TEST(GatedSsl, MatchesScalarLoops) {
  std::mt19937_64 rng(31);
  for (bool gated : {true, false}) {
    GatedSslDims dims{8, 6, 7, 3, gated};
    const GatedSslParams p = make_gated_ssl_params(dims, rng);
    EXPECT_EQ(p.w_v.empty(), !gated);
    const Tensor x = randn({33, 8}, rng);
    EXPECT_LT(ops::max_rel_error(gated_ssl_forward(p, x), gated_ssl_loops(p, x)), 1e-11);
  }
}

TEST(GatedSsl, OutputShape) {
  std::mt19937_64 rng(1);
  const GatedSslParams p = make_gated_ssl_params({16, 16, 12, 4, true}, rng);
  EXPECT_EQ(gated_ssl_forward(p, randn({20, 16}, rng)).shape(), (Shape{20, 12}));
}

TEST(GatedSsl, DimensionRules) {
  EXPECT_THROW(validate(GatedSslDims{8, 8, 8, 8, true}), ConfigError);
  EXPECT_THROW(validate(GatedSslDims{8, 4, 8, 4, true}), ConfigError);
  EXPECT_THROW(validate(GatedSslDims{8, 8, 8, 0, true}), ConfigError);
  EXPECT_NO_THROW(validate(GatedSslDims{8, 8, 8, 7, true}));
  std::mt19937_64 rng(1);
  const GatedSslParams p = make_gated_ssl_params({8, 8, 8, 4, true}, rng);
  EXPECT_THROW(gated_ssl_forward(p, Tensor({5, 9})), DimensionError);
}

TEST(GatedSsl, Causal) {
  std::mt19937_64 rng(2);
  const GatedSslParams p = make_gated_ssl_params({6, 6, 6, 2, true}, rng);
  Tensor x = randn({12, 6}, rng);
  const Tensor a = gated_ssl_forward(p, x);
  for (std::size_t c = 0; c < 6; ++c) x(11, c) += 5.0;
  const Tensor b = gated_ssl_forward(p, x);
  // the inference path convolves by FFT, so earlier rows agree to rounding
  for (std::size_t t = 0; t < 11; ++t)
    for (std::size_t c = 0; c < 6; ++c) EXPECT_NEAR(a(t, c), b(t, c), 1e-12);
}

TEST(GatedSsl, Gradient) {
  std::mt19937_64 rng(5);
  const GatedSslParams p = make_gated_ssl_params({5, 4, 3, 2, true}, rng);
  const Tensor x = randn({7, 5}, rng), w = randn({7, 3}, rng);
  std::vector<Tensor> flat;
  GatedSslParams copy = p;
  for (auto& [name, t] : named_tensors(copy)) flat.push_back(*t);
  flat.push_back(x);
  auto build = [&](Tape& t, const std::vector<Var>& v) {
    GatedSslWeights<Var> gw{v[0], v[1], v[2], v[3], {v[4], v[5], v[6]}};
    return sum(mul(gated_ssl_forward(gw, v[7]), t.constant(w)));
  };
  const GradCheckResult r = tape_grad_check(build, flat);
  EXPECT_LT(r.max_rel_error, 1e-6) << r.worst_index;
}

TEST(Mechanism, ParseRoundTrip) {
  for (auto k : {MechanismKind::gated_ssl, MechanismKind::self_attention, MechanismKind::conv1d, MechanismKind::none})
    EXPECT_EQ(parse_mechanism(to_string(k)), k);
  EXPECT_THROW(parse_mechanism("lstm"), ConfigError);
}

TEST(Mechanism, AllArmsMapToHiddenWidth) {
  std::mt19937_64 rng(3);
  const Tensor x = randn({10, 8}, rng);
  for (auto k : {MechanismKind::gated_ssl, MechanismKind::self_attention, MechanismKind::conv1d, MechanismKind::none}) {
    const MechanismParams p = make_mechanism_params(k, {8, 8, 6, 4, true}, rng);
    EXPECT_EQ(global_mechanism_forward(p, x).shape(), (Shape{10, 6})) << to_string(k);
  }
}

TEST(Mechanism, AttentionMatchesLoops) {
  std::mt19937_64 rng(4);
  const Tensor x = randn({6, 5}, rng), wq = randn({5, 3}, rng), wk = randn({5, 3}, rng), wv = randn({5, 3}, rng);
  Tape t;
  const Tensor got = attend(t.constant(x), t.constant(wq), t.constant(wk), t.constant(wv)).value();
  const Tensor q = ops::matmul(x, wq), k = ops::matmul(x, wk), v = ops::matmul(x, wv);
  for (std::size_t i = 0; i < 6; ++i) {
    std::vector<double> s(6);
    double mx = -1e300, z = 0;
    for (std::size_t j = 0; j < 6; ++j) {
      for (std::size_t c = 0; c < 3; ++c) s[j] += q(i, c) * k(j, c) / std::sqrt(3.0);
      mx = std::max(mx, s[j]);
    }
    for (auto& e : s) z += (e = std::exp(e - mx));
    for (std::size_t c = 0; c < 3; ++c) {
      double o = 0;
      for (std::size_t j = 0; j < 6; ++j) o += s[j] / z * v(j, c);
      EXPECT_NEAR(got(i, c), o, 1e-13);
    }
  }
}
