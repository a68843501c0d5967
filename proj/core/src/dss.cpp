#include "gsmt/dss.hpp"

#include <algorithm>
#include <cmath>

#include "gsmt/error.hpp"
#include "gsmt/fft.hpp"
#include "gsmt/ops.hpp"

namespace gsmt {

namespace {

constexpr double kSeriesThreshold = 1e-6;

struct Gain {
  double value;    // E
  double dlambda;  // dE/dlambda
  double ddelta;   // dE/ddelta
};

Gain gain_with_derivatives(double lambda, double delta) {
  const double x = lambda * delta;
  const double ex = std::exp(x);
  if (std::abs(x) < kSeriesThreshold) {
    return {delta * (1.0 + x / 2.0 + x * x / 6.0), delta * delta * (0.5 + x / 3.0), ex};
  }
  const double em1 = std::expm1(x);
  return {em1 / lambda, (delta * lambda * ex - em1) / (lambda * lambda), ex};
}

}  // namespace

double input_gain(double lambda, double delta) { return gain_with_derivatives(lambda, delta).value; }

DssParams make_dss_params(std::size_t channels, std::size_t d_state, std::mt19937_64& rng) {
  if (channels == 0 || d_state == 0) throw ConfigError("DSS needs at least one channel and one state");
  DssParams p;
  p.log_neg_lambda = Tensor({d_state});
  std::uniform_real_distribution<double> u(std::log(0.5), std::log(8.0));
  double max_abs = 0.0;
  for (std::size_t i = 0; i < d_state; ++i) {
    p.log_neg_lambda[i] = u(rng);
    max_abs = std::max(max_abs, std::exp(p.log_neg_lambda[i]));
  }
  p.log_delta = Tensor::scalar(std::log(0.1 / max_abs));
  p.c = Tensor({channels, d_state});
  std::normal_distribution<double> n(0.0, 1.0 / std::sqrt(static_cast<double>(d_state)));
  for (double& v : p.c.data()) v = n(rng);
  return p;
}

void validate(const DssParams& params) {
  if (params.log_neg_lambda.rank() != 1) {
    throw ConfigError("DSS log_neg_lambda must be rank 1, got " + shape_string(params.log_neg_lambda.shape()));
  }
  if (params.c.rank() != 2 || params.c.cols() != params.log_neg_lambda.size()) {
    throw ConfigError("DSS c must be [channels x " + std::to_string(params.log_neg_lambda.size()) + "], got " +
                      shape_string(params.c.shape()));
  }
  if (params.log_delta.size() != 1) throw ConfigError("DSS log_delta must hold one value");
}

std::size_t dss_channels(const DssParams& params) { return params.c.rows(); }
std::size_t dss_state_size(const DssParams& params) { return params.log_neg_lambda.size(); }

std::vector<double> dss_lambda(const DssParams& params) {
  std::vector<double> out(params.log_neg_lambda.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = -std::exp(params.log_neg_lambda[i]);
  return out;
}

double dss_delta(const DssParams& params) { return std::exp(params.log_delta[0]); }

DssKernel compute_kernel(const DssParams& params, std::size_t length) {
  validate(params);
  if (length == 0) throw ContractError("compute_kernel: length must be >= 1");
  const std::vector<double> lambda = dss_lambda(params);
  const double delta = dss_delta(params);
  const std::size_t channels = dss_channels(params), ds = lambda.size();

  Tensor weighted({channels, ds});  // c (.) E
  for (std::size_t i = 0; i < ds; ++i) {
    const double e = input_gain(lambda[i], delta);
    for (std::size_t c = 0; c < channels; ++c) weighted(c, i) = params.c(c, i) * e;
  }
  Tensor powers({ds, length});  // P
  for (std::size_t i = 0; i < ds; ++i) {
    for (std::size_t j = 0; j < length; ++j) powers(i, j) = std::exp(lambda[i] * static_cast<double>(j) * delta);
  }
  return {ops::matmul(weighted, powers), length};
}

DssKernel kernel_oracle_powers(const DssParams& params, std::size_t length) {
  validate(params);
  const std::vector<double> lambda = dss_lambda(params);
  const double delta = dss_delta(params);
  const std::size_t channels = dss_channels(params), ds = lambda.size();

  Tensor a_bar({ds, ds}), a_inv({ds, ds});
  for (std::size_t i = 0; i < ds; ++i) {
    a_bar(i, i) = std::exp(lambda[i] * delta);
    a_inv(i, i) = 1.0 / lambda[i];
  }
  const Tensor ones({ds, 1}, 1.0);
  Tensor b_bar = ops::matmul(ops::matmul(ops::sub(a_bar, Tensor::identity(ds)), a_inv), ones);

  DssKernel kernel{Tensor({channels, length}), length};
  Tensor state = b_bar;  // A_bar^j B_bar
  for (std::size_t j = 0; j < length; ++j) {
    const Tensor tap = ops::matmul(params.c, state);
    for (std::size_t c = 0; c < channels; ++c) kernel.values(c, j) = tap(c, 0);
    state = ops::matmul(a_bar, state);
  }
  return kernel;
}

Tensor ssm_recurrence(const DssParams& params, const Tensor& x) {
  validate(params);
  const std::size_t L = x.rows(), channels = x.cols();
  if (channels != dss_channels(params)) {
    throw DimensionError("ssm_recurrence: input has " + std::to_string(channels) + " channels, parameters have " +
                         std::to_string(dss_channels(params)));
  }
  const std::vector<double> lambda = dss_lambda(params);
  const double delta = dss_delta(params);
  const std::size_t ds = lambda.size();
  std::vector<double> decay(ds), gain(ds);
  for (std::size_t i = 0; i < ds; ++i) {
    decay[i] = std::exp(lambda[i] * delta);
    gain[i] = input_gain(lambda[i], delta);
  }

  Tensor out({L, channels});
  std::vector<double> state(ds);
  for (std::size_t c = 0; c < channels; ++c) {
    std::fill(state.begin(), state.end(), 0.0);
    for (std::size_t t = 0; t < L; ++t) {
      double o = 0.0;
      for (std::size_t i = 0; i < ds; ++i) {
        state[i] = decay[i] * state[i] + gain[i] * x(t, c);
        o += params.c(c, i) * state[i];
      }
      out(t, c) = o;
    }
  }
  return out;
}

Tensor ssm_forward_fft(const DssParams& params, const Tensor& x) {
  const std::size_t L = x.rows(), channels = x.cols();
  if (channels != dss_channels(params)) {
    throw DimensionError("ssm_forward_fft: input has " + std::to_string(channels) + " channels, parameters have " +
                         std::to_string(dss_channels(params)));
  }
  const DssKernel kernel = compute_kernel(params, L);
  Tensor out({L, channels});
  Tensor::Storage column(L), result(L);
  for (std::size_t c = 0; c < channels; ++c) {
    for (std::size_t t = 0; t < L; ++t) column[t] = x(t, c);
    fft_convolve_causal(column, kernel.values.row(c), result);
    for (std::size_t t = 0; t < L; ++t) out(t, c) = result[t];
  }
  return out;
}

Var dss_kernel(const DssWeights<Var>& weights, std::size_t length) {
  if (length == 0) throw ContractError("dss_kernel: length must be >= 1");
  DssParams values{weights.log_neg_lambda.value(), weights.c.value(), weights.log_delta.value()};
  DssKernel kernel = compute_kernel(values, length);

  const std::size_t ilam = weights.log_neg_lambda.id(), ic = weights.c.id(), idel = weights.log_delta.id();
  return weights.c.tape().push(
      OpKind::dss_kernel, {ilam, ic, idel}, std::move(kernel.values),
      [ilam, ic, idel, length](Tape& t, std::size_t, const Tensor& g) {
        const Tensor& u = t.value(ilam);
        const Tensor& c = t.value(ic);
        const double delta = std::exp(t.value(idel)[0]);
        const std::size_t ds = u.size(), channels = c.rows();

        std::vector<double> lambda(ds);
        std::vector<Gain> gain(ds);
        for (std::size_t i = 0; i < ds; ++i) {
          lambda[i] = -std::exp(u[i]);
          gain[i] = gain_with_derivatives(lambda[i], delta);
        }
        Tensor powers({ds, length});
        for (std::size_t i = 0; i < ds; ++i) {
          for (std::size_t j = 0; j < length; ++j) powers(i, j) = std::exp(lambda[i] * static_cast<double>(j) * delta);
        }
        Tensor weighted({channels, ds});
        for (std::size_t cc = 0; cc < channels; ++cc) {
          for (std::size_t i = 0; i < ds; ++i) weighted(cc, i) = c(cc, i) * gain[i].value;
        }

        const Tensor d_weighted = ops::matmul_nt(g, powers);  // [channels x ds]
        const Tensor d_powers = ops::matmul_tn(weighted, g);  // [ds x length]

        Tensor dc({channels, ds});
        std::vector<double> d_gain(ds, 0.0), d_lambda(ds, 0.0);
        double d_delta = 0.0;
        for (std::size_t cc = 0; cc < channels; ++cc) {
          for (std::size_t i = 0; i < ds; ++i) {
            dc(cc, i) = d_weighted(cc, i) * gain[i].value;
            d_gain[i] += d_weighted(cc, i) * c(cc, i);
          }
        }
        for (std::size_t i = 0; i < ds; ++i) {
          double s = 0.0;  // sum_j dP_ij * P_ij * j
          for (std::size_t j = 0; j < length; ++j) s += d_powers(i, j) * powers(i, j) * static_cast<double>(j);
          d_lambda[i] += s * delta + d_gain[i] * gain[i].dlambda;
          d_delta += s * lambda[i] + d_gain[i] * gain[i].ddelta;
        }

        Tensor du({ds});
        for (std::size_t i = 0; i < ds; ++i) du[i] = d_lambda[i] * lambda[i];
        t.accumulate(ilam, du);
        t.accumulate(ic, dc);
        t.accumulate(idel, Tensor::scalar(d_delta * delta));
      });
}

Var ssm_apply(const DssWeights<Var>& weights, Var x) { return causal_conv(x, dss_kernel(weights, x.value().rows())); }

}  // namespace gsmt
