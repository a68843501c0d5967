#pragma once

#include <cstddef>
#include <random>
#include <string>
#include <vector>

#include "gsmt/autodiff.hpp"
#include "gsmt/tensor.hpp"
#include "gsmt/weights.hpp"

// Diagonal state-space layer. Each channel runs its own scalar-input SSM
//   g_t = exp(lambda * delta) g_{t-1} + E x_t,   o_t = c_row . g_t
// with E_i = (exp(lambda_i delta) - 1) / lambda_i, so the impulse response is
//   kernel[c][j] = sum_i c[c][i] * E_i * exp(lambda_i * j * delta).
// lambda and delta are shared by all channels; lambda = -exp(log_neg_lambda)
// keeps every mode strictly decaying.
namespace gsmt {

template <class T>
struct DssWeights {
  T log_neg_lambda;  // [d_state]
  T c;               // [channels x d_state]
  T log_delta;       // [1]

  template <class F>
  void visit(const std::string& prefix, F&& f) {
    detail::visit_field(prefix + "log_neg_lambda", log_neg_lambda, f);
    detail::visit_field(prefix + "c", c, f);
    detail::visit_field(prefix + "log_delta", log_delta, f);
  }

  template <class U, class F>
  DssWeights<U> map(const std::string& prefix, F&& f) const {
    return {detail::map_field<U>(prefix + "log_neg_lambda", log_neg_lambda, f),
            detail::map_field<U>(prefix + "c", c, f), detail::map_field<U>(prefix + "log_delta", log_delta, f)};
  }
};

using DssParams = DssWeights<Tensor>;

struct DssKernel {
  Tensor values;  // [channels x length]
  std::size_t length = 0;
};

// lambda_i = -exp(u_i), u_i ~ U[log 0.5, log 8]; delta = 0.1 / max|lambda|;
// c ~ N(0, 1/d_state).
DssParams make_dss_params(std::size_t channels, std::size_t d_state, std::mt19937_64& rng);

// Throws ConfigError on inconsistent shapes.
void validate(const DssParams& params);

std::size_t dss_channels(const DssParams& params);
std::size_t dss_state_size(const DssParams& params);
std::vector<double> dss_lambda(const DssParams& params);
double dss_delta(const DssParams& params);

// E = (exp(lambda delta) - 1) / lambda, with the lambda -> 0 limit (E -> delta)
// taken from a series when |lambda delta| < 1e-6.
double input_gain(double lambda, double delta);

// Closed-form kernel: (c . E) * P with P[i][j] = exp(lambda_i j delta).
DssKernel compute_kernel(const DssParams& params, std::size_t length);

// Test-scale oracle: builds dense A_bar = exp(A delta), B_bar = (A_bar - I) A^-1 1
// and forms each tap C A_bar^j B_bar by repeated multiplication.
DssKernel kernel_oracle_powers(const DssParams& params, std::size_t length);

// Step-by-step recurrence over x [L x channels], zero initial state.
Tensor ssm_recurrence(const DssParams& params, const Tensor& x);

// Per-channel FFT convolution of x with compute_kernel taps.
Tensor ssm_forward_fft(const DssParams& params, const Tensor& x);

// Differentiable kernel with analytic gradients for all three fields.
Var dss_kernel(const DssWeights<Var>& weights, std::size_t length);

// causal_conv(x, dss_kernel(weights, L)) for x [L x channels].
Var ssm_apply(const DssWeights<Var>& weights, Var x);

}  // namespace gsmt
