#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "gsmt/gradcheck.hpp"
#include "gsmt/model.hpp"

namespace gsmt {

struct SuiteResult {
  std::string name;
  double max_error = 0.0;
  double tolerance = 0.0;
  bool passed = false;
  std::string note;
};

struct VerifyOptions {
  // Fault injection: the closed-form side of the kernel suite runs with a
  // step size scaled by (1 + 1e-6).
  bool perturb_kernel = false;
  std::size_t seeds = 10;
};

std::vector<SuiteResult> run_verify(const VerifyOptions& options);

// Building blocks shared with the test suites.

// max rel. error of compute_kernel against kernel_oracle_powers.
double kernel_equivalence_error(std::size_t d_state, std::size_t length, std::uint64_t seed,
                                double delta_scale = 1.0);

// max rel. error of ssm_forward_fft against ssm_recurrence on random input.
double ssm_path_error(std::size_t channels, std::size_t d_state, std::size_t length, std::uint64_t seed);

// T=4, N=4, I=2, k=1, j=2, d=8, N_L=2 with small gate/state widths.
GsmtConfig minimal_config();
Sample random_sample(const GsmtConfig& config, std::size_t frames, std::size_t patches, std::size_t words,
                     std::size_t answers, std::uint64_t seed);

// Finite differences of the total loss over every parameter, with the
// selector's discrete draws frozen from one noisy forward pass.
GradCheckResult end_to_end_gradient_check(const GsmtConfig& config, const Sample& sample, std::uint64_t model_seed,
                                          std::uint64_t noise_seed, double h = 1e-5);

// Pass-through mapping of a flat parameter list onto the model's weight
// layout (visit order).
ModelWeights<Var> bind_weights(const ModelParams& layout, const std::vector<Var>& leaves);

}  // namespace gsmt
