#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include "gsmt/autodiff.hpp"
#include "gsmt/tensor.hpp"

namespace gsmt {

struct GradCheckResult {
  // max_i |a_i - fd_i| / max_i |fd_i|: the error relative to the largest
  // gradient entry, so entries near the rounding floor of the difference
  // quotient do not dominate.
  double max_rel_error = 0.0;
  // max_i |a_i - fd_i| / max(|a_i|, |fd_i|, 1e-12), for diagnostics only.
  double max_coord_error = 0.0;
  std::size_t worst_index = 0;  // flat coordinate across all parameters
  double analytic = 0.0;        // values at the worst coordinate
  double numeric = 0.0;
};

using ScalarFn = std::function<double(std::span<const double>)>;

// Central differences per coordinate against a supplied analytic gradient.
GradCheckResult finite_diff_check(const ScalarFn& f, std::span<const double> x,
                                  std::span<const double> analytic, double h);

// Builds a loss on a fresh recording tape from parameter leaves.
using LossBuilder = std::function<Var(Tape&, const std::vector<Var>& params)>;

// Differentiates `build` with the tape and compares every coordinate of every
// parameter against central differences of the same builder.
GradCheckResult tape_grad_check(const LossBuilder& build, const std::vector<Tensor>& params, double h = 1e-5);

}  // namespace gsmt
