#pragma once

#include <cstddef>
#include <vector>

#include "gsmt/tensor.hpp"

// Tape-free dense kernels. The differentiable ops in autodiff.hpp use these
// for their forward values; oracles and the inference paths call them
// directly.
namespace gsmt::ops {

Tensor matmul(const Tensor& a, const Tensor& b);     // [m x k] * [k x n]
Tensor matmul_nt(const Tensor& a, const Tensor& b);  // [m x k] * [n x k]^T
Tensor matmul_tn(const Tensor& a, const Tensor& b);  // [k x m]^T * [k x n]
Tensor transpose(const Tensor& a);

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double s);
Tensor relu(const Tensor& a);

// Row-wise softmax, stabilized by subtracting each row's max.
Tensor softmax_rows(const Tensor& a);

// Max over consecutive groups of `group` rows: [R x C] -> [R/group x C].
// Ties resolve to the first row of the group.
Tensor max_pool_rows(const Tensor& a, std::size_t group);

Tensor gather_rows(const Tensor& a, const std::vector<std::size_t>& indices);
Tensor concat_rows(const std::vector<const Tensor*>& parts);

double sum(const Tensor& a);

// max_i |a_i - b_i| / max(max_i |b_i|, floor): error relative to the
// reference's infinity norm, so near-zero entries do not dominate.
double max_rel_error(const Tensor& a, const Tensor& b, double floor = 1e-300);
double max_abs_error(const Tensor& a, const Tensor& b);

}  // namespace gsmt::ops
