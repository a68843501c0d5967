#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "gsmt/buffer_stats.hpp"
#include "gsmt/tensor.hpp"

namespace gsmt {

// Split real/imaginary storage for the radix-2 transform.
struct ComplexBuffer {
  std::vector<double, TrackingAllocator<double>> re;
  std::vector<double, TrackingAllocator<double>> im;

  ComplexBuffer() = default;
  explicit ComplexBuffer(std::size_t n) : re(n, 0.0), im(n, 0.0) {}
  std::size_t size() const noexcept { return re.size(); }
};

bool is_power_of_two(std::size_t n) noexcept;
std::size_t next_power_of_two(std::size_t n) noexcept;

// In-place iterative Cooley-Tukey. Length must be a power of two.
void fft_forward(ComplexBuffer& buf);
// Inverse transform including the 1/n normalization.
void fft_inverse(ComplexBuffer& buf);

// o_t = sum_{j=0..t} kernel_j * signal_{t-j}, computed by zero-padding both
// to the next power of two >= 2L and multiplying spectra.
Tensor fft_convolve_causal(const Tensor& signal, const Tensor& kernel);
void fft_convolve_causal(std::span<const double> signal, std::span<const double> kernel,
                         std::span<double> out);

// O(L*K) reference for the same sum; kernel may be shorter than the signal.
Tensor direct_convolve_causal(const Tensor& signal, const Tensor& kernel);
void direct_convolve_causal(std::span<const double> signal, std::span<const double> kernel,
                            std::span<double> out);

}  // namespace gsmt
