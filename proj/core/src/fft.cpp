#include "gsmt/fft.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <numbers>
#include <vector>

#include "gsmt/error.hpp"

namespace gsmt {

bool is_power_of_two(std::size_t n) noexcept { return n != 0 && (n & (n - 1)) == 0; }

std::size_t next_power_of_two(std::size_t n) noexcept {
  std::size_t p = 1;
  while (p < n) p <<= 1;
  return p;
}

namespace {

struct Twiddles {
  std::vector<double> cos, sin;
};

// Twiddles from cos/sin directly; a recurrence drifts past 1e-10 at n=4096.
// Cached per stage length, one table set per thread.
const Twiddles& twiddles(std::size_t len) {
  thread_local std::vector<Twiddles> cache(64);
  Twiddles& t = cache[static_cast<std::size_t>(std::countr_zero(len))];
  if (t.cos.empty()) {
    const double theta = 2.0 * std::numbers::pi / static_cast<double>(len);
    t.cos.resize(len / 2);
    t.sin.resize(len / 2);
    for (std::size_t k = 0; k < len / 2; ++k) {
      t.cos[k] = std::cos(theta * static_cast<double>(k));
      t.sin[k] = std::sin(theta * static_cast<double>(k));
    }
  }
  return t;
}

void transform(ComplexBuffer& buf, bool inverse) {
  const std::size_t n = buf.size();
  if (!is_power_of_two(n)) {
    throw DimensionError("fft length " + std::to_string(n) + " is not a power of two");
  }
  auto& re = buf.re;
  auto& im = buf.im;

  for (std::size_t i = 1, j = 0; i < n; ++i) {
    std::size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) {
      std::swap(re[i], re[j]);
      std::swap(im[i], im[j]);
    }
  }

  const double sign = inverse ? 1.0 : -1.0;
  for (std::size_t len = 2; len <= n; len <<= 1) {
    const std::size_t half = len / 2;
    const Twiddles& w = twiddles(len);
    for (std::size_t k = 0; k < half; ++k) {
      const double wr = w.cos[k];
      const double wi = sign * w.sin[k];
      for (std::size_t start = 0; start < n; start += len) {
        const std::size_t a = start + k, b = a + half;
        const double xr = re[b] * wr - im[b] * wi;
        const double xi = re[b] * wi + im[b] * wr;
        re[b] = re[a] - xr;
        im[b] = im[a] - xi;
        re[a] += xr;
        im[a] += xi;
      }
    }
  }

  if (inverse) {
    const double inv = 1.0 / static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i) {
      re[i] *= inv;
      im[i] *= inv;
    }
  }
}

}  // namespace

void fft_forward(ComplexBuffer& buf) { transform(buf, false); }
void fft_inverse(ComplexBuffer& buf) { transform(buf, true); }

void fft_convolve_causal(std::span<const double> signal, std::span<const double> kernel,
                         std::span<double> out) {
  const std::size_t L = signal.size();
  if (L == 0 || kernel.size() != L || out.size() != L) {
    throw DimensionError("fft_convolve_causal: signal length " + std::to_string(L) + ", kernel length " +
                         std::to_string(kernel.size()) + ", output length " + std::to_string(out.size()));
  }
  const std::size_t n = next_power_of_two(2 * L);
  ComplexBuffer a(n), b(n);
  std::copy(signal.begin(), signal.end(), a.re.begin());
  std::copy(kernel.begin(), kernel.end(), b.re.begin());
  fft_forward(a);
  fft_forward(b);
  for (std::size_t i = 0; i < n; ++i) {
    const double r = a.re[i] * b.re[i] - a.im[i] * b.im[i];
    const double im = a.re[i] * b.im[i] + a.im[i] * b.re[i];
    a.re[i] = r;
    a.im[i] = im;
  }
  fft_inverse(a);
  std::copy(a.re.begin(), a.re.begin() + static_cast<std::ptrdiff_t>(L), out.begin());
}

Tensor fft_convolve_causal(const Tensor& signal, const Tensor& kernel) {
  if (signal.size() != kernel.size()) {
    throw DimensionError("fft_convolve_causal: length mismatch " + shape_string(signal.shape()) + " vs " +
                         shape_string(kernel.shape()));
  }
  Tensor out(signal.shape());
  fft_convolve_causal(signal.data(), kernel.data(), out.data());
  return out;
}

void direct_convolve_causal(std::span<const double> signal, std::span<const double> kernel,
                            std::span<double> out) {
  const std::size_t L = signal.size();
  if (L == 0 || kernel.empty() || out.size() != L) {
    throw DimensionError("direct_convolve_causal: signal length " + std::to_string(L) + ", kernel length " +
                         std::to_string(kernel.size()));
  }
  const std::size_t K = kernel.size();
  for (std::size_t t = 0; t < L; ++t) {
    double acc = 0.0;
    const std::size_t taps = std::min(K, t + 1);
    for (std::size_t j = 0; j < taps; ++j) acc += kernel[j] * signal[t - j];
    out[t] = acc;
  }
}

Tensor direct_convolve_causal(const Tensor& signal, const Tensor& kernel) {
  Tensor out(signal.shape());
  direct_convolve_causal(signal.data(), kernel.data(), out.data());
  return out;
}

}  // namespace gsmt
