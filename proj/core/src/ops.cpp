#include "gsmt/ops.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

#include "gsmt/error.hpp"

namespace gsmt::ops {

namespace {

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_string(a.shape()) + " vs " +
                         shape_string(b.shape()));
  }
}

template <class F>
Tensor map(const Tensor& a, F f) {
  Tensor out(a.shape());
  auto in = a.data();
  auto o = out.data();
  for (std::size_t i = 0; i < in.size(); ++i) o[i] = f(in[i]);
  return out;
}

template <class F>
Tensor zip(const Tensor& a, const Tensor& b, const char* op, F f) {
  require_same_shape(a, b, op);
  Tensor out(a.shape());
  auto x = a.data();
  auto y = b.data();
  auto o = out.data();
  for (std::size_t i = 0; i < x.size(); ++i) o[i] = f(x[i], y[i]);
  return out;
}

}  // namespace

namespace {

// out = a * b for row-major a [m x k], b [k x n]. Register tiles of 4 x 8
// outputs; each output still sums its k products in ascending order, so the
// result matches the naive triple loop bit for bit.
constexpr std::size_t kTileR = 4, kTileC = 8;

using TileFn = void (*)(const double*, const double*, double*, std::size_t, std::size_t, std::size_t, std::size_t);

void tile_generic(const double* a, const double* b, double* out, std::size_t i, std::size_t j, std::size_t k,
                  std::size_t n) {
  double acc[kTileR][kTileC] = {};
  for (std::size_t p = 0; p < k; ++p) {
    const double* bp = b + p * n + j;
    for (std::size_t r = 0; r < kTileR; ++r) {
      const double av = a[(i + r) * k + p];
      for (std::size_t c = 0; c < kTileC; ++c) acc[r][c] += av * bp[c];
    }
  }
  for (std::size_t r = 0; r < kTileR; ++r)
    for (std::size_t c = 0; c < kTileC; ++c) out[(i + r) * n + j + c] = acc[r][c];
}

#if defined(__GNUC__) && (defined(__x86_64__) || defined(__i386__))
// Plain AVX2 without FMA: separate multiply and add keep the rounding of the
// scalar loop.
using V4 = double __attribute__((vector_size(32)));

__attribute__((target("avx2"))) void tile_avx2(const double* a, const double* b, double* out, std::size_t i,
                                               std::size_t j, std::size_t k, std::size_t n) {
  V4 acc[kTileR][2] = {};
  for (std::size_t p = 0; p < k; ++p) {
    V4 b0, b1;
    std::memcpy(&b0, b + p * n + j, sizeof b0);
    std::memcpy(&b1, b + p * n + j + 4, sizeof b1);
    for (std::size_t r = 0; r < kTileR; ++r) {
      const V4 av = V4{} + a[(i + r) * k + p];
      acc[r][0] += av * b0;
      acc[r][1] += av * b1;
    }
  }
  for (std::size_t r = 0; r < kTileR; ++r) {
    std::memcpy(out + (i + r) * n + j, &acc[r][0], sizeof(V4));
    std::memcpy(out + (i + r) * n + j + 4, &acc[r][1], sizeof(V4));
  }
}

TileFn pick_tile() { return __builtin_cpu_supports("avx2") ? tile_avx2 : tile_generic; }
#else
TileFn pick_tile() { return tile_generic; }
#endif

void gemm(const double* a, const double* b, double* out, std::size_t m, std::size_t k, std::size_t n) {
  static const TileFn tile = pick_tile();
  std::size_t i = 0;
  for (; i + kTileR <= m; i += kTileR) {
    std::size_t j = 0;
    for (; j + kTileC <= n; j += kTileC) tile(a, b, out, i, j, k, n);
    for (; j < n; ++j) {
      for (std::size_t r = 0; r < kTileR; ++r) {
        double acc = 0.0;
        for (std::size_t p = 0; p < k; ++p) acc += a[(i + r) * k + p] * b[p * n + j];
        out[(i + r) * n + j] = acc;
      }
    }
  }
  for (; i < m; ++i) {
    double* orow = out + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = a[i * k + p];
      const double* brow = b + p * n;
      for (std::size_t j = 0; j < n; ++j) orow[j] += av * brow[j];
    }
  }
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  if (b.rows() != k) {
    throw DimensionError("matmul: inner dimensions differ, " + shape_string(a.shape()) + " x " +
                         shape_string(b.shape()));
  }
  Tensor out({m, n});
  gemm(a.data().data(), b.data().data(), out.data().data(), m, k, n);
  return out;
}

Tensor matmul_nt(const Tensor& a, const Tensor& b) {
  if (b.cols() != a.cols()) {
    throw DimensionError("matmul_nt: inner dimensions differ, " + shape_string(a.shape()) + " x " +
                         shape_string(b.shape()) + "^T");
  }
  return matmul(a, transpose(b));
}

Tensor matmul_tn(const Tensor& a, const Tensor& b) {
  if (b.rows() != a.rows()) {
    throw DimensionError("matmul_tn: inner dimensions differ, " + shape_string(a.shape()) + "^T x " +
                         shape_string(b.shape()));
  }
  return matmul(transpose(a), b);
}

Tensor transpose(const Tensor& a) {
  const std::size_t m = a.rows(), n = a.cols();
  Tensor out({n, m});
  const double* src = a.data().data();
  double* dst = out.data().data();
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) dst[j * m + i] = src[i * n + j];
  return out;
}

Tensor add(const Tensor& a, const Tensor& b) {
  return zip(a, b, "add", [](double x, double y) { return x + y; });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  return zip(a, b, "sub", [](double x, double y) { return x - y; });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  return zip(a, b, "mul", [](double x, double y) { return x * y; });
}

Tensor scale(const Tensor& a, double s) {
  return map(a, [s](double x) { return x * s; });
}

Tensor relu(const Tensor& a) {
  return map(a, [](double x) { return x > 0.0 ? x : 0.0; });
}

Tensor softmax_rows(const Tensor& a) {
  const std::size_t m = a.rows(), n = a.cols();
  Tensor out(a.shape());
  for (std::size_t i = 0; i < m; ++i) {
    auto in = a.row(i);
    auto o = out.row(i);
    const double mx = *std::max_element(in.begin(), in.end());
    double total = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      o[j] = std::exp(in[j] - mx);
      total += o[j];
    }
    for (std::size_t j = 0; j < n; ++j) o[j] /= total;
  }
  return out;
}

Tensor max_pool_rows(const Tensor& a, std::size_t group) {
  const std::size_t m = a.rows(), n = a.cols();
  if (group == 0 || m % group != 0) {
    throw DimensionError("max_pool_rows: " + std::to_string(m) + " rows not divisible into groups of " +
                         std::to_string(group));
  }
  Tensor out({m / group, n});
  for (std::size_t g = 0; g < m / group; ++g) {
    auto o = out.row(g);
    auto first = a.row(g * group);
    std::copy(first.begin(), first.end(), o.begin());
    for (std::size_t r = 1; r < group; ++r) {
      auto in = a.row(g * group + r);
      for (std::size_t j = 0; j < n; ++j) o[j] = std::max(o[j], in[j]);
    }
  }
  return out;
}

Tensor gather_rows(const Tensor& a, const std::vector<std::size_t>& indices) {
  const std::size_t m = a.rows(), n = a.cols();
  if (indices.empty()) throw DimensionError("gather_rows: empty index list");
  Tensor out({indices.size(), n});
  for (std::size_t r = 0; r < indices.size(); ++r) {
    if (indices[r] >= m) {
      throw DimensionError("gather_rows: index " + std::to_string(indices[r]) + " out of range for " +
                           std::to_string(m) + " rows");
    }
    auto in = a.row(indices[r]);
    std::copy(in.begin(), in.end(), out.row(r).begin());
  }
  return out;
}

Tensor concat_rows(const std::vector<const Tensor*>& parts) {
  if (parts.empty()) throw DimensionError("concat_rows: no inputs");
  const std::size_t n = parts.front()->cols();
  std::size_t total = 0;
  for (const Tensor* p : parts) {
    if (p->cols() != n) {
      throw DimensionError("concat_rows: width mismatch " + shape_string(parts.front()->shape()) + " vs " +
                           shape_string(p->shape()));
    }
    total += p->rows();
  }
  Tensor out({total, n});
  std::size_t offset = 0;
  for (const Tensor* p : parts) {
    std::copy(p->data().begin(), p->data().end(), out.data().begin() + static_cast<std::ptrdiff_t>(offset));
    offset += p->size();
  }
  return out;
}

double sum(const Tensor& a) {
  double total = 0.0;
  for (double v : a.data()) total += v;
  return total;
}

double max_rel_error(const Tensor& a, const Tensor& b, double floor) {
  require_same_shape(a, b, "max_rel_error");
  double worst = 0.0, ref = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    worst = std::max(worst, std::abs(a[i] - b[i]));
    ref = std::max(ref, std::abs(b[i]));
  }
  return worst / std::max(ref, floor);
}

double max_abs_error(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "max_abs_error");
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) worst = std::max(worst, std::abs(a[i] - b[i]));
  return worst;
}

}  // namespace gsmt::ops
