#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "gsmt/gated_ssl.hpp"

namespace gsmt {

struct BenchOptions {
  std::vector<MechanismKind> mechanisms{MechanismKind::self_attention, MechanismKind::conv1d,
                                        MechanismKind::gated_ssl};
  std::vector<std::size_t> lengths{256, 512, 1024, 2048, 4096};
  std::size_t repeats = 5;  // wall time is the median
  std::uint64_t seed = 1;
  // Mechanism widths; small so the buffer scaling is dominated by L.
  GatedSslDims dims{16, 16, 16, 4, true};
};

struct BenchRow {
  MechanismKind mechanism = MechanismKind::gated_ssl;
  std::size_t length = 0;
  std::size_t peak_elements = 0;  // transient buffer high-water mark of one forward
  std::size_t allocations = 0;    // buffer allocations of one forward
  std::uint64_t wall_ns = 0;
};

// Rows sorted by L, then by the order of `mechanisms`. Throws ConfigError for
// lengths that are not powers of two.
std::vector<BenchRow> run_bench(const BenchOptions& options);

// Header `mechanism,L,peak_elems,allocs,wall_ns`.
std::string bench_csv(const std::vector<BenchRow>& rows);

}  // namespace gsmt
