#include "gsmt/bench.hpp"

#include <algorithm>
#include <chrono>
#include <random>

#include "gsmt/buffer_stats.hpp"
#include "gsmt/error.hpp"
#include "gsmt/fft.hpp"

namespace gsmt {

std::vector<BenchRow> run_bench(const BenchOptions& options) {
  if (options.repeats == 0) throw ConfigError("bench needs at least one repeat");
  for (std::size_t l : options.lengths) {
    if (!is_power_of_two(l)) throw ConfigError("bench length " + std::to_string(l) + " is not a power of two");
  }
  std::vector<std::size_t> lengths = options.lengths;
  std::sort(lengths.begin(), lengths.end());

  std::vector<BenchRow> rows;
  for (std::size_t length : lengths) {
    for (MechanismKind kind : options.mechanisms) {
      std::mt19937_64 rng(options.seed);
      const MechanismParams params = make_mechanism_params(kind, options.dims, rng);
      Tensor x({length, options.dims.d});
      std::normal_distribution<double> n(0.0, 1.0);
      for (double& v : x.data()) v = n(rng);

      BenchRow row{kind, length, 0, 0, 0};
      std::vector<std::uint64_t> times;
      for (std::size_t r = 0; r < options.repeats; ++r) {
        BufferScope scope;
        const auto t0 = std::chrono::steady_clock::now();
        {
          Tensor out = global_mechanism_forward(params, x);
          if (!out.all_finite()) throw NumericError("bench forward produced non-finite output");
        }
        const auto t1 = std::chrono::steady_clock::now();
        times.push_back(static_cast<std::uint64_t>(std::chrono::duration_cast<std::chrono::nanoseconds>(t1 - t0).count()));
        row.peak_elements = std::max(row.peak_elements, scope.peak());
        row.allocations = scope.allocations();
      }
      std::nth_element(times.begin(), times.begin() + static_cast<std::ptrdiff_t>(times.size() / 2), times.end());
      row.wall_ns = times[times.size() / 2];
      rows.push_back(row);
    }
  }
  return rows;
}

std::string bench_csv(const std::vector<BenchRow>& rows) {
  std::string out = "mechanism,L,peak_elems,allocs,wall_ns\n";
  for (const BenchRow& r : rows) {
    out += to_string(r.mechanism) + "," + std::to_string(r.length) + "," + std::to_string(r.peak_elements) + "," +
           std::to_string(r.allocations) + "," + std::to_string(r.wall_ns) + "\n";
  }
  return out;
}

}  // namespace gsmt
