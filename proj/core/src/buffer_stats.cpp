#include "gsmt/buffer_stats.hpp"

#include <algorithm>

namespace gsmt {

namespace {
thread_local BufferStats tls_stats;
}

BufferStats& buffer_stats() noexcept { return tls_stats; }

void reset_buffer_peak() noexcept {
  tls_stats.peak_elements = tls_stats.live_elements;
  tls_stats.allocations = 0;
}

namespace detail {

void record_allocation(std::size_t elements) noexcept {
  tls_stats.live_elements += elements;
  tls_stats.peak_elements = std::max(tls_stats.peak_elements, tls_stats.live_elements);
  ++tls_stats.allocations;
}

void record_deallocation(std::size_t elements) noexcept {
  tls_stats.live_elements -= std::min(elements, tls_stats.live_elements);
}

}  // namespace detail

BufferScope::BufferScope() noexcept
    : baseline_(tls_stats.live_elements), allocations_at_start_(0) {
  reset_buffer_peak();
}

std::size_t BufferScope::peak() const noexcept {
  return tls_stats.peak_elements > baseline_ ? tls_stats.peak_elements - baseline_ : 0;
}

std::size_t BufferScope::allocations() const noexcept {
  return tls_stats.allocations - allocations_at_start_;
}

}  // namespace gsmt
