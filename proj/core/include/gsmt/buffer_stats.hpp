#pragma once

#include <cstddef>
#include <memory>
#include <new>

namespace gsmt {

// Per-thread counters of live numeric buffer elements. Tensors and FFT
// scratch buffers allocate through TrackingAllocator, so peak_elements is the
// high-water mark of everything a forward pass materializes.
struct BufferStats {
  std::size_t live_elements = 0;
  std::size_t peak_elements = 0;
  std::size_t allocations = 0;
};

BufferStats& buffer_stats() noexcept;

// Restart the peak and allocation count from the current live level.
void reset_buffer_peak() noexcept;

namespace detail {
void record_allocation(std::size_t elements) noexcept;
void record_deallocation(std::size_t elements) noexcept;
}  // namespace detail

template <class T>
struct TrackingAllocator {
  using value_type = T;

  TrackingAllocator() noexcept = default;
  template <class U>
  TrackingAllocator(const TrackingAllocator<U>&) noexcept {}

  T* allocate(std::size_t n) {
    T* p = std::allocator<T>{}.allocate(n);
    detail::record_allocation(n);
    return p;
  }

  void deallocate(T* p, std::size_t n) noexcept {
    detail::record_deallocation(n);
    std::allocator<T>{}.deallocate(p, n);
  }

  template <class U>
  bool operator==(const TrackingAllocator<U>&) const noexcept {
    return true;
  }
};

// RAII window over the counters: peak() is the transient high-water mark
// above the live level at construction.
class BufferScope {
 public:
  BufferScope() noexcept;
  std::size_t peak() const noexcept;
  std::size_t allocations() const noexcept;

 private:
  std::size_t baseline_;
  std::size_t allocations_at_start_;
};

}  // namespace gsmt
