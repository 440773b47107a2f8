#pragma once

#include <atomic>
#include <cstddef>
#include <functional>
#include <thread>
#include <vector>

namespace sfield {

// Splits [begin, end) into a fixed number of contiguous chunks and runs
// fn(chunk_index, chunk_begin, chunk_end) on a small thread pool. The chunk
// count is independent of the hardware thread count, so per-chunk
// accumulators merged in chunk order give bit-identical results on any
// machine.
inline constexpr int kParallelChunks = 16;

inline void parallel_chunks(std::size_t begin, std::size_t end,
                            const std::function<void(int, std::size_t, std::size_t)>& fn,
                            int chunks = kParallelChunks) {
  const std::size_t n = end - begin;
  if (n == 0) return;
  if (chunks > static_cast<int>(n)) chunks = static_cast<int>(n);

  unsigned hw = std::thread::hardware_concurrency();
  if (hw <= 1 || chunks == 1) {
    for (int c = 0; c < chunks; ++c) {
      const std::size_t lo = begin + n * c / chunks;
      const std::size_t hi = begin + n * (c + 1) / chunks;
      fn(c, lo, hi);
    }
    return;
  }

  std::vector<std::thread> workers;
  const unsigned nthreads = std::min<unsigned>(hw, static_cast<unsigned>(chunks));
  std::atomic<int> next{0};
  for (unsigned t = 0; t < nthreads; ++t) {
    workers.emplace_back([&]() {
      for (;;) {
        const int c = next.fetch_add(1);
        if (c >= chunks) return;
        const std::size_t lo = begin + n * c / chunks;
        const std::size_t hi = begin + n * (c + 1) / chunks;
        fn(c, lo, hi);
      }
    });
  }
  for (auto& w : workers) w.join();
}

}  // namespace sfield
