#pragma once

// Fixed-chunk parallelism. Work is split into chunks whose boundaries depend
// only on the item count, never on the thread count, and any reduction over
// chunk results is performed sequentially in chunk order. This makes every
// parallel result bit-identical for --threads 1 vs --threads N.

#include <algorithm>
#include <atomic>
#include <cstdint>
#include <thread>
#include <vector>

namespace tpsdf {

inline int& thread_count_ref() {
  static int n = int(std::max(1u, std::thread::hardware_concurrency()));
  return n;
}

inline void set_thread_count(int n) { thread_count_ref() = std::max(1, n); }
inline int thread_count() { return thread_count_ref(); }

// f(begin, end, chunk_index) over [0, n) in chunks of chunk_size items.
// Chunks are claimed via an atomic counter; chunk outputs must be
// independent (callers merge them in chunk order afterwards).
template <typename F>
void parallel_chunks(int64_t n, int64_t chunk_size, F&& f) {
  if (n <= 0) return;
  chunk_size = std::max<int64_t>(1, chunk_size);
  const int64_t n_chunks = (n + chunk_size - 1) / chunk_size;
  const int n_threads = std::min<int64_t>(thread_count(), n_chunks);

  if (n_threads <= 1) {
    for (int64_t c = 0; c < n_chunks; ++c)
      f(c * chunk_size, std::min(n, (c + 1) * chunk_size), c);
    return;
  }

  std::atomic<int64_t> next{0};
  auto worker = [&] {
    while (true) {
      int64_t c = next.fetch_add(1, std::memory_order_relaxed);
      if (c >= n_chunks) break;
      f(c * chunk_size, std::min(n, (c + 1) * chunk_size), c);
    }
  };
  std::vector<std::thread> pool;
  pool.reserve(size_t(n_threads - 1));
  for (int t = 0; t < n_threads - 1; ++t) pool.emplace_back(worker);
  worker();
  for (auto& th : pool) th.join();
}

// Convenience: parallel loop over items with a default chunk size.
template <typename F>
void parallel_for(int64_t n, F&& f) {
  parallel_chunks(n, 1024, [&](int64_t b, int64_t e, int64_t) {
    for (int64_t i = b; i < e; ++i) f(i);
  });
}

}  // namespace tpsdf
