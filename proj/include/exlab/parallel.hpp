#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

#include "exlab/path_core.hpp"

namespace exlab {

// Process-wide worker count; the CLI sets it from --threads.
inline int& default_threads() {
  static int n = 1;
  return n;
}

inline constexpr std::size_t kChunkSize = 1000;

// Runs f(rs_chunk, begin, end) for every chunk of [0, n_items) and returns the
// per-chunk results in chunk order. Chunk k draws from rs.split(k), so the
// output does not depend on the number of workers.
template <class T, class F>
std::vector<T> map_chunks(std::size_t n_items, const RandomSource& rs, F&& f, int threads = 0,
                          std::size_t chunk = kChunkSize) {
  const std::size_t n_chunks = (n_items + chunk - 1) / chunk;
  std::vector<T> out(n_chunks);
  if (threads <= 0) threads = default_threads();
  threads = static_cast<int>(std::min<std::size_t>(std::max(threads, 1), std::max<std::size_t>(n_chunks, 1)));

  std::atomic<std::size_t> next{0};
  std::exception_ptr err;
  std::mutex err_mu;
  auto worker = [&] {
    for (;;) {
      const std::size_t k = next.fetch_add(1);
      if (k >= n_chunks) return;
      try {
        RandomSource sub = rs.split(k);
        const std::size_t b = k * chunk, e = std::min(n_items, b + chunk);
        out[k] = f(sub, b, e);
      } catch (...) {
        std::lock_guard<std::mutex> lk(err_mu);
        if (!err) err = std::current_exception();
        next = n_chunks;
      }
    }
  };
  if (threads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int i = 0; i < threads; ++i) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  if (err) std::rethrow_exception(err);
  return out;
}

// Fixed-order reduction of chunk results.
template <class T, class Op>
T reduce_chunks(const std::vector<T>& parts, T init, Op&& op) {
  for (const auto& p : parts) init = op(std::move(init), p);
  return init;
}

}  // namespace exlab
