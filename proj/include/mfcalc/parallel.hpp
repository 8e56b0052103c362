#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <exception>
#include <thread>
#include <vector>

namespace mfcalc {

/// Process-wide worker cap. Results never depend on it: callers only
/// parallelize over independent indices and reduce in index order.
inline std::atomic<unsigned>& worker_limit() {
  static std::atomic<unsigned> limit{0};  // 0 = hardware concurrency
  return limit;
}

inline unsigned worker_count() {
  const unsigned hw = std::max(1u, std::thread::hardware_concurrency());
  const unsigned cap = worker_limit().load();
  return cap == 0 ? hw : std::min(cap, hw);
}

/// Runs body(i) for i in [begin, end) in contiguous static chunks.
/// Exceptions thrown by body are rethrown on the calling thread
/// (the one from the lowest chunk wins).
template <class Body>
void parallel_for(std::size_t begin, std::size_t end, Body&& body, std::size_t min_chunk = 64) {
  if (end <= begin) return;
  const std::size_t n = end - begin;
  const std::size_t workers =
      std::min<std::size_t>(worker_count(), std::max<std::size_t>(1, n / min_chunk));
  if (workers <= 1) {
    for (std::size_t i = begin; i < end; ++i) body(i);
    return;
  }
  std::vector<std::exception_ptr> errors(workers);
  std::vector<std::thread> pool;
  pool.reserve(workers - 1);
  const std::size_t chunk = (n + workers - 1) / workers;
  auto run = [&](std::size_t w) {
    const std::size_t lo = begin + w * chunk;
    const std::size_t hi = std::min(end, lo + chunk);
    try {
      for (std::size_t i = lo; i < hi; ++i) body(i);
    } catch (...) {
      errors[w] = std::current_exception();
    }
  };
  for (std::size_t w = 1; w < workers; ++w) pool.emplace_back(run, w);
  run(0);
  for (auto& t : pool) t.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

}  // namespace mfcalc
