#pragma once

#include <algorithm>
#include <thread>
#include <vector>

namespace gsg {

// Splits [0, n) into contiguous bands, one per worker. fn(begin, end, worker)
// runs inline when threads <= 1, so single-threaded runs are deterministic.
template <typename Fn>
void parallel_bands(int n, int threads, Fn&& fn) {
  threads = std::max(1, std::min(threads, n));
  if (threads == 1) {
    fn(0, n, 0);
    return;
  }
  std::vector<std::thread> pool;
  pool.reserve(threads);
  for (int t = 0; t < threads; ++t) {
    const int b = static_cast<int>(static_cast<long long>(n) * t / threads);
    const int e = static_cast<int>(static_cast<long long>(n) * (t + 1) / threads);
    pool.emplace_back([&fn, b, e, t] { fn(b, e, t); });
  }
  for (auto& th : pool) th.join();
}

}  // namespace gsg
