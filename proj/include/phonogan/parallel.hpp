#pragma once

#include <thread>
#include <vector>

namespace phonogan {

/// Static-partition parallel map: fn(i) for i in [0, n). Work item i always
/// lands in the same partition, and callers reduce results by index, so the
/// outcome is identical for any thread count.
template <class Fn>
void parallel_for(int n, int threads, Fn&& fn) {
  if (threads <= 0) threads = static_cast<int>(std::thread::hardware_concurrency());
  if (threads < 1) threads = 1;
  if (threads == 1 || n <= 1) {
    for (int i = 0; i < n; ++i) fn(i);
    return;
  }
  threads = std::min(threads, n);
  std::vector<std::thread> pool;
  pool.reserve(threads - 1);
  auto work = [&fn, n, threads](int w) {
    for (int i = w; i < n; i += threads) fn(i);
  };
  for (int w = 1; w < threads; ++w) pool.emplace_back(work, w);
  work(0);
  for (auto& t : pool) t.join();
}

}  // namespace phonogan
