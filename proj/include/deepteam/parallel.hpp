#pragma once

#include <algorithm>
#include <cstdint>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace deepteam {

// Runs fn(begin, end) over contiguous chunks of [0, n). Chunk boundaries depend on the worker count,
// so callers must write disjoint outputs; the first exception is rethrown after all workers join.
template <class Fn>
void parallel_for(std::uint64_t n, int workers, Fn&& fn) {
  if (workers <= 1 || n < 2) {
    fn(std::uint64_t{0}, n);
    return;
  }
  const std::uint64_t w = std::min<std::uint64_t>(static_cast<std::uint64_t>(workers), n);
  std::vector<std::thread> pool;
  std::exception_ptr err;
  std::mutex mu;
  for (std::uint64_t i = 0; i < w; ++i) {
    const std::uint64_t b = n * i / w, e = n * (i + 1) / w;
    pool.emplace_back([&, b, e] {
      try {
        fn(b, e);
      } catch (...) {
        std::lock_guard<std::mutex> lock(mu);
        if (!err) err = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  if (err) std::rethrow_exception(err);
}

}  // namespace deepteam
