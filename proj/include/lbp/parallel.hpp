#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <exception>
#include <thread>
#include <vector>

namespace lbp {

inline constexpr std::size_t kBlockSize = 4096;

// Splits [0, n) into fixed-size blocks, runs `body(begin, end, acc)` on each
// block with a fresh accumulator, and merges the accumulators in block order.
// The partition does not depend on `threads`, so any reduction whose merge is
// exact (integer counts) gives identical results for every thread count.
template <class Acc, class Make, class Body>
Acc parallel_blocks(std::size_t n, int threads, Make make, Body body, std::size_t block = kBlockSize) {
  const std::size_t n_blocks = (n + block - 1) / block;
  std::vector<Acc> accs;
  accs.reserve(n_blocks);
  for (std::size_t b = 0; b < n_blocks; ++b) accs.push_back(make());
  std::vector<std::exception_ptr> errors(n_blocks);

  auto run = [&](std::size_t b) {
    try {
      const std::size_t begin = b * block;
      body(begin, std::min(n, begin + block), accs[b]);
    } catch (...) {
      errors[b] = std::current_exception();
    }
  };

  const auto workers = static_cast<std::size_t>(std::max(1, threads));
  if (workers == 1 || n_blocks <= 1) {
    for (std::size_t b = 0; b < n_blocks; ++b) run(b);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < std::min(workers, n_blocks); ++w) {
      pool.emplace_back([&] {
        for (std::size_t b = next++; b < n_blocks; b = next++) run(b);
      });
    }
    for (auto& th : pool) th.join();
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);

  Acc total = make();
  for (auto& a : accs) total.merge(a);
  return total;
}

// Runs `body(i)` for i in [0, n); results must be written to disjoint slots.
template <class Body>
void parallel_for(std::size_t n, int threads, Body body) {
  struct Nothing {
    void merge(const Nothing&) {}
  };
  parallel_blocks<Nothing>(
      n, threads, [] { return Nothing{}; },
      [&](std::size_t begin, std::size_t end, Nothing&) {
        for (std::size_t i = begin; i < end; ++i) body(i);
      },
      1);
}

}  // namespace lbp
