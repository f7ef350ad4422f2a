#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <exception>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace sldmm {

using Index = std::ptrdiff_t;

/// Raised when a file cannot be opened, is truncated, or has a malformed header.
struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Raised when a numerical routine cannot produce a usable result
/// (singular system, NaN iterate, zero diagonal).
struct NumericalError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

inline void require(bool cond, const std::string &msg) {
  if (!cond)
    throw std::invalid_argument(msg);
}

inline unsigned default_thread_count() {
  const unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1u : hw;
}

/// Runs fn(i) for i in [begin, end) split into contiguous chunks, one per
/// worker. Each index is visited exactly once, so callers writing disjoint
/// outputs per index get results independent of the thread count.
template <class Fn>
void parallel_for(Index begin, Index end, unsigned threads, Fn &&fn) {
  const Index count = end - begin;
  if (count <= 0)
    return;
  const Index workers =
      std::clamp<Index>(static_cast<Index>(threads), 1, count);
  if (workers == 1) {
    for (Index i = begin; i < end; ++i)
      fn(i);
    return;
  }
  const Index chunk = (count + workers - 1) / workers;
  std::vector<std::exception_ptr> errors(static_cast<std::size_t>(workers));
  {
    std::vector<std::jthread> pool;
    pool.reserve(static_cast<std::size_t>(workers));
    for (Index w = 0; w < workers; ++w) {
      const Index lo = begin + w * chunk;
      const Index hi = std::min(end, lo + chunk);
      if (lo >= hi)
        break;
      pool.emplace_back([lo, hi, &fn, &err = errors[static_cast<std::size_t>(w)]] {
        try {
          for (Index i = lo; i < hi; ++i)
            fn(i);
        } catch (...) {
          err = std::current_exception();
        }
      });
    }
  }
  // lowest failing chunk wins so the reported error does not depend on timing
  for (auto &e : errors)
    if (e)
      std::rethrow_exception(e);
}

} // namespace sldmm
