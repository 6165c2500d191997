#pragma once

#include <cstddef>
#include <exception>
#include <mutex>

#include "ppx/rng.hpp"

namespace ppx::detail {

/// Runs fn(i) for i in [0, n). Under Exec::parallel the iterations are
/// distributed with OpenMP; the first exception thrown by any iteration is
/// rethrown after the loop.
template <typename Fn>
void for_each_index(std::size_t n, Exec exec, Fn&& fn) {
  if (exec == Exec::serial) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::exception_ptr error;
  std::mutex mutex;
  const auto count = static_cast<long long>(n);
#pragma omp parallel for schedule(dynamic, 1)
  for (long long i = 0; i < count; ++i) {
    try {
      fn(static_cast<std::size_t>(i));
    } catch (...) {
      std::lock_guard lock(mutex);
      if (!error) error = std::current_exception();
    }
  }
  if (error) std::rethrow_exception(error);
}

}  // namespace ppx::detail
