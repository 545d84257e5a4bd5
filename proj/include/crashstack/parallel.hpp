#ifndef CRASHSTACK_PARALLEL_HPP_
#define CRASHSTACK_PARALLEL_HPP_

#include <cstddef>
#include <exception>
#include <mutex>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace crashstack {

// Every data-parallel kernel has two paths: a plain loop kept as the
// reference implementation, and an OpenMP loop. Bodies write only to
// per-index slots, so both paths produce bit-identical results.
enum class Exec { serial, parallel };

inline void set_num_threads(int n) {
#ifdef _OPENMP
  if (n > 0) omp_set_num_threads(n);
#else
  (void)n;
#endif
}

inline int max_threads() {
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

// Runs body(i) for i in [0, n). Exceptions thrown inside the OpenMP region
// are captured and the first one is rethrown on the calling thread.
template <typename Body>
void parallel_for(Exec exec, std::size_t n, Body&& body) {
  if (exec == Exec::serial || n < 2) {
    for (std::size_t i = 0; i < n; ++i) body(i);
    return;
  }
  std::exception_ptr failure;
  std::mutex failure_mu;
  const auto count = static_cast<long long>(n);
#pragma omp parallel for schedule(dynamic, 1)
  for (long long i = 0; i < count; ++i) {
    try {
      body(static_cast<std::size_t>(i));
    } catch (...) {
      std::lock_guard<std::mutex> lock(failure_mu);
      if (!failure) failure = std::current_exception();
    }
  }
  if (failure) std::rethrow_exception(failure);
}

}  // namespace crashstack

#endif  // CRASHSTACK_PARALLEL_HPP_
