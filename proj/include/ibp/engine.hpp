#pragma once

#include <algorithm>
#include <cstdint>
#include <exception>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

// Path-level parallel driver. Per-path work is a pure function of
// (seed, path_index) writing into disjoint output slots, so the OpenMP runner
// produces bit-identical results to the serial reference for any thread
// count. The serial loop is kept both as the threads<=1 code path and as the
// reference the tests and the benchmark compare against.

namespace ibp {

namespace detail {

class ExceptionCollector {
 public:
  bool armed() const { return armed_; }
  template <class Fn>
  void guard(Fn&& fn) {
    if (armed_) return;
    try {
      fn();
    } catch (...) {
      capture();
    }
  }
  void rethrow_if_any() const {
    if (armed_) std::rethrow_exception(eptr_);
  }

 private:
  void capture() {
#ifdef _OPENMP
#pragma omp critical(ibp_exception_collector)
#endif
    {
      if (!armed_) {
        eptr_ = std::current_exception();
        armed_ = true;
      }
    }
  }
  std::exception_ptr eptr_;
  volatile bool armed_ = false;
};

}  // namespace detail

template <class State, class MakeState, class Body>
void run_paths_serial(std::uint64_t n_paths, MakeState&& make, Body&& body) {
  State state = make();
  for (std::uint64_t p = 0; p < n_paths; ++p) body(state, p);
}

template <class State, class MakeState, class Body>
void run_paths(std::uint64_t n_paths, int threads, MakeState&& make, Body&& body) {
#ifdef _OPENMP
  if (threads > 1) {
    detail::ExceptionCollector errors;
#pragma omp parallel num_threads(threads)
    {
      State state = make();
#pragma omp for schedule(static)
      for (long long p = 0; p < static_cast<long long>(n_paths); ++p)
        errors.guard([&] { body(state, static_cast<std::uint64_t>(p)); });
    }
    errors.rethrow_if_any();
    return;
  }
#endif
  (void)threads;
  run_paths_serial<State>(n_paths, make, body);
}

// Deterministic accumulator reduction: paths are grouped into fixed-size
// blocks (independent of the thread count); each block accumulates its
// partial sums in path order and the partials are summed in block order.
inline constexpr std::uint64_t kReduceBlockSize = 256;

template <class State, class MakeState, class Body>
void run_paths_reduce(std::uint64_t n_paths, std::size_t acc_len, int threads, MakeState&& make,
                      Body&& body, double* out_acc) {
  const std::uint64_t n_blocks = (n_paths + kReduceBlockSize - 1) / kReduceBlockSize;
  std::vector<double> partials(n_blocks * acc_len, 0.0);

  auto run_block = [&](State& state, std::uint64_t b) {
    double* acc = partials.data() + b * acc_len;
    const std::uint64_t lo = b * kReduceBlockSize;
    const std::uint64_t hi = std::min(n_paths, lo + kReduceBlockSize);
    for (std::uint64_t p = lo; p < hi; ++p) body(state, p, acc);
  };

#ifdef _OPENMP
  if (threads > 1) {
    detail::ExceptionCollector errors;
#pragma omp parallel num_threads(threads)
    {
      State state = make();
#pragma omp for schedule(static)
      for (long long b = 0; b < static_cast<long long>(n_blocks); ++b)
        errors.guard([&] { run_block(state, static_cast<std::uint64_t>(b)); });
    }
    errors.rethrow_if_any();
  } else
#endif
  {
    State state = make();
    for (std::uint64_t b = 0; b < n_blocks; ++b) run_block(state, b);
  }

  for (std::uint64_t b = 0; b < n_blocks; ++b)
    for (std::size_t j = 0; j < acc_len; ++j) out_acc[j] += partials[b * acc_len + j];
}

}  // namespace ibp
