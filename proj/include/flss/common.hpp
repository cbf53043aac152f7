#pragma once

// Shared basics: error taxonomy, complex alias, compensated accumulation,
// deterministic parallel partitioning.

#include <cmath>
#include <complex>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <thread>
#include <utility>
#include <vector>

namespace flss {

using cplx = std::complex<double>;

// Invalid user-supplied configuration or argument values.
struct config_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// File / stream problems.
struct io_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Numerical failure inside an algorithm; `stage` names the pipeline step.
struct numeric_error : std::runtime_error {
  std::string stage;
  numeric_error(std::string stage_, const std::string& msg)
      : std::runtime_error("[" + stage_ + "] " + msg), stage(std::move(stage_)) {}
};

// Neumaier compensated accumulator.
class kahan_sum {
 public:
  void add(double x) {
    double t = s_ + x;
    if (std::abs(s_) >= std::abs(x))
      c_ += (s_ - t) + x;
    else
      c_ += (x - t) + s_;
    s_ = t;
  }
  double value() const { return s_ + c_; }

 private:
  double s_ = 0.0;
  double c_ = 0.0;
};

// Splits [0, n) into at most `threads` contiguous chunks and runs
// fn(chunk, begin, end) on each. Chunk boundaries depend only on (n, threads)
// and callers combine per-chunk results in chunk order, so results do not
// depend on scheduling. The first exception (in chunk order) is rethrown
// after all workers join.
inline void parallel_for(std::size_t n, unsigned threads,
                         const std::function<void(unsigned, std::size_t, std::size_t)>& fn) {
  if (threads <= 1 || n < 2) {
    fn(0, 0, n);
    return;
  }
  unsigned t = threads;
  if (static_cast<std::size_t>(t) > n) t = static_cast<unsigned>(n);
  std::vector<std::exception_ptr> errs(t);
  std::vector<std::thread> pool;
  pool.reserve(t);
  for (unsigned i = 0; i < t; ++i) {
    std::size_t b = n * i / t;
    std::size_t e = n * (i + 1) / t;
    pool.emplace_back([&fn, &errs, i, b, e] {
      try {
        fn(i, b, e);
      } catch (...) {
        errs[i] = std::current_exception();
      }
    });
  }
  for (auto& th : pool) th.join();
  for (auto& ep : errs)
    if (ep) std::rethrow_exception(ep);
}

inline double sign_of(double x) { return x < 0.0 ? -1.0 : 1.0; }

}  // namespace flss
