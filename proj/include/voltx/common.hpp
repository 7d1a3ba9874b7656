#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <numbers>
#include <stdexcept>
#include <string>
#include <atomic>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace voltx {

// Error hierarchy. The CLI maps IoError/SchemaError to exit code 2.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

class SchemaError : public Error {
 public:
  using Error::Error;
};

class DomainError : public Error {
 public:
  using Error::Error;
};

class EstimationError : public Error {
 public:
  using Error::Error;
};

inline constexpr std::int64_t kSecondsPerDay = 86400;
inline constexpr int kIntervalSeconds = 300;
inline constexpr int kSlotsPerDay = 288;
inline constexpr double kIntervalMinutes = 5.0;

/// Floor division of a nanosecond timestamp to whole seconds.
inline std::int64_t floor_seconds(std::int64_t ts_ns) {
  constexpr std::int64_t kNs = 1'000'000'000;
  std::int64_t q = ts_ns / kNs;
  if (ts_ns % kNs != 0 && ts_ns < 0) --q;
  return q;
}

inline std::int64_t floor_mod(std::int64_t a, std::int64_t m) {
  std::int64_t r = a % m;
  return r < 0 ? r + m : r;
}

/// Two-sided normal p-value for a z statistic.
inline double normal_two_sided_p(double z) {
  if (!std::isfinite(z)) return std::isnan(z) ? std::nan("") : 0.0;
  return std::erfc(std::fabs(z) / std::numbers::sqrt2);
}

/// Worker count: VOLTX_THREADS if set and positive, else hardware concurrency.
inline unsigned thread_count() {
  if (const char* env = std::getenv("VOLTX_THREADS")) {
    char* end = nullptr;
    long v = std::strtol(env, &end, 10);
    if (end != env && v > 0) return static_cast<unsigned>(v);
  }
  unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1u : hw;
}

/// Runs fn(i) for i in [0, n) on up to thread_count() workers. Each index is
/// processed exactly once; the first exception thrown is rethrown.
template <class Fn>
void parallel_for(std::size_t n, Fn&& fn, unsigned workers = thread_count()) {
  if (workers <= 1 || n <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto run = [&] {
    for (std::size_t i = next++; i < n; i = next++) {
      try {
        fn(i);
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::current_exception();
      }
    }
  };
  std::vector<std::thread> pool;
  unsigned count = static_cast<unsigned>(std::min<std::size_t>(workers, n));
  pool.reserve(count);
  for (unsigned w = 0; w < count; ++w) pool.emplace_back(run);
  for (auto& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);
}

}  // namespace voltx
