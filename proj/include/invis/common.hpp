#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <functional>
#include <mutex>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

namespace invis {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

// Failure modes surfaced to callers.  The CLI maps these onto exit codes.
struct SingularSystem : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct NotPositiveDefinite : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct ThresholdNotFound : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct StepFailure : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct EscapeFailure : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct GeometryInvalid : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct ConfigInvalid : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct AmplitudeDegenerate : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Packed position of h_ab (a <= b, lexicographic) among the n(n+1)/2
// independent entries of a symmetric n x n matrix.
inline int sym_index(int n, int a, int b) {
  return a * n - a * (a - 1) / 2 + (b - a);
}

inline Vec pack_symmetric(const Mat& H) {
  const int n = static_cast<int>(H.rows());
  Vec v(n * (n + 1) / 2);
  for (int a = 0; a < n; ++a)
    for (int b = a; b < n; ++b) v[sym_index(n, a, b)] = H(a, b);
  return v;
}

inline Mat unpack_symmetric(int n, const Vec& v) {
  Mat H(n, n);
  for (int a = 0; a < n; ++a)
    for (int b = a; b < n; ++b) H(a, b) = H(b, a) = v[sym_index(n, a, b)];
  return H;
}

// mt19937_64 raw draws mapped to doubles by hand so the stream is identical
// across standard library implementations.
class DeterministicRng {
 public:
  explicit DeterministicRng(std::uint64_t seed) : engine_(seed) {}
  double unit() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  double range(double lo, double hi) { return lo + (hi - lo) * unit(); }

 private:
  std::mt19937_64 engine_;
};

inline unsigned worker_count() {
  unsigned c = std::thread::hardware_concurrency();
  return c == 0 ? 4u : c;
}

// Static block partition over [0, count).  Bodies must write only to
// caller-owned slots indexed by i, which keeps results independent of
// scheduling.
inline void parallel_for(std::size_t count,
                         const std::function<void(std::size_t)>& body) {
  if (count == 0) return;
  const std::size_t workers =
      std::min<std::size_t>(worker_count(), count);
  if (workers <= 1) {
    for (std::size_t i = 0; i < count; ++i) body(i);
    return;
  }
  std::vector<std::thread> pool;
  pool.reserve(workers);
  std::exception_ptr first_error;
  std::mutex error_mutex;
  for (std::size_t w = 0; w < workers; ++w) {
    const std::size_t lo = count * w / workers;
    const std::size_t hi = count * (w + 1) / workers;
    pool.emplace_back([&, lo, hi] {
      try {
        for (std::size_t i = lo; i < hi; ++i) body(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (!first_error) first_error = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  if (first_error) std::rethrow_exception(first_error);
}

// 17 significant digits round-trips a double exactly.
inline std::string fmt17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return std::string(buf);
}

inline std::string fnv1a64_hex(std::string_view s) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  char buf[24];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(h));
  return std::string(buf);
}

}  // namespace invis
