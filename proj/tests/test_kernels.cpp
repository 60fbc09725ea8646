#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "csnn/kernels.hpp"
#include "csnn/rng.hpp"

using namespace csnn;
namespace k = csnn::kernels;

namespace {

// Restores the entry backend so test order does not matter.
struct BackendGuard {
  k::Backend saved = k::active_backend();
  ~BackendGuard() { k::set_backend(saved); }
};

std::vector<double> random_vec(std::size_t n, Rng& rng) {
  std::vector<double> v(n);
  for (auto& x : v) x = rng.normal(0.0, 1.0);
  return v;
}

bool close_rel(double a, double b, double tol) {
  return std::abs(a - b) <= tol * std::max({1.0, std::abs(a), std::abs(b)});
}

}  // namespace

TEST_CASE("scalar backend is always available and selectable") {
  BackendGuard guard;
  CHECK(k::backend_available(k::Backend::scalar));
  k::set_backend(k::Backend::scalar);
  CHECK(k::active_backend() == k::Backend::scalar);
}

TEST_CASE("hand-checked kernel values") {
  BackendGuard guard;
  for (auto backend : {k::Backend::scalar, k::Backend::avx2}) {
    if (!k::backend_available(backend)) continue;
    k::set_backend(backend);
    CAPTURE(k::backend_name(backend));

    const double a[] = {1.0, 2.0};
    const double b[] = {3.0, 4.0};
    CHECK(k::dot(a, b, 2) == 11.0);
    CHECK(k::squared_norm(b, 2) == 25.0);

    double y[] = {1.0, 1.0};
    k::axpy(2.0, a, y, 2);
    CHECK(y[0] == 3.0);
    CHECK(y[1] == 5.0);

    const double m[] = {1.0, 2.0, 3.0, 4.0};
    double out[2];
    const double x[] = {1.0, 1.0};
    k::matvec(m, 2, 2, x, out);
    CHECK(out[0] == 3.0);
    CHECK(out[1] == 7.0);
  }
}

TEST_CASE("scalar and simd variants agree on random inputs including tails") {
  if (!k::backend_available(k::Backend::avx2)) {
    MESSAGE("AVX2 unavailable on this host, equivalence check skipped");
    return;
  }
  BackendGuard guard;
  Rng rng(20240817);
  // sizes straddle the 4- and 8-lane boundaries to cover every tail path
  for (std::size_t n : {0ul, 1ul, 2ul, 3ul, 4ul, 5ul, 7ul, 8ul, 9ul, 11ul, 12ul, 13ul,
                        16ul, 17ul, 31ul, 100ul, 1000ul}) {
    const auto a = random_vec(n, rng);
    const auto b = random_vec(n, rng);

    k::set_backend(k::Backend::scalar);
    const double dot_s = k::dot(a.data(), b.data(), n);
    const double sq_s = k::squared_norm(a.data(), n);
    auto y_s = random_vec(n, rng);
    auto y_v = y_s;
    k::axpy(0.37, a.data(), y_s.data(), n);

    k::set_backend(k::Backend::avx2);
    const double dot_v = k::dot(a.data(), b.data(), n);
    const double sq_v = k::squared_norm(a.data(), n);
    k::axpy(0.37, a.data(), y_v.data(), n);

    CAPTURE(n);
    CHECK(close_rel(dot_s, dot_v, 1e-12));
    CHECK(close_rel(sq_s, sq_v, 1e-12));
    for (std::size_t i = 0; i < n; ++i) CHECK(close_rel(y_s[i], y_v[i], 1e-12));
  }
}

TEST_CASE("matvec variants agree on random shapes") {
  if (!k::backend_available(k::Backend::avx2)) return;
  BackendGuard guard;
  Rng rng(7);
  for (std::size_t rows : {1ul, 2ul, 5ul, 32ul}) {
    for (std::size_t cols : {1ul, 3ul, 8ul, 13ul, 129ul}) {
      const auto m = random_vec(rows * cols, rng);
      const auto x = random_vec(cols, rng);
      std::vector<double> out_s(rows), out_v(rows);
      k::set_backend(k::Backend::scalar);
      k::matvec(m.data(), rows, cols, x.data(), out_s.data());
      k::set_backend(k::Backend::avx2);
      k::matvec(m.data(), rows, cols, x.data(), out_v.data());
      for (std::size_t i = 0; i < rows; ++i) {
        CAPTURE(rows);
        CAPTURE(cols);
        CHECK(close_rel(out_s[i], out_v[i], 1e-12));
      }
    }
  }
}

TEST_CASE("unavailable backend is rejected") {
  if (k::backend_available(k::Backend::avx2)) return;
  CHECK_THROWS_AS(k::set_backend(k::Backend::avx2), std::invalid_argument);
}
