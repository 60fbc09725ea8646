#include "csnn/kernels.hpp"

#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <stdexcept>

#include "kernels_detail.hpp"

namespace csnn::kernels {

namespace detail {

double dot_scalar(const double* a, const double* b, std::size_t n) {
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) acc += a[i] * b[i];
  return acc;
}

double squared_norm_scalar(const double* a, std::size_t n) {
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) acc += a[i] * a[i];
  return acc;
}

void axpy_scalar(double alpha, const double* x, double* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

void matvec_scalar(const double* m, std::size_t rows, std::size_t cols,
                   const double* x, double* out) {
  for (std::size_t i = 0; i < rows; ++i) out[i] = dot_scalar(m + i * cols, x, cols);
}

}  // namespace detail

namespace {

struct Impl {
  double (*dot)(const double*, const double*, std::size_t);
  double (*squared_norm)(const double*, std::size_t);
  void (*axpy)(double, const double*, double*, std::size_t);
  void (*matvec)(const double*, std::size_t, std::size_t, const double*, double*);
  Backend id;
};

constexpr Impl kScalar = {detail::dot_scalar, detail::squared_norm_scalar,
                          detail::axpy_scalar, detail::matvec_scalar,
                          Backend::scalar};

#if CSNN_HAVE_AVX2
constexpr Impl kAvx2 = {detail::dot_avx2, detail::squared_norm_avx2,
                        detail::axpy_avx2, detail::matvec_avx2, Backend::avx2};

bool cpu_has_avx2() {
#if defined(__GNUC__) || defined(__clang__)
  return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
  return false;
#endif
}
#endif

const Impl* pick_default() {
  const char* env = std::getenv("CSNN_SIMD");
  if (env != nullptr && std::strcmp(env, "scalar") == 0) return &kScalar;
#if CSNN_HAVE_AVX2
  if (env != nullptr && std::strcmp(env, "avx2") == 0) {
    if (cpu_has_avx2()) return &kAvx2;
    std::fprintf(stderr, "csnn: CSNN_SIMD=avx2 requested but CPU lacks AVX2+FMA, using scalar\n");
    return &kScalar;
  }
  if (cpu_has_avx2()) return &kAvx2;
#else
  if (env != nullptr && std::strcmp(env, "avx2") == 0) {
    std::fprintf(stderr, "csnn: CSNN_SIMD=avx2 requested but AVX2 support is not compiled in, using scalar\n");
  }
#endif
  return &kScalar;
}

const Impl* g_active = nullptr;

const Impl* active() {
  if (g_active == nullptr) g_active = pick_default();
  return g_active;
}

}  // namespace

const char* backend_name(Backend b) {
  switch (b) {
    case Backend::scalar: return "scalar";
    case Backend::avx2: return "avx2";
  }
  return "unknown";
}

bool backend_available(Backend b) {
  if (b == Backend::scalar) return true;
#if CSNN_HAVE_AVX2
  if (b == Backend::avx2) return cpu_has_avx2();
#endif
  return false;
}

Backend active_backend() { return active()->id; }

void set_backend(Backend b) {
  if (!backend_available(b)) {
    throw std::invalid_argument(std::string("kernel backend not available: ") + backend_name(b));
  }
  switch (b) {
    case Backend::scalar: g_active = &kScalar; break;
#if CSNN_HAVE_AVX2
    case Backend::avx2: g_active = &kAvx2; break;
#else
    case Backend::avx2: break;  // unreachable, backend_available already failed
#endif
  }
}

double dot(const double* a, const double* b, std::size_t n) { return active()->dot(a, b, n); }

double squared_norm(const double* a, std::size_t n) { return active()->squared_norm(a, n); }

void axpy(double alpha, const double* x, double* y, std::size_t n) {
  active()->axpy(alpha, x, y, n);
}

void matvec(const double* m, std::size_t rows, std::size_t cols,
            const double* x, double* out) {
  active()->matvec(m, rows, cols, x, out);
}

}  // namespace csnn::kernels
