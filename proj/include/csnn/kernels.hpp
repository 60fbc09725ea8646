#pragma once

#include <cstddef>

// Data-parallel inner loops behind the numeric core. Every kernel has a
// scalar reference implementation; on x86-64 an AVX2+FMA variant is compiled
// in and selected at runtime when the CPU supports it. The choice can be
// forced with the CSNN_SIMD environment variable ("scalar", "avx2", "auto")
// or programmatically with set_backend().
namespace csnn::kernels {

enum class Backend { scalar, avx2 };

const char* backend_name(Backend b);
bool backend_available(Backend b);
Backend active_backend();
// Throws std::invalid_argument if the backend is not available on this host.
// Not thread-safe against concurrent kernel calls; switch before fan-out.
void set_backend(Backend b);

double dot(const double* a, const double* b, std::size_t n);
double squared_norm(const double* a, std::size_t n);
// y += alpha * x
void axpy(double alpha, const double* x, double* y, std::size_t n);
// out[i] = dot(m[i,:], x) for row-major m of shape rows x cols
void matvec(const double* m, std::size_t rows, std::size_t cols,
            const double* x, double* out);

}  // namespace csnn::kernels
