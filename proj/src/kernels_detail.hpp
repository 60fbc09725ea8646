#pragma once

#include <cstddef>

namespace csnn::kernels::detail {

double dot_scalar(const double* a, const double* b, std::size_t n);
double squared_norm_scalar(const double* a, std::size_t n);
void axpy_scalar(double alpha, const double* x, double* y, std::size_t n);
void matvec_scalar(const double* m, std::size_t rows, std::size_t cols,
                   const double* x, double* out);

#if CSNN_HAVE_AVX2
double dot_avx2(const double* a, const double* b, std::size_t n);
double squared_norm_avx2(const double* a, std::size_t n);
void axpy_avx2(double alpha, const double* x, double* y, std::size_t n);
void matvec_avx2(const double* m, std::size_t rows, std::size_t cols,
                 const double* x, double* out);
#endif

}  // namespace csnn::kernels::detail
