#include "csnn/numeric.hpp"

#include <cmath>

#include "csnn/kernels.hpp"

namespace csnn {

std::string shape_str(const Matrix& m) {
  return std::to_string(m.rows()) + "x" + std::to_string(m.cols());
}

std::string shape_str(const Vector& v) { return std::to_string(v.size()); }

Vector matvec(const Matrix& m, const Vector& v) {
  if (m.cols() != v.size()) {
    throw DimensionError("matvec: matrix " + shape_str(m) + " incompatible with vector " +
                         shape_str(v));
  }
  Vector out(m.rows());
  kernels::matvec(m.data(), m.rows(), m.cols(), v.data(), out.data());
  return out;
}

double dot(const Vector& a, const Vector& b) {
  if (a.size() != b.size()) {
    throw DimensionError("dot: vector " + shape_str(a) + " incompatible with vector " +
                         shape_str(b));
  }
  return kernels::dot(a.data(), b.data(), a.size());
}

double squared_norm(const Vector& v) {
  return kernels::squared_norm(v.data(), v.size());
}

Vector row_squared_norms(const Matrix& m) {
  Vector out(m.rows());
  for (std::size_t i = 0; i < m.rows(); ++i) {
    out[i] = kernels::squared_norm(m.row(i), m.cols());
  }
  return out;
}

bool all_finite(const Vector& v) {
  for (double x : v) {
    if (!std::isfinite(x)) return false;
  }
  return true;
}

bool all_finite(const Matrix& m) {
  for (std::size_t i = 0; i < m.size(); ++i) {
    if (!std::isfinite(m.data()[i])) return false;
  }
  return true;
}

}  // namespace csnn
