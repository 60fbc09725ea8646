#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "csnn/errors.hpp"

namespace csnn {

using Vector = std::vector<double>;

/// Dense row-major matrix of doubles.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }

  double& operator()(std::size_t i, std::size_t j) { return data_[i * cols_ + j]; }
  double operator()(std::size_t i, std::size_t j) const { return data_[i * cols_ + j]; }

  double* row(std::size_t i) { return data_.data() + i * cols_; }
  const double* row(std::size_t i) const { return data_.data() + i * cols_; }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }

  void fill(double v) { data_.assign(data_.size(), v); }

  bool operator==(const Matrix& o) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

std::string shape_str(const Matrix& m);
std::string shape_str(const Vector& v);

/// m * v; throws DimensionError with both shapes on mismatch.
Vector matvec(const Matrix& m, const Vector& v);
double dot(const Vector& a, const Vector& b);
double squared_norm(const Vector& v);
/// Per-row squared norms of m, i.e. diag(m m^T).
Vector row_squared_norms(const Matrix& m);

bool all_finite(const Vector& v);
bool all_finite(const Matrix& m);

}  // namespace csnn
