#pragma once

#include <cmath>
#include <cstddef>
#include <cstring>
#include <limits>
#include <span>
#include <vector>

#include "vdtlab/errors.hpp"

namespace vdtlab {

// Dense row-major matrix. Rows are contiguous; row(i) exposes them as a span.
template <typename T>
class Matrix {
 public:
  Matrix() = default;
  Matrix(int rows, int cols, T fill = T{}) : rows_(rows), cols_(cols) {
    if (rows < 0 || cols < 0) throw ShapeError("matrix dimensions must be nonnegative");
    data_.assign(static_cast<std::size_t>(rows) * static_cast<std::size_t>(cols), fill);
  }

  int rows() const { return rows_; }
  int cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  T& operator()(int i, int j) { return data_[static_cast<std::size_t>(i) * cols_ + j]; }
  const T& operator()(int i, int j) const {
    return data_[static_cast<std::size_t>(i) * cols_ + j];
  }

  std::span<T> row(int i) { return {data_.data() + static_cast<std::size_t>(i) * cols_, static_cast<std::size_t>(cols_)}; }
  std::span<const T> row(int i) const {
    return {data_.data() + static_cast<std::size_t>(i) * cols_, static_cast<std::size_t>(cols_)};
  }

  T* data() { return data_.data(); }
  const T* data() const { return data_.data(); }

  void fill(T v) { std::fill(data_.begin(), data_.end(), v); }

 private:
  int rows_ = 0;
  int cols_ = 0;
  std::vector<T> data_;
};

using MatF = Matrix<float>;
using MatD = Matrix<double>;

template <typename T>
bool bits_equal(const Matrix<T>& a, const Matrix<T>& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) return false;
  if (a.size() == 0) return true;
  return std::memcmp(a.data(), b.data(), a.size() * sizeof(T)) == 0;
}

template <typename T>
bool bits_equal(const std::vector<T>& a, const std::vector<T>& b) {
  if (a.size() != b.size()) return false;
  if (a.empty()) return true;
  return std::memcmp(a.data(), b.data(), a.size() * sizeof(T)) == 0;
}

inline MatF to_f32(const MatD& m) {
  MatF r(m.rows(), m.cols());
  for (std::size_t i = 0; i < m.size(); ++i) r.data()[i] = static_cast<float>(m.data()[i]);
  return r;
}

inline MatD to_f64(const MatF& m) {
  MatD r(m.rows(), m.cols());
  for (std::size_t i = 0; i < m.size(); ++i) r.data()[i] = static_cast<double>(m.data()[i]);
  return r;
}

inline double mse(const MatD& a, const MatD& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw ShapeError("mse requires matrices of identical shape");
  if (a.size() == 0) throw ContractError("mse of empty matrices is undefined");
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a.data()[i] - b.data()[i];
    acc += d * d;
  }
  return acc / static_cast<double>(a.size());
}

// Peak signal-to-noise ratio against a given peak amplitude; infinite when
// the error is exactly zero (serialized as the string "inf" in reports).
inline double psnr_from_mse(double mse_value, double peak) {
  if (mse_value < 0.0) throw ContractError("psnr requires a nonnegative mse");
  if (mse_value == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(peak * peak / mse_value);
}

inline double max_abs(const MatD& m) {
  double r = 0.0;
  for (std::size_t i = 0; i < m.size(); ++i) r = std::max(r, std::abs(m.data()[i]));
  return r;
}

inline double max_abs_diff(const MatD& a, const MatD& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw ShapeError("max_abs_diff requires matrices of identical shape");
  double r = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) r = std::max(r, std::abs(a.data()[i] - b.data()[i]));
  return r;
}

}  // namespace vdtlab
