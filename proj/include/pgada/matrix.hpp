#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <vector>

namespace pgada {

using Vector = std::vector<double>;

// Dense row-major matrix of doubles. Construction from explicit data rejects
// non-finite entries; zero-filled construction is always valid.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0);
  Matrix(std::size_t rows, std::size_t cols, std::vector<double> data);
  Matrix(std::initializer_list<std::initializer_list<double>> rows);

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  double operator()(std::size_t r, std::size_t c) const noexcept {
    return data_[r * cols_ + c];
  }
  double& operator()(std::size_t r, std::size_t c) noexcept {
    return data_[r * cols_ + c];
  }

  std::span<const double> row(std::size_t r) const noexcept {
    return {data_.data() + r * cols_, cols_};
  }
  std::span<double> row(std::size_t r) noexcept {
    return {data_.data() + r * cols_, cols_};
  }

  const std::vector<double>& data() const noexcept { return data_; }
  std::vector<double>& data() noexcept { return data_; }

  Matrix transposed() const;
  bool all_finite() const noexcept;

  friend bool operator==(const Matrix&, const Matrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

// Throws NumericError naming `what` if any entry is NaN or infinite.
void require_finite(const Matrix& m, const char* what);
void require_finite(std::span<const double> v, const char* what);

// out = a * b^T, the layout used by affine layers (weights are out x in).
Matrix matmul_transb(const Matrix& a, const Matrix& b);
// out = a * b
Matrix matmul(const Matrix& a, const Matrix& b);
// out = a^T * b
Matrix matmul_transa(const Matrix& a, const Matrix& b);

Matrix vstack(const Matrix& top, const Matrix& bottom);
Matrix select_rows(const Matrix& m, std::span<const std::size_t> idx);

double max_abs_diff(const Matrix& a, const Matrix& b);

}  // namespace pgada
