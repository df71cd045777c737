#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace snl {

// Dense row-major matrix of doubles. Entries are checked for finiteness when
// a matrix is built from external data; arithmetic results are not rechecked.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0);
  Matrix(std::size_t rows, std::size_t cols, std::vector<double> data);
  Matrix(std::initializer_list<std::initializer_list<double>> rows);

  static Matrix identity(std::size_t n);
  static Matrix column(std::span<const double> values);

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }
  bool is_square() const noexcept { return rows_ == cols_; }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

  std::span<double> data() noexcept { return data_; }
  std::span<const double> data() const noexcept { return data_; }

  Matrix transposed() const;

  Matrix& operator+=(const Matrix& other);
  Matrix& operator-=(const Matrix& other);
  Matrix& operator*=(double s);

  friend bool operator==(const Matrix&, const Matrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

Matrix operator+(Matrix a, const Matrix& b);
Matrix operator-(Matrix a, const Matrix& b);
Matrix operator*(Matrix a, double s);
Matrix operator*(double s, Matrix a);

// Standard product; each output cell is accumulated left to right over k.
Matrix matmul(const Matrix& a, const Matrix& b);
// aᵀ·b and a·bᵀ without materialising the transpose.
Matrix matmul_tn(const Matrix& a, const Matrix& b);
Matrix matmul_nt(const Matrix& a, const Matrix& b);

Matrix hadamard(const Matrix& a, const Matrix& b);

double frobenius_norm(const Matrix& a);
double trace(const Matrix& a);
double max_abs(const Matrix& a);
// max |a_ij - a_ji|
double max_asymmetry(const Matrix& a);

// ‖a − b‖_F / max(‖b‖_F, 1e-30)
double rel_error(const Matrix& a, const Matrix& b);

void require_finite(const Matrix& a, const std::string& what);
void require_same_shape(const Matrix& a, const Matrix& b, const std::string& what);

struct SpectralDecomposition {
  std::vector<double> eigenvalues;  // ascending
  Matrix eigenvectors;              // column l pairs with eigenvalues[l]
};

inline constexpr double kSymmetryTolerance = 1e-12;
inline constexpr double kJacobiOffTolerance = 1e-12;
inline constexpr int kJacobiMaxSweeps = 100;

// Cyclic Jacobi eigensolver for symmetric matrices. Output is sorted
// ascending and each eigenvector's largest-magnitude entry is positive, so
// identical inputs give bit-identical outputs.
SpectralDecomposition jacobi_eigh(const Matrix& s);

// U diag(values) Uᵀ
Matrix reconstruct(const SpectralDecomposition& d);

}  // namespace snl
