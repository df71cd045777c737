#include "snl/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "snl/error.hpp"

namespace snl {

namespace {

std::string shape_str(const Matrix& m) {
  return std::to_string(m.rows()) + "x" + std::to_string(m.cols());
}

}  // namespace

Matrix::Matrix(std::size_t rows, std::size_t cols, double fill)
    : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
  if (data_.size() != rows_ * cols_) {
    fail(ErrorCode::Shape, "matrix data length " + std::to_string(data_.size()) +
                               " does not match " + std::to_string(rows_) + "x" +
                               std::to_string(cols_));
  }
  require_finite(*this, "matrix construction");
}

Matrix::Matrix(std::initializer_list<std::initializer_list<double>> rows) {
  rows_ = rows.size();
  cols_ = rows_ == 0 ? 0 : rows.begin()->size();
  data_.reserve(rows_ * cols_);
  for (const auto& r : rows) {
    if (r.size() != cols_) fail(ErrorCode::Shape, "ragged matrix literal");
    data_.insert(data_.end(), r.begin(), r.end());
  }
  require_finite(*this, "matrix construction");
}

Matrix Matrix::identity(std::size_t n) {
  Matrix m(n, n);
  for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
  return m;
}

Matrix Matrix::column(std::span<const double> values) {
  return Matrix(values.size(), 1, std::vector<double>(values.begin(), values.end()));
}

Matrix Matrix::transposed() const {
  Matrix t(cols_, rows_);
  for (std::size_t i = 0; i < rows_; ++i)
    for (std::size_t j = 0; j < cols_; ++j) t(j, i) = (*this)(i, j);
  return t;
}

Matrix& Matrix::operator+=(const Matrix& other) {
  require_same_shape(*this, other, "matrix addition");
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += other.data_[i];
  return *this;
}

Matrix& Matrix::operator-=(const Matrix& other) {
  require_same_shape(*this, other, "matrix subtraction");
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] -= other.data_[i];
  return *this;
}

Matrix& Matrix::operator*=(double s) {
  for (double& v : data_) v *= s;
  return *this;
}

Matrix operator+(Matrix a, const Matrix& b) { return a += b; }
Matrix operator-(Matrix a, const Matrix& b) { return a -= b; }
Matrix operator*(Matrix a, double s) { return a *= s; }
Matrix operator*(double s, Matrix a) { return a *= s; }

Matrix matmul(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.rows()) {
    fail(ErrorCode::Shape, "matmul " + shape_str(a) + " by " + shape_str(b));
  }
  Matrix c(a.rows(), b.cols());
  const std::size_t n = a.rows(), m = b.cols(), inner = a.cols();
  const double* __restrict ap = a.data().data();
  const double* __restrict bp = b.data().data();
  double* __restrict cp = c.data().data();
  // i-k-j loop order: for each output cell the k contributions still arrive
  // in increasing k, so the summation order is fixed.
  for (std::size_t i = 0; i < n; ++i) {
    double* __restrict crow = cp + i * m;
    for (std::size_t k = 0; k < inner; ++k) {
      const double aik = ap[i * inner + k];
      const double* __restrict brow = bp + k * m;
      for (std::size_t j = 0; j < m; ++j) crow[j] += aik * brow[j];
    }
  }
  return c;
}

Matrix matmul_tn(const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows()) {
    fail(ErrorCode::Shape, "matmul_tn " + shape_str(a) + " by " + shape_str(b));
  }
  Matrix c(a.cols(), b.cols());
  const std::size_t n = a.cols(), m = b.cols(), inner = a.rows();
  const double* __restrict ap = a.data().data();
  const double* __restrict bp = b.data().data();
  double* __restrict cp = c.data().data();
  for (std::size_t k = 0; k < inner; ++k) {
    const double* __restrict brow = bp + k * m;
    for (std::size_t i = 0; i < n; ++i) {
      const double aki = ap[k * n + i];
      double* __restrict crow = cp + i * m;
      for (std::size_t j = 0; j < m; ++j) crow[j] += aki * brow[j];
    }
  }
  return c;
}

Matrix matmul_nt(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.cols()) {
    fail(ErrorCode::Shape, "matmul_nt " + shape_str(a) + " by " + shape_str(b));
  }
  Matrix c(a.rows(), b.rows());
  const std::size_t n = a.rows(), m = b.rows(), inner = a.cols();
  const double* __restrict ap = a.data().data();
  const double* __restrict bp = b.data().data();
  double* __restrict cp = c.data().data();
  for (std::size_t i = 0; i < n; ++i) {
    const double* arow = ap + i * inner;
    for (std::size_t j = 0; j < m; ++j) {
      const double* brow = bp + j * inner;
      double s = 0.0;
      for (std::size_t k = 0; k < inner; ++k) s += arow[k] * brow[k];
      cp[i * m + j] = s;
    }
  }
  return c;
}

Matrix hadamard(const Matrix& a, const Matrix& b) {
  require_same_shape(a, b, "hadamard product");
  Matrix c = a;
  auto cd = c.data();
  auto bd = b.data();
  for (std::size_t i = 0; i < cd.size(); ++i) cd[i] *= bd[i];
  return c;
}

double frobenius_norm(const Matrix& a) {
  double s = 0.0;
  for (double v : a.data()) s += v * v;
  return std::sqrt(s);
}

double trace(const Matrix& a) {
  if (!a.is_square()) fail(ErrorCode::Shape, "trace of non-square " + shape_str(a));
  double t = 0.0;
  for (std::size_t i = 0; i < a.rows(); ++i) t += a(i, i);
  return t;
}

double max_abs(const Matrix& a) {
  double m = 0.0;
  for (double v : a.data()) m = std::max(m, std::abs(v));
  return m;
}

double max_asymmetry(const Matrix& a) {
  if (!a.is_square()) fail(ErrorCode::Shape, "asymmetry of non-square " + shape_str(a));
  double m = 0.0;
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = i + 1; j < a.cols(); ++j) m = std::max(m, std::abs(a(i, j) - a(j, i)));
  return m;
}

double rel_error(const Matrix& a, const Matrix& b) {
  require_same_shape(a, b, "rel_error");
  double num = 0.0;
  auto ad = a.data();
  auto bd = b.data();
  for (std::size_t i = 0; i < ad.size(); ++i) {
    const double d = ad[i] - bd[i];
    num += d * d;
  }
  return std::sqrt(num) / std::max(frobenius_norm(b), 1e-30);
}

void require_finite(const Matrix& a, const std::string& what) {
  for (double v : a.data()) {
    if (!std::isfinite(v)) fail(ErrorCode::Numeric, what + ": non-finite entry");
  }
}

void require_same_shape(const Matrix& a, const Matrix& b, const std::string& what) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    fail(ErrorCode::Shape, what + ": " + shape_str(a) + " vs " + shape_str(b));
  }
}

namespace {

double off_diagonal_norm(const Matrix& a) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j)
      if (i != j) s += a(i, j) * a(i, j);
  return std::sqrt(s);
}

}  // namespace

SpectralDecomposition jacobi_eigh(const Matrix& s) {
  if (!s.is_square()) fail(ErrorCode::Shape, "jacobi_eigh on non-square " + shape_str(s));
  require_finite(s, "jacobi_eigh");
  if (const double asym = max_asymmetry(s); asym > kSymmetryTolerance) {
    fail(ErrorCode::Symmetry,
         "jacobi_eigh: input not symmetric (max |s - s^T| = " + std::to_string(asym) + ")");
  }

  const std::size_t n = s.rows();
  Matrix a = s;
  Matrix v = Matrix::identity(n);
  // Threshold scales with the input so large-norm inputs are not held to a
  // bound below their rounding floor.
  const double threshold = kJacobiOffTolerance * std::max(1.0, frobenius_norm(s));

  bool converged = off_diagonal_norm(a) < threshold;
  for (int sweep = 0; sweep < kJacobiMaxSweeps && !converged; ++sweep) {
    for (std::size_t p = 0; p + 1 < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) {
        const double apq = a(p, q);
        if (apq == 0.0) continue;
        const double theta = (a(q, q) - a(p, p)) / (2.0 * apq);
        const double t = (theta >= 0.0 ? 1.0 : -1.0) /
                         (std::abs(theta) + std::sqrt(1.0 + theta * theta));
        const double c = 1.0 / std::sqrt(1.0 + t * t);
        const double sn = t * c;

        // A <- Jᵀ A J, J rotating the (p, q) plane.
        for (std::size_t k = 0; k < n; ++k) {
          const double akp = a(k, p), akq = a(k, q);
          a(k, p) = c * akp - sn * akq;
          a(k, q) = sn * akp + c * akq;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const double apk = a(p, k), aqk = a(q, k);
          a(p, k) = c * apk - sn * aqk;
          a(q, k) = sn * apk + c * aqk;
        }
        a(p, q) = 0.0;
        a(q, p) = 0.0;
        for (std::size_t k = 0; k < n; ++k) {
          const double vkp = v(k, p), vkq = v(k, q);
          v(k, p) = c * vkp - sn * vkq;
          v(k, q) = sn * vkp + c * vkq;
        }
      }
    }
    converged = off_diagonal_norm(a) < threshold;
  }
  if (!converged) {
    fail(ErrorCode::Convergence,
         "jacobi_eigh did not converge in " + std::to_string(kJacobiMaxSweeps) + " sweeps");
  }

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t i, std::size_t j) { return a(i, i) < a(j, j); });

  SpectralDecomposition out;
  out.eigenvalues.resize(n);
  out.eigenvectors = Matrix(n, n);
  for (std::size_t l = 0; l < n; ++l) {
    const std::size_t src = order[l];
    out.eigenvalues[l] = a(src, src);

    double norm = 0.0;
    double peak = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
      norm += v(k, src) * v(k, src);
      peak = std::max(peak, std::abs(v(k, src)));
    }
    norm = std::sqrt(norm);
    // Near-ties (within rounding) resolve to the lowest index.
    std::size_t argmax = 0;
    while (std::abs(v(argmax, src)) < peak * (1.0 - 1e-12)) ++argmax;
    const double sign = v(argmax, src) < 0.0 ? -1.0 : 1.0;
    for (std::size_t k = 0; k < n; ++k) out.eigenvectors(k, l) = sign * v(k, src) / norm;
  }
  return out;
}

Matrix reconstruct(const SpectralDecomposition& d) {
  const Matrix& u = d.eigenvectors;
  Matrix scaled = u;
  for (std::size_t i = 0; i < u.rows(); ++i)
    for (std::size_t l = 0; l < u.cols(); ++l) scaled(i, l) *= d.eigenvalues[l];
  return matmul_nt(scaled, u);
}

}  // namespace snl
