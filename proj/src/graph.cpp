#include "snl/graph.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "snl/error.hpp"

namespace snl {

FeatureMap::FeatureMap(std::size_t height, std::size_t width, Matrix values)
    : height_(height), width_(width), values_(std::move(values)) {
  if (height_ == 0 || width_ == 0) fail(ErrorCode::Shape, "feature map grid must be non-empty");
  if (values_.rows() != height_ * width_) {
    fail(ErrorCode::Shape, "feature map has " + std::to_string(values_.rows()) +
                               " rows for a " + std::to_string(height_) + "x" +
                               std::to_string(width_) + " grid");
  }
  require_finite(values_, "feature map");
}

std::string_view to_string(Kernel k) noexcept {
  return k == Kernel::Dot ? "dot" : "exp_dot";
}

std::string_view to_string(Normalization n) noexcept {
  switch (n) {
    case Normalization::None: return "none";
    case Normalization::RandomWalk: return "random_walk";
    case Normalization::Symmetric: return "symmetric";
  }
  return "none";
}

Kernel parse_kernel(std::string_view name) {
  if (name == "dot") return Kernel::Dot;
  if (name == "exp_dot") return Kernel::ExpDot;
  fail(ErrorCode::Config, "unknown kernel '" + std::string(name) + "'");
}

AffinityMatrix compute_affinity(const Matrix& phi, const Matrix& psi, Kernel kernel) {
  require_same_shape(phi, psi, "compute_affinity");
  AffinityMatrix out;
  out.kernel = kernel;
  out.values = matmul_nt(phi, psi);
  if (kernel == Kernel::ExpDot) {
    const double scale = 1.0 / std::sqrt(static_cast<double>(std::max<std::size_t>(phi.cols(), 1)));
    for (double& v : out.values.data()) {
      const double e = v * scale;
      if (e > kMaxExponent) {
        fail(ErrorCode::Overflow, "exp_dot exponent " + std::to_string(e) + " exceeds " +
                                      std::to_string(kMaxExponent));
      }
      v = std::exp(e);
    }
  }
  return out;
}

AffinityMatrix symmetrize(const AffinityMatrix& m) {
  if (!m.values.is_square()) fail(ErrorCode::Shape, "symmetrize: affinity is not square");
  if (m.normalization != Normalization::None) {
    fail(ErrorCode::Precondition, "symmetrize expects an unnormalized affinity");
  }
  AffinityMatrix out = m;
  const std::size_t n = m.values.rows();
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      const double v = 0.5 * (m.values(i, j) + m.values(j, i));
      out.values(i, j) = v;
      out.values(j, i) = v;
    }
  }
  out.symmetrized = true;
  return out;
}

AffinityMatrix apply_mask(const AffinityMatrix& m, const Matrix& mask) {
  AffinityMatrix out = m;
  out.values = hadamard(m.values, mask);
  out.mask_applied = true;
  return out;
}

AffinityMatrix normalize(const AffinityMatrix& m, Normalization mode) {
  const Matrix& v = m.values;
  if (!v.is_square()) fail(ErrorCode::Shape, "normalize: affinity is not square");
  if (m.normalization != Normalization::None) {
    fail(ErrorCode::Precondition, "normalize: affinity already normalized");
  }
  if (mode == Normalization::Symmetric && !m.symmetrized) {
    fail(ErrorCode::Precondition, "symmetric normalization requires a symmetrized affinity");
  }
  const std::size_t n = v.rows();
  std::vector<double> degree(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      if (v(i, j) < 0.0) {
        fail(ErrorCode::KernelDomain,
             "normalize: negative affinity at (" + std::to_string(i) + "," + std::to_string(j) +
                 "); degree normalization needs a nonnegative kernel such as exp_dot");
      }
      degree[i] += v(i, j);
    }
    if (!(degree[i] > kMinDegree)) {
      fail(ErrorCode::DegenerateVertex, "normalize: vertex " + std::to_string(i) +
                                            " has degree " + std::to_string(degree[i]));
    }
  }

  AffinityMatrix out = m;
  out.normalization = mode;
  if (mode == Normalization::RandomWalk) {
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) out.values(i, j) = v(i, j) / degree[i];
  } else if (mode == Normalization::Symmetric) {
    std::vector<double> inv_sqrt(n);
    for (std::size_t i = 0; i < n; ++i) inv_sqrt[i] = 1.0 / std::sqrt(degree[i]);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = i; j < n; ++j) {
        const double a = v(i, j) * inv_sqrt[i] * inv_sqrt[j];
        out.values(i, j) = a;
        out.values(j, i) = a;
      }
    }
  } else {
    fail(ErrorCode::Precondition, "normalize: mode must be random_walk or symmetric");
  }
  return out;
}

Matrix scaled_laplacian(const AffinityMatrix& a) {
  if (a.normalization == Normalization::None) {
    fail(ErrorCode::Precondition, "scaled_laplacian requires a normalized affinity");
  }
  return a.values * -1.0;
}

Matrix crisscross_mask(std::size_t height, std::size_t width) {
  if (height == 0 || width == 0) fail(ErrorCode::Shape, "crisscross_mask: empty grid");
  const std::size_t n = height * width;
  Matrix c(n, n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      if (i / width == j / width || i % width == j % width) c(i, j) = 1.0;
  return c;
}

Matrix flatten_spatial_channel(const Matrix& z) {
  const std::size_t n = z.rows();
  Matrix v(n * z.cols(), 1);
  for (std::size_t j = 0; j < z.cols(); ++j)
    for (std::size_t i = 0; i < n; ++i) v(i + j * n, 0) = z(i, j);
  return v;
}

Matrix unflatten_spatial_channel(const Matrix& v, std::size_t rows, std::size_t cols) {
  if (v.cols() != 1 || v.rows() != rows * cols) {
    fail(ErrorCode::Shape, "unflatten: column of length " + std::to_string(v.rows()) +
                               " cannot form " + std::to_string(rows) + "x" +
                               std::to_string(cols));
  }
  Matrix z(rows, cols);
  for (std::size_t j = 0; j < cols; ++j)
    for (std::size_t i = 0; i < rows; ++i) z(i, j) = v(i + j * rows, 0);
  return z;
}

std::string encode_pgm_heatmap(std::span<const double> row, std::size_t height,
                               std::size_t width) {
  if (row.size() != height * width) {
    fail(ErrorCode::Shape, "heatmap row length does not match the grid");
  }
  std::string out = "P5\n" + std::to_string(width) + " " + std::to_string(height) + "\n255\n";
  const auto [lo, hi] = std::minmax_element(row.begin(), row.end());
  const double range = row.empty() ? 0.0 : *hi - *lo;
  for (double v : row) {
    const double t = range > 1e-12 * std::abs(*hi) ? (v - *lo) / range : 0.0;
    out.push_back(static_cast<char>(static_cast<unsigned char>(std::lround(t * 255.0))));
  }
  return out;
}

}  // namespace snl
