#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <string_view>

#include "snl/linalg.hpp"

namespace snl {

// Signal on an H×W grid: row i of `values` holds the C features of grid
// position i in row-major order.
class FeatureMap {
 public:
  FeatureMap() = default;
  FeatureMap(std::size_t height, std::size_t width, Matrix values);

  std::size_t height() const noexcept { return height_; }
  std::size_t width() const noexcept { return width_; }
  std::size_t positions() const noexcept { return height_ * width_; }
  std::size_t channels() const noexcept { return values_.cols(); }
  const Matrix& values() const noexcept { return values_; }
  Matrix& values() noexcept { return values_; }

 private:
  std::size_t height_ = 0;
  std::size_t width_ = 0;
  Matrix values_;
};

enum class Kernel { Dot, ExpDot };
enum class Normalization { None, RandomWalk, Symmetric };

std::string_view to_string(Kernel k) noexcept;
std::string_view to_string(Normalization n) noexcept;
Kernel parse_kernel(std::string_view name);

struct AffinityMatrix {
  Matrix values;
  Kernel kernel = Kernel::ExpDot;
  Normalization normalization = Normalization::None;
  bool symmetrized = false;
  bool mask_applied = false;

  std::size_t vertices() const noexcept { return values.rows(); }
};

inline constexpr double kMaxExponent = 700.0;
inline constexpr double kMinDegree = 1e-12;

// M = φψᵀ (dot) or exp(φψᵀ/√C_s) (exp_dot).
AffinityMatrix compute_affinity(const Matrix& phi, const Matrix& psi, Kernel kernel);

// (M + Mᵀ)/2, computed once per unordered pair so the result is exactly
// symmetric.
AffinityMatrix symmetrize(const AffinityMatrix& m);

// C ⊙ M
AffinityMatrix apply_mask(const AffinityMatrix& m, const Matrix& mask);

// random_walk: D⁻¹M.  symmetric: D^{-1/2} M D^{-1/2}, requires a
// symmetrized input. Negative entries raise a kernel-domain error and a row
// sum at or below kMinDegree a degenerate-vertex error.
AffinityMatrix normalize(const AffinityMatrix& m, Normalization mode);

// 2L/λ_max − I with L = I − A and λ_max fixed at 2, i.e. −A.
Matrix scaled_laplacian(const AffinityMatrix& a);

// C[i][j] = 1 iff grid positions i and j share a row or a column.
Matrix crisscross_mask(std::size_t height, std::size_t width);

// Column-major vec: entry i + j·N holds z(i, j). Returns an (N·C)×1 column.
Matrix flatten_spatial_channel(const Matrix& z);
Matrix unflatten_spatial_channel(const Matrix& v, std::size_t rows, std::size_t cols);

// Binary PGM (P5) of one attention row laid out on the grid, min-max scaled
// to 0..255. A row that is constant up to rounding maps to all zeros.
std::string encode_pgm_heatmap(std::span<const double> row, std::size_t height,
                               std::size_t width);

}  // namespace snl
