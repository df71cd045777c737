#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "snl/graph.hpp"
#include "snl/linalg.hpp"

namespace snl {

enum class Basis { Monomial, Chebyshev };

// Polynomial graph filter of order K. Either K scalar coefficients shared by
// every channel, or K weight matrices (C_s × C_out) mixing channels per term.
struct FilterSpec {
  std::size_t order = 0;
  std::vector<double> theta;
  std::vector<Matrix> weights;
  Basis basis = Basis::Monomial;

  static FilterSpec scalar(std::vector<double> theta, Basis basis = Basis::Monomial);
  static FilterSpec multichannel(std::vector<Matrix> weights);

  bool is_multichannel() const noexcept { return !weights.empty(); }
  // Throws a spec error when the invariants do not hold.
  void validate() const;
};

inline constexpr double kOrthonormalTolerance = 1e-9;

void require_orthonormal(const Matrix& u, double tol = kOrthonormalTolerance);

// Graph Fourier transform of every column of z: Uᵀz.
Matrix gft(const Matrix& u, const Matrix& z);
Matrix inverse_gft(const Matrix& u, const Matrix& z_hat);

// U diag(ω) Uᵀ z
Matrix apply_generalized_filter(const Matrix& u, std::span<const double> omega, const Matrix& z);

// [T_0(L̃), ..., T_{k-1}(L̃)] with T_0 = I, T_1 = L̃, T_k = 2L̃T_{k-1} − T_{k-2}.
std::vector<Matrix> cheb_recursion(const Matrix& l_tilde, std::size_t k);

// Σ θ̂_k T_k(L̃) Z, applying the recursion to Z directly.
Matrix chebyshev_filter_apply(const Matrix& l_tilde, const Matrix& z,
                              std::span<const double> theta_hat);

// Coefficients θ over powers of A equivalent to θ̂ over T_k(−A).
std::vector<double> chebyshev_to_monomial(std::span<const double> theta_hat);

// Monomial-basis filter on a normalized affinity:
//   scalar:        Σ_k θ_k A^k Z
//   multichannel:  Σ_k A^k Z W_{k+1}
// Powers are applied as A·(A^{k-1}Z); A^k is never formed.
Matrix poly_filter_apply(const AffinityMatrix& a, const Matrix& z, const FilterSpec& spec);

// Same filter evaluated through the eigendecomposition of an exactly
// symmetric A: each eigenvalue λ gets the response Σ_k θ_k λ^k.
Matrix spectral_oracle(const AffinityMatrix& a, const Matrix& z, const FilterSpec& spec);
Matrix spectral_oracle(const AffinityMatrix& a, const Matrix& z, std::span<const double> theta);

}  // namespace snl
