#include "snl/spectral.hpp"

#include <cmath>
#include <string>

#include "snl/error.hpp"

namespace snl {

FilterSpec FilterSpec::scalar(std::vector<double> theta, Basis basis) {
  FilterSpec s;
  s.order = theta.size();
  s.theta = std::move(theta);
  s.basis = basis;
  return s;
}

FilterSpec FilterSpec::multichannel(std::vector<Matrix> weights) {
  FilterSpec s;
  s.order = weights.size();
  s.weights = std::move(weights);
  return s;
}

void FilterSpec::validate() const {
  if (order < 1) fail(ErrorCode::Spec, "filter order must be at least 1");
  if (theta.empty() == weights.empty()) {
    fail(ErrorCode::Spec, "filter needs exactly one of theta or weights");
  }
  const std::size_t available = is_multichannel() ? weights.size() : theta.size();
  if (order > available) {
    fail(ErrorCode::Spec, "filter order " + std::to_string(order) + " exceeds " +
                              std::to_string(available) + " supplied coefficients");
  }
  for (const Matrix& w : weights) {
    if (w.rows() != weights.front().rows() || w.cols() != weights.front().cols()) {
      fail(ErrorCode::Spec, "filter weight matrices differ in shape");
    }
  }
}

void require_orthonormal(const Matrix& u, double tol) {
  if (!u.is_square()) fail(ErrorCode::Precondition, "basis must be square");
  const Matrix gram = matmul_tn(u, u);
  for (std::size_t i = 0; i < gram.rows(); ++i) {
    for (std::size_t j = 0; j < gram.cols(); ++j) {
      const double expect = i == j ? 1.0 : 0.0;
      if (std::abs(gram(i, j) - expect) > tol) {
        fail(ErrorCode::Precondition, "basis is not orthonormal (UᵀU deviates by " +
                                          std::to_string(std::abs(gram(i, j) - expect)) + ")");
      }
    }
  }
}

Matrix gft(const Matrix& u, const Matrix& z) {
  require_orthonormal(u);
  return matmul_tn(u, z);
}

Matrix inverse_gft(const Matrix& u, const Matrix& z_hat) {
  require_orthonormal(u);
  return matmul(u, z_hat);
}

Matrix apply_generalized_filter(const Matrix& u, std::span<const double> omega, const Matrix& z) {
  if (omega.size() != u.cols() || z.rows() != u.rows()) {
    fail(ErrorCode::Shape, "generalized filter: response length " +
                               std::to_string(omega.size()) + " vs basis " +
                               std::to_string(u.cols()) + ", signal length " +
                               std::to_string(z.rows()));
  }
  Matrix spec = gft(u, z);
  for (std::size_t l = 0; l < spec.rows(); ++l)
    for (double& v : spec.row(l)) v *= omega[l];
  return matmul(u, spec);
}

std::vector<Matrix> cheb_recursion(const Matrix& l_tilde, std::size_t k) {
  if (!l_tilde.is_square()) fail(ErrorCode::Shape, "cheb_recursion: operator is not square");
  if (k < 1) fail(ErrorCode::Spec, "cheb_recursion: k must be at least 1");
  std::vector<Matrix> t;
  t.reserve(k);
  t.push_back(Matrix::identity(l_tilde.rows()));
  if (k > 1) t.push_back(l_tilde);
  for (std::size_t i = 2; i < k; ++i) t.push_back(2.0 * matmul(l_tilde, t[i - 1]) - t[i - 2]);
  return t;
}

Matrix chebyshev_filter_apply(const Matrix& l_tilde, const Matrix& z,
                              std::span<const double> theta_hat) {
  if (theta_hat.empty()) fail(ErrorCode::Spec, "chebyshev filter needs at least one coefficient");
  Matrix prev = z;
  Matrix out = z * theta_hat[0];
  if (theta_hat.size() == 1) return out;
  Matrix cur = matmul(l_tilde, z);
  out += cur * theta_hat[1];
  for (std::size_t k = 2; k < theta_hat.size(); ++k) {
    Matrix next = 2.0 * matmul(l_tilde, cur) - prev;
    out += next * theta_hat[k];
    prev = std::move(cur);
    cur = std::move(next);
  }
  return out;
}

std::vector<double> chebyshev_to_monomial(std::span<const double> theta_hat) {
  const std::size_t k = theta_hat.size();
  std::vector<double> theta(k, 0.0);
  if (k == 0) return theta;
  // Coefficients of T_i(−a) in powers of a, built with the same recursion.
  std::vector<double> prev(k, 0.0), cur(k, 0.0);
  prev[0] = 1.0;
  theta[0] += theta_hat[0];
  if (k == 1) return theta;
  cur[1] = -1.0;
  for (std::size_t j = 0; j < k; ++j) theta[j] += theta_hat[1] * cur[j];
  for (std::size_t i = 2; i < k; ++i) {
    std::vector<double> next(k, 0.0);
    for (std::size_t j = 0; j + 1 < k; ++j) next[j + 1] = -2.0 * cur[j];
    for (std::size_t j = 0; j < k; ++j) next[j] -= prev[j];
    for (std::size_t j = 0; j < k; ++j) theta[j] += theta_hat[i] * next[j];
    prev = std::move(cur);
    cur = std::move(next);
  }
  return theta;
}

Matrix poly_filter_apply(const AffinityMatrix& a, const Matrix& z, const FilterSpec& spec) {
  spec.validate();
  if (spec.basis != Basis::Monomial) {
    fail(ErrorCode::Spec, "poly_filter_apply expects a monomial-basis filter");
  }
  if (a.normalization == Normalization::None) {
    fail(ErrorCode::Precondition, "poly_filter_apply expects a normalized affinity");
  }
  const Matrix& am = a.values;
  if (!am.is_square() || am.rows() != z.rows()) {
    fail(ErrorCode::Shape, "poly_filter_apply: affinity and signal sizes differ");
  }

  Matrix power = z;
  if (spec.is_multichannel()) {
    if (spec.weights.front().rows() != z.cols()) {
      fail(ErrorCode::Shape, "poly_filter_apply: weight rows do not match signal channels");
    }
    Matrix out = matmul(power, spec.weights[0]);
    for (std::size_t k = 1; k < spec.order; ++k) {
      power = matmul(am, power);
      out += matmul(power, spec.weights[k]);
    }
    return out;
  }
  Matrix out = power * spec.theta[0];
  for (std::size_t k = 1; k < spec.order; ++k) {
    power = matmul(am, power);
    out += power * spec.theta[k];
  }
  return out;
}

namespace {

SpectralDecomposition decompose_exact_symmetric(const AffinityMatrix& a) {
  const Matrix& m = a.values;
  if (!m.is_square()) fail(ErrorCode::Shape, "spectral_oracle: affinity is not square");
  for (std::size_t i = 0; i < m.rows(); ++i)
    for (std::size_t j = i + 1; j < m.cols(); ++j)
      if (m(i, j) != m(j, i)) {
        fail(ErrorCode::Precondition,
             "spectral_oracle: affinity is not exactly symmetric; a non-symmetric operator "
             "may have complex eigenvalues");
      }
  return jacobi_eigh(m);
}

}  // namespace

Matrix spectral_oracle(const AffinityMatrix& a, const Matrix& z, std::span<const double> theta) {
  if (theta.empty()) fail(ErrorCode::Spec, "spectral_oracle needs at least one coefficient");
  const SpectralDecomposition d = decompose_exact_symmetric(a);
  std::vector<double> response(d.eigenvalues.size());
  for (std::size_t l = 0; l < response.size(); ++l) {
    // Horner on p(λ) = Σ θ_k λ^k
    double p = 0.0;
    for (std::size_t k = theta.size(); k-- > 0;) p = p * d.eigenvalues[l] + theta[k];
    response[l] = p;
  }
  return apply_generalized_filter(d.eigenvectors, response, z);
}

Matrix spectral_oracle(const AffinityMatrix& a, const Matrix& z, const FilterSpec& spec) {
  spec.validate();
  if (!spec.is_multichannel()) {
    return spectral_oracle(a, z, std::span<const double>(spec.theta.data(), spec.order));
  }
  const SpectralDecomposition d = decompose_exact_symmetric(a);
  Matrix out(z.rows(), spec.weights.front().cols());
  std::vector<double> response(d.eigenvalues.size(), 1.0);
  for (std::size_t k = 0; k < spec.order; ++k) {
    out += apply_generalized_filter(d.eigenvectors, response, matmul(z, spec.weights[k]));
    for (std::size_t l = 0; l < response.size(); ++l) response[l] *= d.eigenvalues[l];
  }
  return out;
}

}  // namespace snl
