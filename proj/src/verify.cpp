#include "snl/verify.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <functional>
#include <numeric>
#include <sstream>

#include "snl/error.hpp"
#include "snl/matrix_io.hpp"
#include "snl/spectral.hpp"

namespace snl {

Matrix random_matrix(Rng& rng, std::size_t rows, std::size_t cols, double lo, double hi) {
  Matrix m(rows, cols);
  for (double& v : m.data()) v = rng.uniform(lo, hi);
  return m;
}

Matrix random_symmetric(Rng& rng, std::size_t n) {
  Matrix m(n, n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i; j < n; ++j) m(i, j) = m(j, i) = rng.uniform(-1.0, 1.0);
  return m;
}

AffinityMatrix random_symmetric_affinity(Rng& rng, std::size_t n, std::size_t c_s,
                                         double feature_scale) {
  const Matrix phi = random_matrix(rng, n, c_s, -feature_scale, feature_scale);
  const Matrix psi = random_matrix(rng, n, c_s, -feature_scale, feature_scale);
  return normalize(symmetrize(compute_affinity(phi, psi, Kernel::ExpDot)),
                   Normalization::Symmetric);
}

FeatureMap random_feature_map(Rng& rng, std::size_t height, std::size_t width,
                              std::size_t channels, double scale) {
  return FeatureMap(height, width, random_matrix(rng, height * width, channels, -scale, scale));
}

namespace {

// Tracks the worst observed value of a metric against a fixed bound.
struct Tally {
  SuiteResult r;
  Tally(std::string name, double tol) {
    r.name = std::move(name);
    r.tolerance = tol;
    r.passed = true;
  }
  void observe(double value) {
    ++r.cases;
    r.max_error = std::max(r.max_error, value);
    if (!(value <= r.tolerance)) r.passed = false;
  }
  void require(bool ok, const std::string& why) {
    ++r.cases;
    if (!ok) {
      r.passed = false;
      if (r.detail.empty()) r.detail = why;
    }
  }
};

SuiteResult matmul_associativity(std::uint64_t seed) {
  Tally t("linalg.matmul_associativity", 1e-12);
  Rng rng(seed);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t p = 1 + rng.index(64), q = 1 + rng.index(64), r = 1 + rng.index(64),
                      s = 1 + rng.index(64);
    const Matrix a = random_matrix(rng, p, q), b = random_matrix(rng, q, r),
                 c = random_matrix(rng, r, s);
    t.observe(rel_error(matmul(matmul(a, b), c), matmul(a, matmul(b, c))));
  }
  return t.r;
}

SuiteResult eigh_reconstruction(std::uint64_t seed) {
  Tally t("linalg.eigh_reconstruction", 1e-10);
  Rng rng(seed);
  for (std::size_t n : {2, 5, 8, 16, 32}) {
    for (int trial = 0; trial < 3; ++trial) {
      const Matrix s = random_symmetric(rng, n);
      const SpectralDecomposition d = jacobi_eigh(s);
      t.observe(rel_error(reconstruct(d), s));
      t.observe(rel_error(matmul_tn(d.eigenvectors, d.eigenvectors), Matrix::identity(n)));
      const double sum = std::accumulate(d.eigenvalues.begin(), d.eigenvalues.end(), 0.0);
      t.observe(std::abs(sum - trace(s)) / std::max(1.0, std::abs(trace(s))));
      t.require(std::is_sorted(d.eigenvalues.begin(), d.eigenvalues.end()), "not ascending");
    }
  }
  return t.r;
}

SuiteResult eigh_determinism(std::uint64_t seed) {
  Tally t("linalg.eigh_determinism", 0.0);
  Rng rng(seed);
  for (int trial = 0; trial < 5; ++trial) {
    const Matrix s = random_symmetric(rng, 12);
    const SpectralDecomposition a = jacobi_eigh(s), b = jacobi_eigh(s);
    t.require(a.eigenvalues == b.eigenvalues && a.eigenvectors == b.eigenvectors,
              "repeated decomposition differs");
    for (std::size_t l = 0; l < 12; ++l) {
      double peak = 0.0, signed_peak = 0.0;
      for (std::size_t k = 0; k < 12; ++k) {
        if (std::abs(a.eigenvectors(k, l)) > peak * (1.0 + 1e-12)) {
          peak = std::abs(a.eigenvectors(k, l));
          signed_peak = a.eigenvectors(k, l);
        }
      }
      t.require(signed_peak > 0.0, "sign convention violated");
    }
  }
  return t.r;
}

SuiteResult row_stochastic(std::uint64_t seed) {
  Tally t("graph.row_stochastic", 1e-10);
  Rng rng(seed);
  for (std::size_t n : {4, 9, 16, 32}) {
    const AffinityMatrix m =
        compute_affinity(random_matrix(rng, n, 3), random_matrix(rng, n, 3), Kernel::ExpDot);
    const AffinityMatrix a = normalize(m, Normalization::RandomWalk);
    const Matrix ones(n, 1, 1.0);
    const Matrix out = matmul(a.values, ones);
    for (double v : out.data()) t.observe(std::abs(v - 1.0));
  }
  return t.r;
}

SuiteResult symmetric_spectrum(std::uint64_t seed) {
  Tally t("graph.symmetric_spectrum", 1e-9);
  Rng rng(seed);
  for (std::size_t n : {4, 8, 16, 32}) {
    const AffinityMatrix a = random_symmetric_affinity(rng, n, 3, 1.5);
    t.require(max_asymmetry(a.values) <= 1e-12, "symmetric normalization not symmetric");
    for (double l : jacobi_eigh(a.values).eigenvalues)
      t.observe(std::max(0.0, std::abs(l) - 1.0));
  }
  return t.r;
}

// D^{-1/2} M̂ D^{-1/2} = D^{1/2} (D⁻¹M̂) D^{-1/2}: the two normalizations are
// similar, checked both entrywise and through the power traces tr(A^k).
SuiteResult normalization_similarity(std::uint64_t seed) {
  Tally t("graph.normalization_similarity", 1e-8);
  Rng rng(seed);
  for (std::size_t n : {6, 12, 24, 32}) {
    const AffinityMatrix sym_m = symmetrize(
        compute_affinity(random_matrix(rng, n, 3), random_matrix(rng, n, 3), Kernel::ExpDot));
    const AffinityMatrix sym = normalize(sym_m, Normalization::Symmetric);
    const AffinityMatrix rw = normalize(sym_m, Normalization::RandomWalk);
    std::vector<double> d(n, 0.0);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) d[i] += sym_m.values(i, j);
    Matrix similar(n, n);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j)
        similar(i, j) = std::sqrt(d[i]) * rw.values(i, j) / std::sqrt(d[j]);
    t.observe(rel_error(similar, sym.values));
    Matrix p_sym = sym.values, p_rw = rw.values;
    for (int k = 1; k <= 6; ++k) {
      t.observe(std::abs(trace(p_sym) - trace(p_rw)) / std::max(1.0, std::abs(trace(p_sym))));
      p_sym = matmul(p_sym, sym.values);
      p_rw = matmul(p_rw, rw.values);
    }
  }
  return t.r;
}

SuiteResult crisscross_structure(std::uint64_t) {
  Tally t("graph.crisscross_structure", 0.0);
  for (std::size_t h = 1; h <= 6; ++h) {
    for (std::size_t w = 1; w <= 6; ++w) {
      const Matrix c = crisscross_mask(h, w);
      bool ok = c == c.transposed();
      for (std::size_t i = 0; i < h * w; ++i) {
        double sum = 0.0;
        for (double v : c.row(i)) sum += v;
        ok = ok && sum == static_cast<double>(h + w - 1) && c(i, i) == 1.0;
      }
      t.require(ok, "mask structure wrong for " + std::to_string(h) + "x" + std::to_string(w));
    }
  }
  return t.r;
}

SuiteResult gft_roundtrip(std::uint64_t seed) {
  Tally t("spectral.gft_roundtrip", 1e-12);
  Rng rng(seed);
  for (std::size_t n : {4, 16, 32}) {
    const SpectralDecomposition d = jacobi_eigh(random_symmetric(rng, n));
    const Matrix z = random_matrix(rng, n, 3);
    const Matrix z_hat = gft(d.eigenvectors, z);
    t.observe(rel_error(inverse_gft(d.eigenvectors, z_hat), z));
    t.observe(std::abs(frobenius_norm(z_hat) - frobenius_norm(z)) / frobenius_norm(z));
  }
  return t.r;
}

SuiteResult spatial_spectral_equivalence(std::uint64_t seed) {
  Tally t("spectral.spatial_spectral_equivalence", 1e-8);
  Rng rng(seed);
  for (std::size_t n : {8, 16, 32, 64}) {
    for (std::size_t k = 1; k <= 6; ++k) {
      const AffinityMatrix a = random_symmetric_affinity(rng, n);
      const Matrix z = random_matrix(rng, n, 3);
      std::vector<double> theta(k);
      for (double& v : theta) v = rng.uniform(-1.0, 1.0);
      const FilterSpec scalar = FilterSpec::scalar(theta);
      t.observe(rel_error(poly_filter_apply(a, z, scalar), spectral_oracle(a, z, scalar)));
      std::vector<Matrix> w;
      for (std::size_t i = 0; i < k; ++i) w.push_back(random_matrix(rng, 3, 2));
      const FilterSpec multi = FilterSpec::multichannel(w);
      t.observe(rel_error(poly_filter_apply(a, z, multi), spectral_oracle(a, z, multi)));
    }
  }
  return t.r;
}

SuiteResult chebyshev_basis_change(std::uint64_t seed) {
  Tally t("spectral.chebyshev_basis_change", 1e-8);
  Rng rng(seed);
  for (std::size_t n : {8, 16, 32}) {
    for (std::size_t k = 1; k <= 6; ++k) {
      const AffinityMatrix a = random_symmetric_affinity(rng, n);
      const Matrix z = random_matrix(rng, n, 2);
      std::vector<double> theta_hat(k);
      for (double& v : theta_hat) v = rng.uniform(-1.0, 1.0);
      const Matrix cheb = chebyshev_filter_apply(scaled_laplacian(a), z, theta_hat);
      const Matrix mono =
          poly_filter_apply(a, z, FilterSpec::scalar(chebyshev_to_monomial(theta_hat)));
      t.observe(rel_error(mono, cheb));
    }
  }
  return t.r;
}

SuiteResult chebyshev_closed_form(std::uint64_t seed) {
  Tally t("spectral.chebyshev_closed_form", 1e-8);
  Rng rng(seed);
  for (std::size_t n : {6, 12, 24}) {
    const AffinityMatrix a = random_symmetric_affinity(rng, n);
    const Matrix l_tilde = scaled_laplacian(a);
    const SpectralDecomposition d = jacobi_eigh(l_tilde);
    const auto terms = cheb_recursion(l_tilde, 7);
    for (std::size_t k = 0; k < terms.size(); ++k) {
      SpectralDecomposition closed = d;
      for (double& l : closed.eigenvalues)
        l = std::cos(static_cast<double>(k) * std::acos(std::clamp(l, -1.0, 1.0)));
      t.observe(rel_error(terms[k], reconstruct(closed)));
    }
  }
  return t.r;
}

SuiteResult graph_automorphism(std::uint64_t seed) {
  Tally t("spectral.graph_automorphism", 1e-10);
  Rng rng(seed);
  for (std::size_t n : {6, 10, 16}) {
    // Circulant affinity: the cyclic shift is an automorphism.
    std::vector<double> profile(n / 2 + 1);
    for (double& v : profile) v = rng.uniform(0.1, 1.0);
    AffinityMatrix m;
    m.values = Matrix(n, n);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) {
        const std::size_t d = (i + n - j) % n;
        m.values(i, j) = profile[std::min(d, n - d)];
      }
    m.symmetrized = true;
    const AffinityMatrix a = normalize(m, Normalization::Symmetric);
    const Matrix z = random_matrix(rng, n, 3);
    Matrix shifted(n, 3);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t c = 0; c < 3; ++c) shifted((i + 1) % n, c) = z(i, c);
    const FilterSpec spec = FilterSpec::scalar({0.3, -0.7, 0.5, 0.2});
    const Matrix base = poly_filter_apply(a, z, spec);
    Matrix expect(n, 3);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t c = 0; c < 3; ++c) expect((i + 1) % n, c) = base(i, c);
    t.observe(rel_error(poly_filter_apply(a, shifted, spec), expect));
  }
  return t.r;
}

SuiteResult laplacian_bound(std::uint64_t seed) {
  Tally t("spectral.laplacian_bound", 1e-9);
  Rng rng(seed);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t n = 4 + rng.index(28);
    const AffinityMatrix a = random_symmetric_affinity(rng, n, 3, 2.0);
    const Matrix l = Matrix::identity(n) - a.values;
    for (double v : jacobi_eigh(l).eigenvalues) t.observe(std::max({0.0, -v, v - 2.0}));
  }
  return t.r;
}

SuiteResult snl_symmetry(std::uint64_t seed) {
  Tally t("blocks.snl_symmetry", 0.0);
  Rng rng(seed);
  BlockConfig snl{Variant::SNL, 4, 2};
  BlockConfig nl{Variant::NL, 4, 2, 2, Kernel::Dot};
  std::size_t nl_asym = 0;
  const int trials = 100;
  for (int trial = 0; trial < trials; ++trial) {
    const FeatureMap x = random_feature_map(rng, 3, 4, 4);
    const AffinityMatrix a = build_block_affinity(x, snl, random_params(snl, rng.next()));
    t.require(a.values == a.values.transposed(), "SNL affinity not exactly symmetric");
    bool eig_ok = true;
    try {
      jacobi_eigh(a.values);
    } catch (const Error&) {
      eig_ok = false;
    }
    t.require(eig_ok, "jacobi_eigh rejected an SNL affinity");
    // Positive features keep the raw dot kernel nonnegative.
    const FeatureMap xp(3, 4, random_matrix(rng, 12, 4, 0.0, 1.0));
    BlockParams pp = random_params(nl, rng.next());
    for (Matrix* m : {&pp.w_phi, &pp.w_psi})
      for (double& v : m->data()) v = std::abs(v);
    const AffinityMatrix rw = build_block_affinity(xp, nl, pp);
    if (max_asymmetry(rw.values) > kSymmetryTolerance) ++nl_asym;
  }
  const double rate = static_cast<double>(nl_asym) / trials;
  t.require(rate > 0.9, "NL random-walk affinity asymmetric on only " + format_double(rate));
  t.r.detail = t.r.detail.empty() ? "NL asymmetric rate " + format_double(rate) : t.r.detail;
  return t.r;
}

SuiteResult unification(std::uint64_t seed) {
  Tally t("blocks.unification", 1e-12);
  Rng rng(seed);
  for (Variant v : kAllVariants) {
    BlockConfig cfg{v, 4, 2, 3};
    for (int trial = 0; trial < 3; ++trial) {
      const FeatureMap x = random_feature_map(rng, 3, 3, 4);
      const BlockParams p = random_params(cfg, rng.next());
      const AffinityMatrix a = build_block_affinity(x, cfg, p);
      const FeatureMap specialized = block_forward_with_affinity(x, cfg, p, a);
      const FeatureMap generic = unified_forward(x, unified_form(x, cfg, p, a));
      t.observe(rel_error(specialized.values(), generic.values()));
    }
  }
  return t.r;
}

SuiteResult tied_weights(std::uint64_t seed) {
  Tally t("blocks.tied_weights", 1e-12);
  Rng rng(seed);
  const BlockConfig cheb{Variant::CHEB_K, 4, 2, 2};
  for (int trial = 0; trial < 5; ++trial) {
    const FeatureMap x = random_feature_map(rng, 3, 3, 4);
    for (Variant v : {Variant::NS, Variant::NL}) {
      const BlockConfig cfg{v, 4, 2};
      const BlockParams p = random_params(cfg, rng.next());
      const AffinityMatrix a = build_block_affinity(x, cfg, p);
      BlockParams q = p;
      const Matrix first = v == Variant::NS ? p.filter[0] * -1.0
                                            : Matrix(p.filter[0].rows(), p.filter[0].cols());
      q.filter = {first, p.filter[0]};
      t.observe(rel_error(block_forward_with_affinity(x, cheb, q, a).values(),
                          block_forward_with_affinity(x, cfg, p, a).values()));
    }
  }
  return t.r;
}

SuiteResult permutation_equivariance(std::uint64_t seed) {
  Tally t("blocks.permutation_equivariance", 1e-10);
  Rng rng(seed);
  const std::size_t h = 3, w = 4, n = h * w;
  auto permute_rows = [&](const Matrix& m, const std::vector<std::size_t>& perm) {
    Matrix out(m.rows(), m.cols());
    for (std::size_t i = 0; i < perm.size(); ++i)
      for (std::size_t c = 0; c < m.cols(); ++c) out(i, c) = m(perm[i], c);
    return out;
  };
  for (Variant v : {Variant::NL, Variant::NS, Variant::A2, Variant::SNL, Variant::SNL_A1,
                    Variant::SNL_A2, Variant::CC}) {
    const BlockConfig cfg{v, 4, 2};
    const FeatureMap x = random_feature_map(rng, h, w, 4);
    const BlockParams p = random_params(cfg, rng.next());
    const Matrix y = block_forward(x, cfg, p).values();
    std::vector<std::vector<std::size_t>> perms;
    if (v == Variant::CC) {
      std::vector<std::size_t> rows(n), cols(n);
      for (std::size_t i = 0; i < n; ++i) {
        const std::size_t r = i / w, c = i % w;
        rows[i] = ((r == 0 ? 2 : r == 2 ? 0 : r) * w) + c;
        cols[i] = r * w + (c == 1 ? 3 : c == 3 ? 1 : c);
      }
      perms = {rows, cols};
    } else {
      std::vector<std::size_t> perm(n);
      std::iota(perm.begin(), perm.end(), 0);
      for (std::size_t i = n - 1; i > 0; --i) std::swap(perm[i], perm[rng.index(i + 1)]);
      perms = {perm};
    }
    for (const auto& perm : perms) {
      const FeatureMap xp(h, w, permute_rows(x.values(), perm));
      t.observe(rel_error(block_forward(xp, cfg, p).values(), permute_rows(y, perm)));
    }
  }
  return t.r;
}

SuiteResult output_shape(std::uint64_t seed) {
  Tally t("blocks.output_shape", 0.0);
  Rng rng(seed);
  for (Variant v : kAllVariants) {
    for (std::size_t c_s : {1, 2, 4}) {
      const BlockConfig cfg{v, 4, c_s, 3};
      const FeatureMap x = random_feature_map(rng, 2, 5, 4);
      const FeatureMap y = block_forward(x, cfg, random_params(cfg, rng.next()));
      t.require(y.height() == 2 && y.width() == 5 && y.values().rows() == 10 &&
                    y.values().cols() == 4,
                std::string(to_string(v)) + " changed the output shape");
    }
  }
  return t.r;
}

struct Suite {
  const char* name;
  std::function<SuiteResult(std::uint64_t)> run;
};

const std::vector<Suite>& suites() {
  static const std::vector<Suite> all = {
      {"linalg.matmul_associativity", matmul_associativity},
      {"linalg.eigh_reconstruction", eigh_reconstruction},
      {"linalg.eigh_determinism", eigh_determinism},
      {"graph.row_stochastic", row_stochastic},
      {"graph.symmetric_spectrum", symmetric_spectrum},
      {"graph.normalization_similarity", normalization_similarity},
      {"graph.crisscross_structure", crisscross_structure},
      {"spectral.gft_roundtrip", gft_roundtrip},
      {"spectral.spatial_spectral_equivalence", spatial_spectral_equivalence},
      {"spectral.chebyshev_basis_change", chebyshev_basis_change},
      {"spectral.chebyshev_closed_form", chebyshev_closed_form},
      {"spectral.graph_automorphism", graph_automorphism},
      {"spectral.laplacian_bound", laplacian_bound},
      {"blocks.snl_symmetry", snl_symmetry},
      {"blocks.unification", unification},
      {"blocks.tied_weights", tied_weights},
      {"blocks.permutation_equivariance", permutation_equivariance},
      {"blocks.output_shape", output_shape},
  };
  return all;
}

}  // namespace

std::vector<std::string> verify_suite_names() {
  std::vector<std::string> names;
  for (const Suite& s : suites()) names.emplace_back(s.name);
  return names;
}

std::vector<SuiteResult> run_verify(const std::string& filter, std::uint64_t seed) {
  std::vector<SuiteResult> out;
  std::uint64_t index = 0;
  for (const Suite& s : suites()) {
    ++index;
    if (!filter.empty() && std::string(s.name).find(filter) == std::string::npos) continue;
    try {
      out.push_back(s.run(seed * 1000003ULL + index));
    } catch (const Error& e) {
      SuiteResult r;
      r.name = s.name;
      r.detail = e.what();
      out.push_back(std::move(r));
    }
  }
  if (out.empty()) fail(ErrorCode::Config, "verify filter '" + filter + "' matches no suite");
  return out;
}

bool all_passed(const std::vector<SuiteResult>& results) {
  return std::all_of(results.begin(), results.end(), [](const auto& r) { return r.passed; });
}

std::string format_verify_table(const std::vector<SuiteResult>& results) {
  std::ostringstream os;
  char line[256];
  std::snprintf(line, sizeof line, "%-40s %6s %7s %12s %10s\n", "suite", "result", "cases",
                "max_error", "tolerance");
  os << line;
  std::size_t passed = 0;
  for (const SuiteResult& r : results) {
    std::snprintf(line, sizeof line, "%-40s %6s %7zu %12.3e %10.1e", r.name.c_str(),
                  r.passed ? "pass" : "FAIL", r.cases, r.max_error, r.tolerance);
    os << line;
    if (!r.detail.empty()) os << "  " << r.detail;
    os << '\n';
    passed += r.passed ? 1 : 0;
  }
  os << passed << "/" << results.size() << " suites passed\n";
  return os.str();
}

std::string format_verify_csv(const std::vector<SuiteResult>& results) {
  std::ostringstream os;
  os << "suite,passed,cases,max_error,tolerance\n";
  for (const SuiteResult& r : results) {
    os << r.name << ',' << (r.passed ? 1 : 0) << ',' << r.cases << ','
       << format_double(r.max_error) << ',' << format_double(r.tolerance) << '\n';
  }
  return os.str();
}

}  // namespace snl
