#include <cmath>
#include <sstream>

#include "snl/linalg.hpp"
#include "snl/matrix_io.hpp"
#include "test_support.hpp"

namespace snl {
namespace {

using test::code_of;
using test::random_matrix;
using test::random_symmetric;

TEST(Matrix, RejectsNonFiniteAndBadLength) {
  EXPECT_EQ(code_of([] { Matrix(1, 2, std::vector<double>{1.0, NAN}); }), ErrorCode::Numeric);
  EXPECT_EQ(code_of([] { Matrix(2, 2, std::vector<double>{1.0}); }), ErrorCode::Shape);
  EXPECT_EQ(code_of([] { Matrix({{1.0, 2.0}, {3.0}}); }), ErrorCode::Shape);
}

TEST(Matmul, IdentityLeavesMatrixUnchanged) {
  const Matrix b{{1, 2}, {3, 4}};
  EXPECT_EQ(matmul(Matrix::identity(2), b), b);
}

TEST(Matmul, AnnihilatingPair) {
  EXPECT_EQ(matmul(Matrix{{1, 0}, {0, 0}}, Matrix{{0, 0}, {0, 1}}), Matrix(2, 2));
}

TEST(Matmul, MatchesTripleLoopExactly) {
  const Matrix a = random_matrix(3, 4, 1), b = random_matrix(4, 2, 2);
  Matrix expected(3, 2);
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 2; ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < 4; ++k) s += a(i, k) * b(k, j);
      expected(i, j) = s;
    }
  EXPECT_EQ(matmul(a, b), expected);
}

TEST(Matmul, TransposedVariantsAgree) {
  const Matrix a = random_matrix(5, 3, 3), b = random_matrix(5, 4, 4), c = random_matrix(6, 3, 5);
  EXPECT_EQ(matmul_tn(a, b), matmul(a.transposed(), b));
  EXPECT_EQ(matmul_nt(a, c), matmul(a, c.transposed()));
}

TEST(Matmul, ShapeMismatch) {
  EXPECT_EQ(code_of([] { matmul(Matrix(2, 3), Matrix(2, 3)); }), ErrorCode::Shape);
}

TEST(Matmul, AssociativeOnRandomMatrices) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const std::size_t n = 8 + 6 * seed;
    const Matrix a = random_matrix(n, n, 3 * seed), b = random_matrix(n, n, 3 * seed + 1),
                 c = random_matrix(n, n, 3 * seed + 2);
    EXPECT_LE(rel_error(matmul(matmul(a, b), c), matmul(a, matmul(b, c))), 1e-12);
  }
}

TEST(RelError, Cases) {
  const Matrix a = random_matrix(3, 3, 7);
  EXPECT_EQ(rel_error(a, a), 0.0);
  EXPECT_DOUBLE_EQ(rel_error(Matrix(3, 3), a), 1.0);
  EXPECT_NEAR(rel_error(Matrix{{1.1}}, Matrix{{1.0}}), 0.1, 1e-15);
  EXPECT_EQ(code_of([] { rel_error(Matrix(1, 2), Matrix(2, 1)); }), ErrorCode::Shape);
}

TEST(JacobiEigh, TwoByTwo) {
  const auto d = jacobi_eigh(Matrix{{2, 1}, {1, 2}});
  ASSERT_EQ(d.eigenvalues.size(), 2u);
  EXPECT_NEAR(d.eigenvalues[0], 1.0, 1e-14);
  EXPECT_NEAR(d.eigenvalues[1], 3.0, 1e-14);
  const double r = 1.0 / std::sqrt(2.0);
  test::expect_near_matrix(d.eigenvectors, Matrix{{r, r}, {-r, r}}, 1e-14);
}

TEST(JacobiEigh, Identity) {
  const auto d = jacobi_eigh(Matrix::identity(5));
  for (double l : d.eigenvalues) EXPECT_EQ(l, 1.0);
  EXPECT_LE(rel_error(matmul_tn(d.eigenvectors, d.eigenvectors), Matrix::identity(5)), 1e-14);
  for (std::size_t l = 0; l < 5; ++l) {
    double peak = 0.0;
    for (std::size_t i = 0; i < 5; ++i)
      if (std::abs(d.eigenvectors(i, l)) > std::abs(peak)) peak = d.eigenvectors(i, l);
    EXPECT_GT(peak, 0.0);
  }
}

TEST(JacobiEigh, RandomReconstructionAndInvariants) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const std::size_t n = 2 + seed % 15;
    const Matrix s = random_symmetric(n, 100 + seed);
    const auto d = jacobi_eigh(s);
    EXPECT_LE(rel_error(reconstruct(d), s), 1e-10);
    EXPECT_LE(rel_error(matmul_tn(d.eigenvectors, d.eigenvectors), Matrix::identity(n)), 1e-10);
    for (std::size_t l = 1; l < n; ++l) EXPECT_LE(d.eigenvalues[l - 1], d.eigenvalues[l]);
    double sum = 0.0;
    for (double l : d.eigenvalues) sum += l;
    EXPECT_LE(std::abs(sum - trace(s)), 1e-9 * std::max(1.0, std::abs(trace(s))));
    for (std::size_t l = 0; l < n; ++l) {
      double peak = 0.0;
      for (std::size_t i = 0; i < n; ++i)
        if (std::abs(d.eigenvectors(i, l)) > std::abs(peak) + 1e-12) peak = d.eigenvectors(i, l);
      EXPECT_GT(peak, 0.0);
    }
  }
}

TEST(JacobiEigh, EigenpairsSatisfyDefinition) {
  const Matrix s = random_symmetric(8, 42);
  const auto d = jacobi_eigh(s);
  for (std::size_t l = 0; l < 8; ++l) {
    for (std::size_t i = 0; i < 8; ++i) {
      double su = 0.0;
      for (std::size_t k = 0; k < 8; ++k) su += s(i, k) * d.eigenvectors(k, l);
      EXPECT_NEAR(su, d.eigenvalues[l] * d.eigenvectors(i, l), 1e-10);
    }
  }
}

TEST(JacobiEigh, BitDeterministic) {
  const Matrix s = random_symmetric(12, 9);
  const auto a = jacobi_eigh(s), b = jacobi_eigh(s);
  EXPECT_EQ(a.eigenvalues, b.eigenvalues);
  EXPECT_EQ(a.eigenvectors, b.eigenvectors);
}

TEST(JacobiEigh, Errors) {
  EXPECT_EQ(code_of([] { jacobi_eigh(Matrix{{1, 2}, {2.1, 1}}); }), ErrorCode::Symmetry);
  EXPECT_EQ(code_of([] { jacobi_eigh(Matrix(2, 3)); }), ErrorCode::Shape);
}

TEST(MatrixIo, CsvRoundTripIsExact) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    Matrix m = random_matrix(4 + seed, 3, seed, -1e6, 1e6);
    m(0, 0) = 1e-300;
    m(1, 1) = -0.1;
    std::stringstream ss;
    write_csv(ss, m);
    EXPECT_EQ(read_csv(ss), m);
  }
}

TEST(MatrixIo, BinaryRoundTripAndLayout) {
  const Matrix m{{1.5, -2.0, 3.25}};
  std::stringstream ss;
  write_binary(ss, m);
  const std::string bytes = ss.str();
  ASSERT_EQ(bytes.size(), 8u + 16u + 24u);
  EXPECT_EQ(bytes.substr(0, 8), "SNLMAT01");
  EXPECT_EQ(static_cast<unsigned char>(bytes[8]), 1u);   // rows, little-endian
  EXPECT_EQ(static_cast<unsigned char>(bytes[16]), 3u);  // cols
  // 1.5 = 0x3FF8000000000000, little-endian: last byte 0x3F.
  EXPECT_EQ(static_cast<unsigned char>(bytes[24 + 7]), 0x3Fu);
  EXPECT_EQ(static_cast<unsigned char>(bytes[24 + 6]), 0xF8u);
  EXPECT_EQ(read_binary(ss), m);
}

TEST(MatrixIo, RejectsMalformedInput) {
  std::stringstream ragged("1,2\n3\n");
  EXPECT_EQ(code_of([&] { read_csv(ragged); }), ErrorCode::Io);
  std::stringstream junk("1,abc\n");
  EXPECT_EQ(code_of([&] { read_csv(junk); }), ErrorCode::Io);
  std::stringstream truncated(std::string("SNLMAT01") + std::string(4, '\0'));
  EXPECT_EQ(code_of([&] { read_binary(truncated); }), ErrorCode::Io);
}

}  // namespace
}  // namespace snl
