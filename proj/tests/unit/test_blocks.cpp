#include <filesystem>

#include "snl/blocks.hpp"
#include "test_support.hpp"

namespace snl {
namespace {

using test::code_of;
using test::random_matrix;

FeatureMap random_map(std::size_t h, std::size_t w, std::size_t c, std::uint64_t seed) {
  return FeatureMap(h, w, random_matrix(h * w, c, seed));
}

BlockConfig config(Variant v, std::size_t c_in = 4, std::size_t c_s = 2, std::size_t order = 3) {
  BlockConfig cfg;
  cfg.variant = v;
  cfg.c_in = c_in;
  cfg.c_s = c_s;
  cfg.order = order;
  return cfg;
}

TEST(Embed, Examples) {
  const FeatureMap x = random_map(2, 3, 3, 1);
  BlockParams p;
  p.w_phi = p.w_psi = p.w_z = Matrix::identity(3);
  const Embedding e = embed(x, p);
  EXPECT_EQ(e.phi, x.values());
  EXPECT_EQ(e.psi, x.values());
  EXPECT_EQ(e.z, x.values());

  p.w_phi = random_matrix(3, 2, 2);
  p.w_psi = random_matrix(3, 2, 3);
  p.w_z = random_matrix(3, 2, 4);
  const Embedding zero = embed(FeatureMap(2, 3, Matrix(6, 3)), p);
  EXPECT_EQ(zero.phi, Matrix(6, 2));
  EXPECT_EQ(zero.z, Matrix(6, 2));

  const Embedding r = embed(x, p);
  for (std::size_t i = 0; i < 6; ++i)
    for (std::size_t j = 0; j < 2; ++j) {
      double phi = 0.0, z = 0.0;
      for (std::size_t k = 0; k < 3; ++k) {
        phi += x.values()(i, k) * p.w_phi(k, j);
        z += x.values()(i, k) * p.w_z(k, j);
      }
      EXPECT_NEAR(r.phi(i, j), phi, 1e-15);
      EXPECT_NEAR(r.z(i, j), z, 1e-15);
    }
  EXPECT_EQ(code_of([&] { embed(random_map(2, 2, 4, 5), p); }), ErrorCode::Shape);
}

TEST(BlockAffinity, SnlIsExactlySymmetric) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto cfg = config(Variant::SNL);
    const auto a = build_block_affinity(random_map(3, 4, 4, seed), cfg, random_params(cfg, seed));
    EXPECT_EQ(a.values, a.values.transposed());
    EXPECT_NO_THROW(jacobi_eigh(a.values));
  }
}

TEST(BlockAffinity, NlRowsSumToOne) {
  const auto cfg = config(Variant::NL);
  const auto a = build_block_affinity(random_map(3, 3, 4, 1), cfg, random_params(cfg, 1));
  for (std::size_t i = 0; i < a.vertices(); ++i) {
    double s = 0.0;
    for (double v : a.values.row(i)) s += v;
    EXPECT_NEAR(s, 1.0, 1e-12);
  }
}

TEST(BlockAffinity, CrissCrossZerosOffCross) {
  const auto cfg = config(Variant::CC);
  const auto a = build_block_affinity(random_map(2, 2, 4, 2), cfg, random_params(cfg, 2));
  // (0,0)-(1,1) and (0,1)-(1,0) share neither a row nor a column.
  EXPECT_EQ(a.values(0, 3), 0.0);
  EXPECT_EQ(a.values(3, 0), 0.0);
  EXPECT_EQ(a.values(1, 2), 0.0);
  EXPECT_EQ(a.values(2, 1), 0.0);
  EXPECT_GT(a.values(0, 1), 0.0);
  EXPECT_GT(a.values(0, 2), 0.0);
}

TEST(BlockAffinity, A2IsRawKernel) {
  const auto cfg = config(Variant::A2);
  const FeatureMap x = random_map(2, 2, 4, 3);
  const BlockParams p = random_params(cfg, 3);
  const Embedding e = embed(x, p);
  EXPECT_EQ(build_block_affinity(x, cfg, p).values,
            compute_affinity(e.phi, e.psi, Kernel::ExpDot).values);
}

// Graph-module route: exp kernel, mask, then normalize.
AffinityMatrix graph_route(const FeatureMap& x, const BlockConfig& cfg, const BlockParams& p) {
  const Embedding e = embed(x, p);
  AffinityMatrix m;
  if (cfg.variant == Variant::CGNL) {
    m = compute_affinity(flatten_spatial_channel(e.phi), flatten_spatial_channel(e.psi),
                         Kernel::ExpDot);
  } else {
    m = compute_affinity(e.phi, e.psi, Kernel::ExpDot);
  }
  if (cfg.variant == Variant::CC) m = apply_mask(m, crisscross_mask(x.height(), x.width()));
  switch (cfg.variant) {
    case Variant::SNL:
    case Variant::SNL_A1:
    case Variant::CHEB_K:
      return normalize(symmetrize(m), Normalization::Symmetric);
    default:
      return normalize(m, Normalization::RandomWalk);
  }
}

TEST(BlockAffinity, ExpKernelAgreesWithGraphNormalization) {
  for (Variant v : {Variant::NL, Variant::NS, Variant::CGNL, Variant::CC, Variant::SNL,
                    Variant::SNL_A1, Variant::SNL_A2, Variant::CHEB_K}) {
    for (std::uint64_t seed = 0; seed < 4; ++seed) {
      const auto cfg = config(v);
      const FeatureMap x = random_map(3, 4, 4, 40 + seed);
      const BlockParams p = random_params(cfg, seed);
      const Matrix got = build_block_affinity(x, cfg, p).values;
      const Matrix want = graph_route(x, cfg, p).values;
      EXPECT_LE(rel_error(got, want), 1e-13) << to_string(v) << " seed " << seed;
    }
  }
}

TEST(BlockAffinity, ExpKernelSurvivesUnderflowingScores) {
  // Constant map with φ = 30x, ψ = −30x: every score is −1800, so exp(M)
  // underflows to 0 but the normalised affinity is exactly uniform.
  const FeatureMap x(3, 3, Matrix(9, 4, 1.0));
  for (Variant v : {Variant::NL, Variant::SNL}) {
    const auto cfg = config(v, 4, 4);
    BlockParams p = init_params(cfg, 1);
    p.w_phi = Matrix::identity(4) * 30.0;
    p.w_psi = Matrix::identity(4) * -30.0;
    EXPECT_EQ(code_of([&] { graph_route(x, cfg, p); }), ErrorCode::DegenerateVertex);
    const Matrix a = build_block_affinity(x, cfg, p).values;
    // exponents of size 1800 carry ~1800·ε absolute rounding
    for (double e : a.data()) EXPECT_NEAR(e, 1.0 / 9.0, 1800 * 1e-15) << to_string(v);
  }
}

TEST(BlockAffinity, CgnlGuard) {
  const auto cfg = config(Variant::CGNL, 8, 8);
  const FeatureMap big = random_map(24, 24, 8, 4);  // 576 · 8 vertices
  EXPECT_EQ(code_of([&] { build_block_affinity(big, cfg, init_params(cfg, 1)); }),
            ErrorCode::Config);
}

TEST(BlockForward, ZeroFiltersGiveIdentity) {
  for (Variant v : kAllVariants) {
    const auto cfg = config(v);
    const FeatureMap x = random_map(3, 3, 4, 5);
    EXPECT_EQ(block_forward(x, cfg, init_params(cfg, 6)).values(), x.values()) << to_string(v);
  }
}

TEST(BlockForward, NsWithIdentityAffinityIsIdentity) {
  const auto cfg = config(Variant::NS);
  const FeatureMap x = random_map(2, 3, 4, 7);
  AffinityMatrix eye;
  eye.values = Matrix::identity(6);
  eye.normalization = Normalization::RandomWalk;
  const FeatureMap y = block_forward_with_affinity(x, cfg, random_params(cfg, 7), eye);
  EXPECT_LE(max_abs(y.values() - x.values()), 1e-15);
}

TEST(BlockForward, NlMatchesLoopOracle) {
  const auto cfg = config(Variant::NL);
  const FeatureMap x = random_map(3, 3, 4, 8);
  const BlockParams p = random_params(cfg, 8);
  const Matrix a = build_block_affinity(x, cfg, p).values;
  const Matrix z = embed(x, p).z;
  const Matrix& w = p.filter[0];
  const Matrix y = block_forward(x, cfg, p).values();
  for (std::size_t i = 0; i < 9; ++i)
    for (std::size_t c = 0; c < 4; ++c) {
      double s = x.values()(i, c);
      for (std::size_t j = 0; j < 9; ++j)
        for (std::size_t k = 0; k < 2; ++k) s += a(i, j) * z(j, k) * w(k, c);
      EXPECT_NEAR(y(i, c), s, 1e-13);
    }
}

TEST(BlockForward, CgnlMatchesLoopOracle) {
  const auto cfg = config(Variant::CGNL);
  const FeatureMap x = random_map(2, 2, 4, 9);
  const BlockParams p = random_params(cfg, 9);
  const Matrix a = build_block_affinity(x, cfg, p).values;
  ASSERT_EQ(a.rows(), 8u);
  const Matrix z = embed(x, p).z;
  const Matrix y = block_forward(x, cfg, p).values();
  // vertex i + k·N carries z(i, k)
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t c = 0; c < 4; ++c) {
      double s = x.values()(i, c);
      for (std::size_t k = 0; k < 2; ++k) {
        double agg = 0.0;
        for (std::size_t j = 0; j < 4; ++j)
          for (std::size_t l = 0; l < 2; ++l) agg += a(i + k * 4, j + l * 4) * z(j, l);
        s += agg * p.filter[0](k, c);
      }
      EXPECT_NEAR(y(i, c), s, 1e-13);
    }
}

TEST(BlockForward, SnlEqualsSecondOrderChebyshev) {
  const auto snl_cfg = config(Variant::SNL);
  const auto cheb_cfg = config(Variant::CHEB_K, 4, 2, 2);
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const FeatureMap x = random_map(3, 3, 4, 10 + seed);
    const BlockParams p = random_params(snl_cfg, seed);
    const FeatureMap a = block_forward(x, snl_cfg, p);
    const FeatureMap b = block_forward(x, cheb_cfg, p);
    EXPECT_LE(rel_error(a.values(), b.values()), 1e-12);
  }
}

TEST(BlockForward, OutputShapeMatchesInput) {
  for (Variant v : kAllVariants) {
    const auto cfg = config(v, 5, 3);
    const FeatureMap x = random_map(2, 4, 5, 11);
    const FeatureMap y = block_forward(x, cfg, random_params(cfg, 12));
    EXPECT_EQ(y.height(), 2u);
    EXPECT_EQ(y.width(), 4u);
    EXPECT_EQ(y.channels(), 5u);
  }
}

TEST(BlockForward, PermutationEquivariance) {
  const Variant variants[] = {Variant::NL,  Variant::NS,     Variant::A2,
                              Variant::SNL, Variant::SNL_A1, Variant::SNL_A2};
  const std::vector<std::size_t> perm = {3, 0, 5, 1, 2, 4};
  for (Variant v : variants) {
    const auto cfg = config(v);
    const FeatureMap x = random_map(2, 3, 4, 13);
    const BlockParams p = random_params(cfg, 14);
    Matrix px(6, 4);
    for (std::size_t i = 0; i < 6; ++i)
      for (std::size_t c = 0; c < 4; ++c) px(i, c) = x.values()(perm[i], c);
    const Matrix y = block_forward(x, cfg, p).values();
    const Matrix py = block_forward(FeatureMap(2, 3, px), cfg, p).values();
    for (std::size_t i = 0; i < 6; ++i)
      for (std::size_t c = 0; c < 4; ++c) EXPECT_NEAR(py(i, c), y(perm[i], c), 1e-10);
  }
}

TEST(BlockBackward, TrivialCases) {
  for (Variant v : kAllVariants) {
    const auto cfg = config(v);
    const FeatureMap x = random_map(3, 3, 4, 15);
    const BlockParams p = random_params(cfg, 16);
    const auto g = block_backward(x, cfg, p, Matrix(9, 4));
    EXPECT_EQ(max_abs(g.x), 0.0) << to_string(v);
    for (const Matrix* m : param_list(g.params)) EXPECT_EQ(max_abs(*m), 0.0) << to_string(v);

    const Matrix up = random_matrix(9, 4, 17);
    EXPECT_EQ(block_backward(x, cfg, init_params(cfg, 18), up).x, up) << to_string(v);
  }
}

TEST(BlockBackward, TapeMatchesDirectPath) {
  const auto cfg = config(Variant::CHEB_K, 4, 2, 4);
  const FeatureMap x = random_map(3, 3, 4, 19);
  const BlockParams p = random_params(cfg, 20);
  const BlockTape tape = record_forward(x, cfg, p);
  EXPECT_LE(rel_error(tape.y.values(), block_forward(x, cfg, p).values()), 1e-12);
  const Matrix up = random_matrix(9, 4, 21);
  const auto a = backward_from(tape, up);
  const auto b = block_backward(x, cfg, p, up);
  EXPECT_EQ(a.x, b.x);
  EXPECT_EQ(a.params.w_phi, b.params.w_phi);
}

TEST(BlockBackward, ShapeMismatch) {
  const auto cfg = config(Variant::NL);
  EXPECT_EQ(code_of([&] {
              block_backward(random_map(3, 3, 4, 1), cfg, init_params(cfg, 1), Matrix(9, 3));
            }),
            ErrorCode::Shape);
}

TEST(BlockConfigJson, RoundTrip) {
  BlockConfig cfg = config(Variant::CHEB_K, 6, 3, 4);
  cfg.kernel = Kernel::Dot;
  cfg.backprop_affinity = false;
  const BlockConfig back = block_config_from_json(to_json(cfg));
  EXPECT_EQ(back.variant, cfg.variant);
  EXPECT_EQ(back.c_in, 6u);
  EXPECT_EQ(back.c_s, 3u);
  EXPECT_EQ(back.order, 4u);
  EXPECT_EQ(back.kernel, Kernel::Dot);
  EXPECT_FALSE(back.backprop_affinity);
}

TEST(BlockConfigJson, Errors) {
  const char* bad[] = {
      R"({"variant":"SNL","c_in":4,"c_s":2,"extra":1})",
      R"({"variant":"SNL","c_in":4})",
      R"({"variant":"XX","c_in":4,"c_s":2})",
      R"({"variant":"SNL","c_in":4,"c_s":5})",
      R"({"variant":"CHEB_K","c_in":4,"c_s":2,"order":1})",
      R"({"variant":"SNL","c_in":"four","c_s":2})",
      R"([1,2])",
      R"({not json)",
  };
  for (const char* text : bad) {
    EXPECT_EQ(code_of([&] { block_config_from_json(text); }), ErrorCode::Config) << text;
  }
}

TEST(BlockParamsIo, SaveLoadRoundTrip) {
  const auto cfg = config(Variant::CHEB_K, 4, 2, 3);
  const BlockParams p = random_params(cfg, 22);
  const auto dir = std::filesystem::temp_directory_path() / "snl_params_roundtrip";
  std::filesystem::remove_all(dir);
  save_params(dir, cfg, p);
  BlockConfig loaded_cfg;
  const BlockParams q = load_params(dir, &loaded_cfg);
  EXPECT_EQ(loaded_cfg.variant, Variant::CHEB_K);
  EXPECT_EQ(loaded_cfg.order, 3u);
  const auto a = param_list(p), b = param_list(q);
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(*a[i], *b[i]);
  std::filesystem::remove_all(dir);
}

TEST(BlockParams, RolesAndInit) {
  EXPECT_EQ(param_roles(config(Variant::SNL)),
            (std::vector<std::string>{"w_phi", "w_psi", "w_z", "w1", "w2"}));
  EXPECT_EQ(param_roles(config(Variant::NL)),
            (std::vector<std::string>{"w_phi", "w_psi", "w_z", "w"}));
  const auto cc = init_params(config(Variant::CC), 1);
  EXPECT_EQ(cc.filter[0].rows(), 4u);
  EXPECT_EQ(cc.filter[0].cols(), 4u);
  const auto p = init_params(config(Variant::SNL), 2);
  const double bound = 0.5;  // 1/√4
  for (double v : p.w_phi.data()) EXPECT_LE(std::abs(v), bound);
  for (const Matrix& w : p.filter) EXPECT_EQ(max_abs(w), 0.0);
  EXPECT_EQ(init_params(config(Variant::SNL), 2).w_z, p.w_z);
}

}  // namespace
}  // namespace snl
