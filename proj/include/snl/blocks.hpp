#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "snl/graph.hpp"
#include "snl/linalg.hpp"

namespace snl {

enum class Variant { NL, NS, A2, CGNL, CC, SNL, SNL_A1, SNL_A2, CHEB_K };

inline constexpr std::array<Variant, 9> kAllVariants = {
    Variant::NL,  Variant::NS,     Variant::A2,     Variant::CGNL,  Variant::CC,
    Variant::SNL, Variant::SNL_A1, Variant::SNL_A2, Variant::CHEB_K};

std::string_view to_string(Variant v) noexcept;
Variant parse_variant(std::string_view name);

inline constexpr std::size_t kMaxFlattenedVertices = 4096;

struct BlockConfig {
  Variant variant = Variant::SNL;
  std::size_t c_in = 0;
  std::size_t c_s = 0;
  std::size_t order = 2;  // CHEB_K only
  Kernel kernel = Kernel::ExpDot;
  bool backprop_affinity = true;

  void validate() const;
};

// JSON object with keys variant, c_in, c_s, order, kernel,
// backprop_affinity. Unknown keys are rejected.
std::string to_json(const BlockConfig& cfg);
BlockConfig block_config_from_json(std::string_view text);

// Projection embeddings plus the filter weights of the variant's row:
//   NL, NS, A2, CGNL, SNL_A1: {W}            C_s × C₁
//   CC:                       {W}            C₁ × C₁ (node feature is X)
//   SNL, SNL_A2:              {W₁, W₂}       C_s × C₁
//   CHEB_K:                   {W₁, ..., W_K} C_s × C₁
// W_s2 is folded into these, so every filter weight maps back to C₁.
struct BlockParams {
  Matrix w_phi;
  Matrix w_psi;
  Matrix w_z;
  std::vector<Matrix> filter;
};

std::size_t filter_count(const BlockConfig& cfg);
std::vector<std::string> param_roles(const BlockConfig& cfg);  // w_phi, w_psi, w_z, then filters
std::vector<Matrix*> param_list(BlockParams& p);
std::vector<const Matrix*> param_list(const BlockParams& p);

void validate(const BlockConfig& cfg, const BlockParams& params);

// Projections uniform in ±1/√C₁, filter weights zero: the block starts as
// the identity map.
BlockParams init_params(const BlockConfig& cfg, std::uint64_t seed);
// Every matrix uniform in ±scale; used by gradient and unification checks.
BlockParams random_params(const BlockConfig& cfg, std::uint64_t seed, double scale = 0.5);
BlockParams zeros_like(const BlockParams& p);

void save_params(const std::filesystem::path& dir, const BlockConfig& cfg,
                 const BlockParams& params);
BlockParams load_params(const std::filesystem::path& dir, BlockConfig* cfg_out = nullptr);

struct Embedding {
  Matrix phi;
  Matrix psi;
  Matrix z;
};

// φ = XW_φ, ψ = XW_ψ, Z = XW_Z
Embedding embed(const FeatureMap& x, const BlockParams& params);

// Per variant:
//   NL, NS, SNL_A2: D⁻¹M over (φ, ψ)        A2: M
//   CGNL:  D⁻¹M^f over the (position, channel) vertices of vec(φ), vec(ψ)
//   CC:    D⁻¹(C⊙M) with the criss-cross mask C
//   SNL, SNL_A1, CHEB_K: D^{-1/2} M̂ D^{-1/2}, M̂ = (M + Mᵀ)/2
AffinityMatrix build_block_affinity(const FeatureMap& x, const BlockConfig& cfg,
                                    const BlockParams& params);

// Y = X + F(A, Z) with the variant's own formulation.
FeatureMap block_forward(const FeatureMap& x, const BlockConfig& cfg, const BlockParams& params);
// Same, with the affinity supplied by the caller and held fixed.
FeatureMap block_forward_with_affinity(const FeatureMap& x, const BlockConfig& cfg,
                                       const BlockParams& params, const AffinityMatrix& a);

// Generic Chebyshev-form operator Σ_k A^k Z W_{k+1}; zero-order term first.
Matrix chebyshev_operator(const Matrix& a, const Matrix& z, const std::vector<Matrix>& weights);

// A variant expressed as one instance of the generic operator. For CGNL the
// node signal is the column vec(Z); the operator output is reshaped to N×C_s
// and mapped by `restore` back to C₁ channels.
struct UnifiedForm {
  Matrix affinity;
  Matrix node_features;
  std::vector<Matrix> weights;
  bool vectorized = false;
  Matrix restore;
};

UnifiedForm unified_form(const FeatureMap& x, const BlockConfig& cfg, const BlockParams& params,
                         const AffinityMatrix& a);
FeatureMap unified_forward(const FeatureMap& x, const UnifiedForm& form);

struct BlockGradients {
  Matrix x;
  BlockParams params;
};

// Intermediates of one forward pass, kept for the backward pass.
struct BlockTape {
  FeatureMap x;
  BlockConfig cfg;
  BlockParams params;
  Embedding embedding;
  // Exp kernel with a normalisation: scaled scores φψᵀ/√C_s and log-degrees.
  Matrix scores;
  std::vector<double> log_degree;
  // Otherwise the kernel output M, masked for CC.
  AffinityMatrix raw;
  AffinityMatrix affinity;  // normalised A
  UnifiedForm form;
  std::vector<Matrix> powers;  // A^k S for the node signal S
  Matrix op;                   // Σ_k A^k S W_k before any reshape
  FeatureMap y;
};

BlockTape record_forward(const FeatureMap& x, const BlockConfig& cfg, const BlockParams& params);
BlockGradients backward_from(const BlockTape& tape, const Matrix& upstream);

// Gradients of ⟨upstream, Y⟩ with respect to X and every parameter. With
// cfg.backprop_affinity the path through the kernel, mask, symmetrisation and
// degree normalisation is included; otherwise A is a constant.
BlockGradients block_backward(const FeatureMap& x, const BlockConfig& cfg,
                              const BlockParams& params, const Matrix& upstream);

}  // namespace snl
