#include "snl/blocks.hpp"

#include <cmath>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>

#include "json.hpp"

#include "snl/error.hpp"
#include "snl/matrix_io.hpp"
#include "snl/random.hpp"

namespace snl {

using json = nlohmann::json;

std::string_view to_string(Variant v) noexcept {
  switch (v) {
    case Variant::NL: return "NL";
    case Variant::NS: return "NS";
    case Variant::A2: return "A2";
    case Variant::CGNL: return "CGNL";
    case Variant::CC: return "CC";
    case Variant::SNL: return "SNL";
    case Variant::SNL_A1: return "SNL_A1";
    case Variant::SNL_A2: return "SNL_A2";
    case Variant::CHEB_K: return "CHEB_K";
  }
  return "?";
}

Variant parse_variant(std::string_view name) {
  for (Variant v : kAllVariants)
    if (to_string(v) == name) return v;
  fail(ErrorCode::Config, "unknown variant '" + std::string(name) + "'");
}

void BlockConfig::validate() const {
  if (c_in < 1) fail(ErrorCode::Config, "c_in must be at least 1");
  if (c_s < 1 || c_s > c_in) fail(ErrorCode::Config, "c_s must lie in [1, c_in]");
  if (variant == Variant::CHEB_K && order < 2) {
    fail(ErrorCode::Config, "CHEB_K needs order >= 2");
  }
}

std::string to_json(const BlockConfig& cfg) {
  json j = {{"variant", std::string(to_string(cfg.variant))},
            {"c_in", cfg.c_in},
            {"c_s", cfg.c_s},
            {"order", cfg.order},
            {"kernel", std::string(to_string(cfg.kernel))},
            {"backprop_affinity", cfg.backprop_affinity}};
  return j.dump();
}

BlockConfig block_config_from_json(std::string_view text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    fail(ErrorCode::Config, std::string("block config: ") + e.what());
  }
  if (!j.is_object()) fail(ErrorCode::Config, "block config must be a JSON object");
  static const std::set<std::string> known = {"variant", "c_in",   "c_s",
                                              "order",   "kernel", "backprop_affinity"};
  for (const auto& [key, _] : j.items()) {
    if (!known.count(key)) fail(ErrorCode::Config, "block config: unknown key '" + key + "'");
  }
  BlockConfig cfg;
  try {
    if (!j.contains("variant") || !j.contains("c_in") || !j.contains("c_s")) {
      fail(ErrorCode::Config, "block config needs variant, c_in and c_s");
    }
    cfg.variant = parse_variant(j.at("variant").get<std::string>());
    cfg.c_in = j.at("c_in").get<std::size_t>();
    cfg.c_s = j.at("c_s").get<std::size_t>();
    if (j.contains("order")) cfg.order = j.at("order").get<std::size_t>();
    if (j.contains("kernel")) cfg.kernel = parse_kernel(j.at("kernel").get<std::string>());
    if (j.contains("backprop_affinity")) cfg.backprop_affinity = j.at("backprop_affinity").get<bool>();
  } catch (const json::exception& e) {
    fail(ErrorCode::Config, std::string("block config: ") + e.what());
  }
  cfg.validate();
  return cfg;
}

std::size_t filter_count(const BlockConfig& cfg) {
  switch (cfg.variant) {
    case Variant::SNL:
    case Variant::SNL_A2: return 2;
    case Variant::CHEB_K: return cfg.order;
    default: return 1;
  }
}

namespace {

std::pair<std::size_t, std::size_t> filter_shape(const BlockConfig& cfg) {
  if (cfg.variant == Variant::CC) return {cfg.c_in, cfg.c_in};
  return {cfg.c_s, cfg.c_in};
}

Normalization normalization_for(Variant v) {
  switch (v) {
    case Variant::A2: return Normalization::None;
    case Variant::SNL:
    case Variant::SNL_A1:
    case Variant::CHEB_K: return Normalization::Symmetric;
    default: return Normalization::RandomWalk;
  }
}

Matrix random_matrix(std::size_t r, std::size_t c, Rng& rng, double scale) {
  Matrix m(r, c);
  for (double& v : m.data()) v = rng.uniform(-scale, scale);
  return m;
}

void require_shape(const Matrix& m, std::size_t r, std::size_t c, const std::string& role) {
  if (m.rows() != r || m.cols() != c) {
    fail(ErrorCode::Shape, role + " is " + std::to_string(m.rows()) + "x" +
                               std::to_string(m.cols()) + ", expected " + std::to_string(r) +
                               "x" + std::to_string(c));
  }
}

}  // namespace

std::vector<std::string> param_roles(const BlockConfig& cfg) {
  std::vector<std::string> roles = {"w_phi", "w_psi", "w_z"};
  const std::size_t n = filter_count(cfg);
  if (n == 1) {
    roles.emplace_back("w");
  } else {
    for (std::size_t k = 1; k <= n; ++k) roles.push_back("w" + std::to_string(k));
  }
  return roles;
}

std::vector<Matrix*> param_list(BlockParams& p) {
  std::vector<Matrix*> out = {&p.w_phi, &p.w_psi, &p.w_z};
  for (Matrix& w : p.filter) out.push_back(&w);
  return out;
}

std::vector<const Matrix*> param_list(const BlockParams& p) {
  std::vector<const Matrix*> out = {&p.w_phi, &p.w_psi, &p.w_z};
  for (const Matrix& w : p.filter) out.push_back(&w);
  return out;
}

void validate(const BlockConfig& cfg, const BlockParams& params) {
  cfg.validate();
  require_shape(params.w_phi, cfg.c_in, cfg.c_s, "w_phi");
  require_shape(params.w_psi, cfg.c_in, cfg.c_s, "w_psi");
  require_shape(params.w_z, cfg.c_in, cfg.c_s, "w_z");
  if (params.filter.size() != filter_count(cfg)) {
    fail(ErrorCode::Shape, std::string(to_string(cfg.variant)) + " expects " +
                               std::to_string(filter_count(cfg)) + " filter weights, got " +
                               std::to_string(params.filter.size()));
  }
  const auto [r, c] = filter_shape(cfg);
  for (const Matrix& w : params.filter) require_shape(w, r, c, "filter weight");
}

BlockParams init_params(const BlockConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  Rng rng(seed);
  const double bound = 1.0 / std::sqrt(static_cast<double>(cfg.c_in));
  BlockParams p;
  p.w_phi = random_matrix(cfg.c_in, cfg.c_s, rng, bound);
  p.w_psi = random_matrix(cfg.c_in, cfg.c_s, rng, bound);
  p.w_z = random_matrix(cfg.c_in, cfg.c_s, rng, bound);
  const auto [r, c] = filter_shape(cfg);
  p.filter.assign(filter_count(cfg), Matrix(r, c));
  return p;
}

BlockParams random_params(const BlockConfig& cfg, std::uint64_t seed, double scale) {
  cfg.validate();
  Rng rng(seed);
  BlockParams p;
  p.w_phi = random_matrix(cfg.c_in, cfg.c_s, rng, scale);
  p.w_psi = random_matrix(cfg.c_in, cfg.c_s, rng, scale);
  p.w_z = random_matrix(cfg.c_in, cfg.c_s, rng, scale);
  const auto [r, c] = filter_shape(cfg);
  for (std::size_t k = 0; k < filter_count(cfg); ++k) p.filter.push_back(random_matrix(r, c, rng, scale));
  return p;
}

BlockParams zeros_like(const BlockParams& p) {
  BlockParams z;
  z.w_phi = Matrix(p.w_phi.rows(), p.w_phi.cols());
  z.w_psi = Matrix(p.w_psi.rows(), p.w_psi.cols());
  z.w_z = Matrix(p.w_z.rows(), p.w_z.cols());
  for (const Matrix& w : p.filter) z.filter.emplace_back(w.rows(), w.cols());
  return z;
}

void save_params(const std::filesystem::path& dir, const BlockConfig& cfg,
                 const BlockParams& params) {
  validate(cfg, params);
  std::filesystem::create_directories(dir);
  const auto roles = param_roles(cfg);
  const auto mats = param_list(params);
  json manifest;
  manifest["config"] = json::parse(to_json(cfg));
  manifest["matrices"] = json::array();
  for (std::size_t i = 0; i < roles.size(); ++i) {
    const std::string file = roles[i] + ".bin";
    save_binary(dir / file, *mats[i]);
    manifest["matrices"].push_back(
        {{"role", roles[i]}, {"file", file}, {"rows", mats[i]->rows()}, {"cols", mats[i]->cols()}});
  }
  std::ofstream os(dir / "manifest.json", std::ios::binary);
  if (!os) fail(ErrorCode::Io, "cannot write " + (dir / "manifest.json").string());
  os << manifest.dump(2) << '\n';
}

BlockParams load_params(const std::filesystem::path& dir, BlockConfig* cfg_out) {
  std::ifstream is(dir / "manifest.json", std::ios::binary);
  if (!is) fail(ErrorCode::Io, "cannot open " + (dir / "manifest.json").string());
  json manifest;
  try {
    manifest = json::parse(is);
  } catch (const json::exception& e) {
    fail(ErrorCode::Io, std::string("params manifest: ") + e.what());
  }
  const BlockConfig cfg = block_config_from_json(manifest.at("config").dump());
  const auto roles = param_roles(cfg);
  const auto& entries = manifest.at("matrices");
  if (entries.size() != roles.size()) fail(ErrorCode::Io, "params manifest: wrong matrix count");
  BlockParams p;
  p.filter.resize(filter_count(cfg));
  auto slots = param_list(p);
  for (std::size_t i = 0; i < roles.size(); ++i) {
    if (entries[i].at("role").get<std::string>() != roles[i]) {
      fail(ErrorCode::Io, "params manifest: expected role " + roles[i]);
    }
    *slots[i] = load_matrix(dir / entries[i].at("file").get<std::string>());
  }
  validate(cfg, p);
  if (cfg_out) *cfg_out = cfg;
  return p;
}

Embedding embed(const FeatureMap& x, const BlockParams& params) {
  if (x.channels() != params.w_phi.rows()) {
    fail(ErrorCode::Shape, "embed: feature map has " + std::to_string(x.channels()) +
                               " channels, projections expect " +
                               std::to_string(params.w_phi.rows()));
  }
  return {matmul(x.values(), params.w_phi), matmul(x.values(), params.w_psi),
          matmul(x.values(), params.w_z)};
}

namespace {

void check_flattened_size(const FeatureMap& x, const BlockConfig& cfg) {
  if (cfg.variant == Variant::CGNL && x.positions() * cfg.c_s > kMaxFlattenedVertices) {
    fail(ErrorCode::Config, "CGNL flattened graph of " + std::to_string(x.positions() * cfg.c_s) +
                                " vertices exceeds " + std::to_string(kMaxFlattenedVertices));
  }
}

bool log_domain(const BlockConfig& cfg) {
  return cfg.kernel == Kernel::ExpDot && normalization_for(cfg.variant) != Normalization::None;
}

// Kernel output M for the paths normalised through the graph module: the dot
// kernel, and A2's unnormalised exp kernel. Mask applied for CC.
AffinityMatrix raw_affinity(const FeatureMap& x, const BlockConfig& cfg, const Embedding& e) {
  if (cfg.variant == Variant::CGNL) {
    return compute_affinity(flatten_spatial_channel(e.phi), flatten_spatial_channel(e.psi),
                            cfg.kernel);
  }
  AffinityMatrix m = compute_affinity(e.phi, e.psi, cfg.kernel);
  if (cfg.variant == Variant::CC) m = apply_mask(m, crisscross_mask(x.height(), x.width()));
  return m;
}

AffinityMatrix normalized_affinity(const AffinityMatrix& m, Variant v) {
  switch (normalization_for(v)) {
    case Normalization::None: return m;
    case Normalization::RandomWalk: return normalize(m, Normalization::RandomWalk);
    case Normalization::Symmetric: return normalize(symmetrize(m), Normalization::Symmetric);
  }
  return m;
}

double log_add_exp(double a, double b) {
  const double hi = std::max(a, b);
  return hi + std::log1p(std::exp(-std::abs(a - b)));
}

// Normalised exp-kernel affinity evaluated from the scaled scores
// S = φψᵀ/√C_s and log-degrees ℓ, so no exp(S) is ever formed:
//   random walk  A_ij = exp(S_ij − ℓ_i),         ℓ_i = log Σ_j C_ij e^{S_ij}
//   symmetric    A_ij = ½(e^{S_ij} + e^{S_ji}) e^{−(ℓ_i + ℓ_j)/2},
//                ℓ_i = log ½(Σ_j e^{S_ij} + Σ_j e^{S_ji})
// Every exponent is at most log 2, and the degrees stay positive however far
// the scores drift.
struct ExpGraph {
  AffinityMatrix affinity;
  Matrix scores;
  std::vector<double> log_degree;
};

ExpGraph exp_graph(const FeatureMap& x, const BlockConfig& cfg, const Embedding& e) {
  const bool flat = cfg.variant == Variant::CGNL;
  const Matrix phi = flat ? flatten_spatial_channel(e.phi) : e.phi;
  const Matrix psi = flat ? flatten_spatial_channel(e.psi) : e.psi;
  ExpGraph g;
  g.scores = matmul_nt(phi, psi) * (1.0 / std::sqrt(static_cast<double>(phi.cols())));
  const Matrix& s = g.scores;
  const std::size_t n = s.rows();
  const bool masked = cfg.variant == Variant::CC;
  const Matrix mask = masked ? crisscross_mask(x.height(), x.width()) : Matrix();
  auto keep = [&](std::size_t i, std::size_t j) { return !masked || mask(i, j) != 0.0; };

  // log Σ_j e^{S_ij} (rows) or log Σ_j e^{S_ji} (columns), over unmasked entries.
  auto lse = [&](std::size_t i, bool column) {
    double hi = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < n; ++j)
      if (keep(i, j)) hi = std::max(hi, column ? s(j, i) : s(i, j));
    double sum = 0.0;
    for (std::size_t j = 0; j < n; ++j)
      if (keep(i, j)) sum += std::exp((column ? s(j, i) : s(i, j)) - hi);
    return hi + std::log(sum);
  };

  AffinityMatrix& a = g.affinity;
  a.values = Matrix(n, n);
  a.kernel = Kernel::ExpDot;
  a.mask_applied = masked;
  a.normalization = normalization_for(cfg.variant);
  g.log_degree.resize(n);
  if (a.normalization == Normalization::RandomWalk) {
    for (std::size_t i = 0; i < n; ++i) {
      const double l = lse(i, false);
      g.log_degree[i] = l;
      for (std::size_t j = 0; j < n; ++j)
        if (keep(i, j)) a.values(i, j) = std::exp(s(i, j) - l);
    }
    return g;
  }
  a.symmetrized = true;
  for (std::size_t i = 0; i < n; ++i) {
    g.log_degree[i] = log_add_exp(lse(i, false), lse(i, true)) - std::log(2.0);
  }
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i; j < n; ++j) {
      const double h = 0.5 * (g.log_degree[i] + g.log_degree[j]);
      const double v = 0.5 * (std::exp(s(i, j) - h) + std::exp(s(j, i) - h));
      a.values(i, j) = v;
      a.values(j, i) = v;
    }
  }
  return g;
}

}  // namespace

AffinityMatrix build_block_affinity(const FeatureMap& x, const BlockConfig& cfg,
                                    const BlockParams& params) {
  validate(cfg, params);
  check_flattened_size(x, cfg);
  const Embedding e = embed(x, params);
  if (log_domain(cfg)) return exp_graph(x, cfg, e).affinity;
  return normalized_affinity(raw_affinity(x, cfg, e), cfg.variant);
}

FeatureMap block_forward(const FeatureMap& x, const BlockConfig& cfg, const BlockParams& params) {
  return block_forward_with_affinity(x, cfg, params, build_block_affinity(x, cfg, params));
}

FeatureMap block_forward_with_affinity(const FeatureMap& x, const BlockConfig& cfg,
                                       const BlockParams& params, const AffinityMatrix& a) {
  validate(cfg, params);
  check_flattened_size(x, cfg);
  const Matrix& am = a.values;
  const Matrix& xv = x.values();
  const Embedding e = embed(x, params);
  const std::vector<Matrix>& w = params.filter;

  const std::size_t expect_vertices =
      cfg.variant == Variant::CGNL ? x.positions() * cfg.c_s : x.positions();
  if (!am.is_square() || am.rows() != expect_vertices) {
    fail(ErrorCode::Shape, "affinity does not match the feature map");
  }

  Matrix f;
  switch (cfg.variant) {
    case Variant::NL:
    case Variant::A2:
    case Variant::SNL_A1:
      f = matmul(matmul(am, e.z), w[0]);
      break;
    case Variant::CC:
      f = matmul(matmul(am, xv), w[0]);
      break;
    case Variant::NS:
      f = matmul(e.z, w[0]) * -1.0 + matmul(matmul(am, e.z), w[0]);
      break;
    case Variant::SNL:
    case Variant::SNL_A2:
      f = matmul(e.z, w[0]) + matmul(matmul(am, e.z), w[1]);
      break;
    case Variant::CGNL: {
      const Matrix filtered = matmul(am, flatten_spatial_channel(e.z));
      f = matmul(unflatten_spatial_channel(filtered, x.positions(), cfg.c_s), w[0]);
      break;
    }
    case Variant::CHEB_K: {
      Matrix power = e.z;
      f = matmul(power, w[0]);
      for (std::size_t k = 1; k < w.size(); ++k) {
        power = matmul(am, power);
        f += matmul(power, w[k]);
      }
      break;
    }
  }
  return FeatureMap(x.height(), x.width(), xv + f);
}

Matrix chebyshev_operator(const Matrix& a, const Matrix& z, const std::vector<Matrix>& weights) {
  if (weights.empty()) fail(ErrorCode::Spec, "chebyshev_operator needs at least one weight");
  if (!a.is_square() || a.rows() != z.rows()) {
    fail(ErrorCode::Shape, "chebyshev_operator: affinity and signal sizes differ");
  }
  Matrix power = z;
  Matrix out = matmul(power, weights[0]);
  for (std::size_t k = 1; k < weights.size(); ++k) {
    power = matmul(a, power);
    out += matmul(power, weights[k]);
  }
  return out;
}

UnifiedForm unified_form(const FeatureMap& x, const BlockConfig& cfg, const BlockParams& params,
                         const AffinityMatrix& a) {
  validate(cfg, params);
  const Embedding e = embed(x, params);
  const std::vector<Matrix>& w = params.filter;
  UnifiedForm form;
  form.affinity = a.values;
  switch (cfg.variant) {
    case Variant::NL:
    case Variant::A2:
    case Variant::SNL_A1:
      form.node_features = e.z;
      form.weights = {Matrix(w[0].rows(), w[0].cols()), w[0]};
      break;
    case Variant::CC:
      form.node_features = x.values();
      form.weights = {Matrix(w[0].rows(), w[0].cols()), w[0]};
      break;
    case Variant::NS:
      form.node_features = e.z;
      form.weights = {w[0] * -1.0, w[0]};
      break;
    case Variant::SNL:
    case Variant::SNL_A2:
    case Variant::CHEB_K:
      form.node_features = e.z;
      form.weights = w;
      break;
    case Variant::CGNL:
      form.node_features = flatten_spatial_channel(e.z);
      form.weights = {Matrix{{0.0}}, Matrix{{1.0}}};
      form.vectorized = true;
      form.restore = w[0];
      break;
  }
  return form;
}

FeatureMap unified_forward(const FeatureMap& x, const UnifiedForm& form) {
  Matrix f = chebyshev_operator(form.affinity, form.node_features, form.weights);
  if (form.vectorized) {
    const std::size_t channels = f.rows() / x.positions();
    f = matmul(unflatten_spatial_channel(f, x.positions(), channels), form.restore);
  }
  return FeatureMap(x.height(), x.width(), x.values() + f);
}

namespace {

// Adjoint of the degree normalisation: maps dL/dA to dL/dM (M being the
// matrix that was normalised, i.e. M̂ for the symmetric case).
Matrix normalization_backward(const Matrix& d_a, const Matrix& a, const Matrix& m,
                              Normalization mode) {
  const std::size_t n = m.rows();
  if (mode == Normalization::None) return d_a;
  std::vector<double> degree(n, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) degree[i] += m(i, j);

  Matrix d_m(n, n);
  if (mode == Normalization::RandomWalk) {
    for (std::size_t i = 0; i < n; ++i) {
      double row_dot = 0.0;
      for (std::size_t j = 0; j < n; ++j) row_dot += d_a(i, j) * a(i, j);
      for (std::size_t j = 0; j < n; ++j) d_m(i, j) = (d_a(i, j) - row_dot) / degree[i];
    }
    return d_m;
  }
  // A_ij = M_ij s_i s_j with s = d^{-1/2}; d_i = Σ_j M_ij.
  std::vector<double> inv_sqrt(n), d_degree(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) inv_sqrt[i] = 1.0 / std::sqrt(degree[i]);
  for (std::size_t i = 0; i < n; ++i) {
    double acc = 0.0;
    for (std::size_t j = 0; j < n; ++j) acc += d_a(i, j) * a(i, j) + d_a(j, i) * a(j, i);
    d_degree[i] = -0.5 * acc / degree[i];
  }
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      d_m(i, j) = d_a(i, j) * inv_sqrt[i] * inv_sqrt[j] + d_degree[i];
  return d_m;
}

}  // namespace

BlockTape record_forward(const FeatureMap& x, const BlockConfig& cfg, const BlockParams& params) {
  validate(cfg, params);
  check_flattened_size(x, cfg);
  BlockTape t{x, cfg, params, embed(x, params), {}, {}, {}, {}, {}, {}, {}, x};
  if (log_domain(cfg)) {
    ExpGraph g = exp_graph(x, cfg, t.embedding);
    t.affinity = std::move(g.affinity);
    t.scores = std::move(g.scores);
    t.log_degree = std::move(g.log_degree);
  } else {
    t.raw = raw_affinity(x, cfg, t.embedding);
    t.affinity = normalized_affinity(t.raw, cfg.variant);
  }
  t.form = unified_form(x, cfg, params, t.affinity);
  const Matrix& am = t.form.affinity;
  t.powers = {t.form.node_features};
  for (std::size_t k = 1; k < t.form.weights.size(); ++k) {
    t.powers.push_back(matmul(am, t.powers.back()));
  }
  t.op = matmul(t.powers[0], t.form.weights[0]);
  for (std::size_t k = 1; k < t.powers.size(); ++k) t.op += matmul(t.powers[k], t.form.weights[k]);
  Matrix f = t.form.vectorized
                 ? matmul(unflatten_spatial_channel(t.op, x.positions(), cfg.c_s), t.form.restore)
                 : t.op;
  t.y = FeatureMap(x.height(), x.width(), x.values() + f);
  return t;
}

BlockGradients block_backward(const FeatureMap& x, const BlockConfig& cfg,
                              const BlockParams& params, const Matrix& upstream) {
  return backward_from(record_forward(x, cfg, params), upstream);
}

BlockGradients backward_from(const BlockTape& tape, const Matrix& upstream) {
  const FeatureMap& x = tape.x;
  const BlockConfig& cfg = tape.cfg;
  const BlockParams& params = tape.params;
  const Matrix& xv = x.values();
  require_same_shape(upstream, xv, "block_backward upstream gradient");

  const Embedding& e = tape.embedding;
  const UnifiedForm& form = tape.form;
  const Matrix& am = form.affinity;
  const std::vector<Matrix>& powers = tape.powers;
  const std::size_t order = form.weights.size();

  BlockGradients g;
  g.x = upstream;
  g.params = zeros_like(params);

  // Gradient reaching the operator output Σ_k P_k W_k.
  Matrix d_out = upstream;
  if (form.vectorized) {
    const Matrix op_grid = unflatten_spatial_channel(tape.op, x.positions(), cfg.c_s);
    g.params.filter[0] = matmul_tn(op_grid, upstream);
    d_out = flatten_spatial_channel(matmul_nt(upstream, form.restore));
  }

  std::vector<Matrix> d_weights(order);
  std::vector<Matrix> d_powers(order);
  for (std::size_t k = 0; k < order; ++k) {
    d_weights[k] = matmul_tn(powers[k], d_out);
    d_powers[k] = matmul_nt(d_out, form.weights[k]);
  }
  Matrix d_a(am.rows(), am.cols());
  for (std::size_t k = order; k-- > 1;) {
    d_a += matmul_nt(d_powers[k], powers[k - 1]);
    d_powers[k - 1] += matmul_tn(am, d_powers[k]);
  }
  const Matrix& d_signal = d_powers[0];

  // Unified weights back to the variant's parameters.
  auto& gf = g.params.filter;
  switch (cfg.variant) {
    case Variant::NL:
    case Variant::A2:
    case Variant::SNL_A1:
    case Variant::CC:
      gf[0] = d_weights[1];
      break;
    case Variant::NS:
      gf[0] = d_weights[1] - d_weights[0];
      break;
    case Variant::SNL:
    case Variant::SNL_A2:
    case Variant::CHEB_K:
      for (std::size_t k = 0; k < order; ++k) gf[k] = d_weights[k];
      break;
    case Variant::CGNL:
      break;
  }

  Matrix d_z;
  if (cfg.variant == Variant::CC) {
    g.x += d_signal;
  } else {
    d_z = form.vectorized ? unflatten_spatial_channel(d_signal, x.positions(), cfg.c_s) : d_signal;
    g.params.w_z = matmul_tn(xv, d_z);
    g.x += matmul_nt(d_z, params.w_z);
  }

  if (!cfg.backprop_affinity) return g;

  const Normalization mode = normalization_for(cfg.variant);
  const bool flat = cfg.variant == Variant::CGNL;
  const Matrix phi_g = flat ? flatten_spatial_channel(e.phi) : e.phi;
  const Matrix psi_g = flat ? flatten_spatial_channel(e.psi) : e.psi;
  const double scale = 1.0 / std::sqrt(static_cast<double>(phi_g.cols()));
  const std::size_t n = am.rows();
  Matrix d_scores(n, n);

  if (log_domain(cfg)) {
    // dA -> dS directly in terms of A, S and the log-degrees.
    if (mode == Normalization::RandomWalk) {
      for (std::size_t i = 0; i < n; ++i) {
        double dot = 0.0;
        for (std::size_t j = 0; j < n; ++j) dot += am(i, j) * d_a(i, j);
        for (std::size_t j = 0; j < n; ++j) d_scores(i, j) = am(i, j) * (d_a(i, j) - dot);
      }
    } else {
      const Matrix& s = tape.scores;
      const std::vector<double>& l = tape.log_degree;
      std::vector<double> acc(n, 0.0);
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) acc[i] += d_a(i, j) * am(i, j) + d_a(j, i) * am(j, i);
      for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
          const double sij = s(i, j);
          d_scores(i, j) = 0.5 * ((d_a(i, j) + d_a(j, i)) * std::exp(sij - 0.5 * (l[i] + l[j])) -
                                  0.5 * (acc[i] * std::exp(sij - l[i]) + acc[j] * std::exp(sij - l[j])));
        }
      }
    }
    d_scores *= scale;
  } else {
    // dA -> dM through normalisation, symmetrisation and mask, then dM -> dS.
    Matrix d_m;
    if (mode == Normalization::Symmetric) {
      const AffinityMatrix sym = symmetrize(tape.raw);
      const Matrix d_hat = normalization_backward(d_a, am, sym.values, mode);
      d_m = (d_hat + d_hat.transposed()) * 0.5;
    } else {
      d_m = normalization_backward(d_a, am, tape.raw.values, mode);
    }
    if (cfg.variant == Variant::CC) d_m = hadamard(d_m, crisscross_mask(x.height(), x.width()));
    d_scores = cfg.kernel == Kernel::ExpDot ? hadamard(d_m, tape.raw.values) * scale : d_m;
  }

  Matrix d_phi = matmul(d_scores, psi_g);
  Matrix d_psi = matmul_tn(d_scores, phi_g);
  if (flat) {
    d_phi = unflatten_spatial_channel(d_phi, x.positions(), cfg.c_s);
    d_psi = unflatten_spatial_channel(d_psi, x.positions(), cfg.c_s);
  }
  g.params.w_phi = matmul_tn(xv, d_phi);
  g.params.w_psi = matmul_tn(xv, d_psi);
  g.x += matmul_nt(d_phi, params.w_phi);
  g.x += matmul_nt(d_psi, params.w_psi);
  return g;
}

}  // namespace snl
