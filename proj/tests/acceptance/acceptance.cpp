// Acceptance criteria runner. Prints one PASS/FAIL line per criterion and
// exits nonzero if any criterion fails.
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iterator>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "snl/blocks.hpp"
#include "snl/error.hpp"
#include "snl/gradcheck.hpp"
#include "snl/graph.hpp"
#include "snl/harness.hpp"
#include "snl/linalg.hpp"
#include "snl/random.hpp"
#include "snl/spectral.hpp"

namespace fs = std::filesystem;
using namespace snl;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

struct Outcome {
  bool passed = false;
  std::string detail;
};

Matrix uniform_matrix(Rng& rng, std::size_t r, std::size_t c, double lo, double hi) {
  Matrix m(r, c);
  for (double& v : m.data()) v = rng.uniform(lo, hi);
  return m;
}

AffinityMatrix random_sym_affinity(Rng& rng, std::size_t n) {
  const double scale = rng.uniform(0.2, 2.0);
  const auto m = compute_affinity(uniform_matrix(rng, n, 4, -scale, scale),
                                  uniform_matrix(rng, n, 4, -scale, scale), Kernel::ExpDot);
  return normalize(symmetrize(m), Normalization::Symmetric);
}

char buf[256];
template <typename... Args>
std::string fmt(const char* f, Args... args) {
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

Outcome crit1_spectral_equivalence() {
  const auto t0 = Clock::now();
  Rng rng(101);
  const std::size_t sizes[] = {8, 16, 32, 64};
  double worst = 0.0;
  std::size_t cases = 0;
  for (std::size_t g = 0; g < 50; ++g) {
    const std::size_t n = sizes[g % 4];
    const AffinityMatrix a = random_sym_affinity(rng, n);
    const Matrix z = uniform_matrix(rng, n, 3, -1.0, 1.0);
    for (std::size_t k = 1; k <= 6; ++k) {
      std::vector<double> theta(k);
      for (double& t : theta) t = rng.uniform(-1.0, 1.0);
      const auto scalar = FilterSpec::scalar(theta);
      worst = std::max(worst, rel_error(poly_filter_apply(a, z, scalar), spectral_oracle(a, z, scalar)));
      std::vector<Matrix> w;
      for (std::size_t i = 0; i < k; ++i) w.push_back(uniform_matrix(rng, 3, 2, -1.0, 1.0));
      const auto multi = FilterSpec::multichannel(w);
      worst = std::max(worst, rel_error(poly_filter_apply(a, z, multi), spectral_oracle(a, z, multi)));
      cases += 2;
    }
  }
  const double t = seconds_since(t0);
  return {worst <= 1e-8 && t < 10.0,
          fmt("%zu cases, max rel error %.3g (tol 1e-8), %.2fs (limit 10s)", cases, worst, t)};
}

Outcome crit2_eigenvalue_bound() {
  Rng rng(202);
  double lo = 1e300, hi = -1e300;
  for (std::size_t g = 0; g < 100; ++g) {
    const std::size_t n = 4 + rng.index(61);
    const AffinityMatrix a = random_sym_affinity(rng, n);
    const Matrix l = Matrix::identity(n) - a.values;
    for (double v : jacobi_eigh(l).eigenvalues) {
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
  }
  return {lo >= -1e-9 && hi <= 2.0 + 1e-9,
          fmt("100 affinities, eigenvalues of I-A in [%.3g, %.17g]", lo, hi)};
}

// Near-rank-deficient feature maps on a 4×4 grid with 8 channels.
std::vector<Matrix> adversarial_inputs(Rng& rng) {
  const std::size_t n = 16, c = 8;
  std::vector<Matrix> out;
  const Matrix row = uniform_matrix(rng, 1, c, -1.0, 1.0);
  const Matrix row2 = uniform_matrix(rng, 1, c, -1.0, 1.0);
  auto rank1 = [&](double noise, double scale) {
    Matrix x(n, c);
    for (std::size_t i = 0; i < n; ++i) {
      const double coef = rng.uniform(-1.0, 1.0) * scale;
      for (std::size_t j = 0; j < c; ++j) x(i, j) = coef * row(0, j) + noise * rng.normal();
    }
    return x;
  };
  out.push_back(rank1(0.0, 1.0));
  out.push_back(rank1(1e-12, 1.0));
  out.push_back(rank1(1e-9, 3.0));
  {
    Matrix x(n, c);  // every row identical
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < c; ++j) x(i, j) = row(0, j);
    out.push_back(x);
  }
  {
    Matrix x(n, c);  // rank 2 plus tiny noise
    for (std::size_t i = 0; i < n; ++i) {
      const double a = rng.uniform(-1, 1), b = rng.uniform(-1, 1);
      for (std::size_t j = 0; j < c; ++j) x(i, j) = a * row(0, j) + b * row2(0, j) + 1e-11 * rng.normal();
    }
    out.push_back(x);
  }
  out.push_back(Matrix(n, c, 1e-14));
  {
    Matrix x = uniform_matrix(rng, n, c, -1.0, 1.0);  // rows of wildly different norms
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < c; ++j) x(i, j) *= std::pow(10.0, -static_cast<double>(i) / 2.0);
    out.push_back(x);
  }
  {
    Matrix x(n, c);  // ±v pairs
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < c; ++j) x(i, j) = (i % 2 ? -1.0 : 1.0) * row(0, j);
    out.push_back(x);
  }
  {
    Matrix x = uniform_matrix(rng, n, c, -1.0, 1.0);  // a block of zero rows
    for (std::size_t i = 0; i < n / 2; ++i)
      for (std::size_t j = 0; j < c; ++j) x(i, j) = 0.0;
    out.push_back(x);
  }
  {
    Matrix x(n, c);  // two duplicated clusters
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < c; ++j) x(i, j) = (i < n / 2 ? row : row2)(0, j) * 2.0;
    out.push_back(x);
  }
  return out;
}

Outcome crit3_symmetry() {
  Rng rng(303);
  BlockConfig snl_cfg{Variant::SNL, 8, 4};
  std::size_t failures = 0, checked = 0;
  auto check = [&](const Matrix& xv, std::uint64_t seed) {
    ++checked;
    try {
      const FeatureMap x(4, 4, xv);
      const auto a = build_block_affinity(x, snl_cfg, random_params(snl_cfg, seed, 0.5));
      if (!(a.values == a.values.transposed())) ++failures;
      jacobi_eigh(a.values);
    } catch (const Error&) {
      ++failures;
    }
  };
  for (std::uint64_t s = 0; s < 1000; ++s) check(uniform_matrix(rng, 16, 8, -1.0, 1.0), s);
  const auto adversarial = adversarial_inputs(rng);
  for (std::size_t i = 0; i < adversarial.size(); ++i) check(adversarial[i], 5000 + i);

  // Random-walk affinity of the plain NL block with the dot kernel; positive
  // features and projections keep the kernel inside its domain.
  BlockConfig nl_cfg{Variant::NL, 8, 4};
  nl_cfg.kernel = Kernel::Dot;
  std::size_t asymmetric = 0;
  const std::size_t trials = 1000;
  for (std::uint64_t s = 0; s < trials; ++s) {
    BlockParams p = init_params(nl_cfg, s);
    p.w_phi = uniform_matrix(rng, 8, 4, 0.0, 1.0);
    p.w_psi = uniform_matrix(rng, 8, 4, 0.0, 1.0);
    const FeatureMap x(4, 4, uniform_matrix(rng, 16, 8, 0.0, 1.0));
    const auto a = build_block_affinity(x, nl_cfg, p);
    if (max_asymmetry(a.values) > kSymmetryTolerance) ++asymmetric;
  }
  const double rate = static_cast<double>(asymmetric) / trials;
  return {failures == 0 && adversarial.size() == 10 && rate > 0.9,
          fmt("SNL: %zu/%zu failures (%zu adversarial); NL random-walk asymmetric on %.1f%%",
              failures, checked, adversarial.size(), 100.0 * rate)};
}

Outcome crit4_unification() {
  const Variant variants[] = {Variant::NL, Variant::NS, Variant::A2, Variant::CGNL, Variant::CC};
  double worst = 0.0;
  std::size_t cases = 0;
  Rng rng(404);
  for (Variant v : variants) {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
      BlockConfig cfg{v, 6, 3};
      const FeatureMap x(4, 5, uniform_matrix(rng, 20, 6, -1.0, 1.0));
      const BlockParams p = random_params(cfg, seed);
      const FeatureMap specialized = block_forward(x, cfg, p);
      const auto a = build_block_affinity(x, cfg, p);
      const FeatureMap generic = unified_forward(x, unified_form(x, cfg, p, a));
      worst = std::max(worst, rel_error(specialized.values(), generic.values()));
      ++cases;
    }
  }
  return {worst <= 1e-12, fmt("%zu cases, max rel error %.3g (tol 1e-12)", cases, worst)};
}

Outcome crit5_tied_weights() {
  double worst_ns = 0.0, worst_nl = 0.0;
  Rng rng(505);
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const FeatureMap x(3, 4, uniform_matrix(rng, 12, 6, -1.0, 1.0));
    BlockConfig cheb{Variant::CHEB_K, 6, 3};
    cheb.order = 2;

    BlockConfig ns{Variant::NS, 6, 3};
    const BlockParams pn = random_params(ns, seed);
    BlockParams tied = pn;
    tied.filter = {pn.filter[0] * -1.0, pn.filter[0]};
    const auto a_ns = build_block_affinity(x, ns, pn);
    worst_ns = std::max(worst_ns, rel_error(block_forward_with_affinity(x, cheb, tied, a_ns).values(),
                                            block_forward(x, ns, pn).values()));

    BlockConfig nl{Variant::NL, 6, 3};
    const BlockParams pl = random_params(nl, seed + 100);
    BlockParams second = pl;
    second.filter = {Matrix(3, 6), pl.filter[0]};
    const auto a_nl = build_block_affinity(x, nl, pl);
    worst_nl = std::max(worst_nl, rel_error(block_forward_with_affinity(x, cheb, second, a_nl).values(),
                                            block_forward(x, nl, pl).values()));
  }
  return {worst_ns <= 1e-12 && worst_nl <= 1e-12,
          fmt("NS vs CHEB_K(W1=-W,W2=W) %.3g; NL vs CHEB_K(W1=0) %.3g (tol 1e-12, 10 seeds)",
              worst_ns, worst_nl)};
}

Outcome crit6_gradients() {
  const auto t0 = Clock::now();
  std::size_t runs = 0, failed = 0;
  double worst = 0.0;
  const GradCheckShape shape{3, 3, 4, 2};
  for (Variant v : kAllVariants) {
    for (bool through_a : {true, false}) {
      for (std::uint64_t seed = 1; seed <= 3; ++seed) {
        BlockConfig cfg{v, 4, 2};
        cfg.order = 3;
        cfg.backprop_affinity = through_a;
        bool ok = true;
        for (const auto& r : check_block_gradients(cfg, seed, shape, 1e-4, 1e-5)) {
          ok = ok && r.passed;
          worst = std::max(worst, r.max_rel_error);
        }
        ++runs;
        if (!ok) ++failed;
      }
    }
  }
  const double t = seconds_since(t0);
  return {failed == 0 && runs == 54 && t < 60.0,
          fmt("%zu/%zu runs passed, max rel error %.3g (tol 1e-4), %.2fs (limit 60s)", runs - failed,
              runs, worst, t)};
}

struct TrainingRuns {
  std::map<std::size_t, std::vector<Evaluation>> snl;  // by C_s
  std::vector<Evaluation> baseline;
  double crit7_seconds = 0.0;
};

Evaluation train_once(std::optional<BlockConfig> block, std::uint64_t seed) {
  TrainConfig cfg;
  cfg.block = block;
  return run_training(cfg, seed).final;
}

std::string compare_runs(const std::vector<Evaluation>& base, const std::vector<Evaluation>& snl,
                         bool* ok) {
  std::string detail;
  *ok = base.size() == snl.size() && !base.empty();
  for (std::size_t i = 0; i < base.size(); ++i) {
    const bool lower = snl[i].loss < base[i].loss;
    const bool gap = snl[i].accuracy - base[i].accuracy >= 0.10;
    *ok = *ok && lower && gap;
    detail += fmt(" [seed %zu: loss %.4f vs %.4f, acc %.3f vs %.3f%s]", i + 1, snl[i].loss,
                  base[i].loss, snl[i].accuracy, base[i].accuracy, lower && gap ? "" : " FAIL");
  }
  return detail;
}

Outcome crit7_long_range(TrainingRuns& runs) {
  const auto t0 = Clock::now();
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    runs.baseline.push_back(train_once(std::nullopt, seed));
    runs.snl[8].push_back(train_once(BlockConfig{Variant::SNL, 8, 8}, seed));
  }
  runs.crit7_seconds = seconds_since(t0);
  bool ok = false;
  const std::string detail = compare_runs(runs.baseline, runs.snl[8], &ok);
  return {ok && runs.crit7_seconds < 300.0,
          fmt("SNL(C_s=8) vs baseline, %.1fs (limit 300s):", runs.crit7_seconds) + detail};
}

Outcome crit8_reduction_ratios(TrainingRuns& runs) {
  bool all = true;
  std::string detail;
  for (std::size_t cs : {std::size_t{4}, std::size_t{2}}) {
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
      runs.snl[cs].push_back(train_once(BlockConfig{Variant::SNL, 8, cs}, seed));
    }
  }
  for (std::size_t cs : {std::size_t{8}, std::size_t{4}, std::size_t{2}}) {
    bool ok = false;
    detail += fmt(" C_s=%zu:", cs) + compare_runs(runs.baseline, runs.snl[cs], &ok);
    all = all && ok;
  }
  return {all, "criterion 7 per reduction ratio;" + detail};
}

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(is), {}};
}

int run_command(const std::string& cmd) {
  const int status = std::system((cmd + " > /dev/null 2>&1").c_str());
  return status == -1 ? -1 : WEXITSTATUS(status);
}

Outcome crit9_determinism(const std::string& cli, const fs::path& work) {
  if (cli.empty()) return {false, "no CLI path given (--cli)"};
  fs::remove_all(work);
  fs::create_directories(work);
  const fs::path config = work / "train.json";
  std::ofstream(config) << R"({"block": {"variant": "SNL", "c_s": 4}, "samples": 64, "steps": 200})";
  const std::string q = "'";
  std::vector<std::string> produced;
  std::string detail;
  bool ok = true;
  for (int run = 0; run < 2; ++run) {
    const fs::path out = work / ("run" + std::to_string(run));
    const std::string base = q + cli + q;
    const int a = run_command(base + " verify --seed 7 --out " + q + (out / "verify").string() + q);
    const int b = run_command(base + " gradcheck --seed 7 --out " + q + (out / "gradcheck").string() + q);
    const int c = run_command(base + " train --config " + q + config.string() + q +
                              " --seed 7 --out " + q + (out / "train").string() + q);
    if (a != 0 || b != 0 || c != 0) {
      ok = false;
      detail += fmt("; run %d exit codes verify=%d gradcheck=%d train=%d", run, a, b, c);
    }
  }
  std::size_t files = 0;
  for (const auto& entry : fs::recursive_directory_iterator(work / "run0")) {
    if (!entry.is_regular_file()) continue;
    const fs::path rel = fs::relative(entry.path(), work / "run0");
    const fs::path other = work / "run1" / rel;
    ++files;
    if (!fs::exists(other) || slurp(entry.path()) != slurp(other)) {
      ok = false;
      detail += "; differs: " + rel.string();
    }
  }
  for (const char* expected : {"verify/verify.csv", "gradcheck/gradcheck.csv", "train/metrics.csv"}) {
    if (!fs::exists(work / "run0" / expected)) {
      ok = false;
      detail += std::string("; missing ") + expected;
    }
  }
  return {ok && files >= 3, fmt("%zu files compared across two runs", files) + detail};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance criteria"};
  std::string cli;
  std::string work = (fs::temp_directory_path() / "snl_acceptance").string();
  std::vector<int> only;
  app.add_option("--cli", cli, "path to the snl executable");
  app.add_option("--work", work, "scratch directory");
  app.add_option("--only", only, "criterion numbers to run")->delimiter(',');
  CLI11_PARSE(app, argc, argv);

  const std::set<int> selected(only.begin(), only.end());
  auto wanted = [&](int n) { return selected.empty() || selected.count(n) > 0; };

  TrainingRuns runs;
  std::vector<std::pair<int, std::function<Outcome()>>> criteria = {
      {1, crit1_spectral_equivalence},
      {2, crit2_eigenvalue_bound},
      {3, crit3_symmetry},
      {4, crit4_unification},
      {5, crit5_tied_weights},
      {6, crit6_gradients},
      {7, [&] { return crit7_long_range(runs); }},
      {8,
       [&] {
         if (runs.baseline.empty()) crit7_long_range(runs);
         return crit8_reduction_ratios(runs);
       }},
      {9, [&] { return crit9_determinism(cli, work); }},
  };
  int failed = 0;
  for (auto& [n, fn] : criteria) {
    if (!wanted(n)) continue;
    Outcome o;
    try {
      o = fn();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    std::printf("%s criterion %d: %s\n", o.passed ? "PASS" : "FAIL", n, o.detail.c_str());
    std::fflush(stdout);
    if (!o.passed) ++failed;
  }
  return failed == 0 ? 0 : 1;
}
