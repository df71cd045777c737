#include "snl/bench.hpp"

#include <chrono>
#include <cmath>
#include <sstream>

#include "snl/error.hpp"
#include "snl/matrix_io.hpp"
#include "snl/verify.hpp"

namespace snl {

namespace {

double time_forward(const FeatureMap& x, const BlockConfig& cfg, const BlockParams& p,
                    std::size_t repeats) {
  double best = 0.0;
  for (std::size_t r = 0; r < repeats; ++r) {
    const auto start = std::chrono::steady_clock::now();
    const FeatureMap y = block_forward(x, cfg, p);
    const auto stop = std::chrono::steady_clock::now();
    const double s = std::chrono::duration<double>(stop - start).count();
    if (r == 0 || s < best) best = s;
    if (y.values().empty()) fail(ErrorCode::Numeric, "empty forward output");
  }
  return best;
}

std::size_t grid_side(std::size_t n) {
  const auto side = static_cast<std::size_t>(std::llround(std::sqrt(static_cast<double>(n))));
  if (side == 0 || side * side != n) {
    fail(ErrorCode::Config, "bench size " + std::to_string(n) + " is not a square grid");
  }
  return side;
}

}  // namespace

BenchResult run_bench(const std::vector<std::size_t>& sizes, std::size_t repeats) {
  if (sizes.empty()) fail(ErrorCode::Config, "bench needs at least one size");
  if (repeats == 0) repeats = 1;
  BenchResult out;
  Rng rng(7);
  std::size_t sweep_n = 0;
  for (std::size_t n : sizes) {
    const std::size_t side = grid_side(n);
    const FeatureMap x = random_feature_map(rng, side, side, kBenchChannels, 0.5);
    for (Variant v : kAllVariants) {
      const BlockConfig cfg{v, kBenchChannels, kBenchReduced, 3};
      if (v == Variant::CGNL && n * cfg.c_s > kMaxFlattenedVertices) continue;
      const BlockParams p = random_params(cfg, rng.next(), 0.3);
      out.rows.push_back({v, n, v == Variant::CHEB_K ? cfg.order : filter_count(cfg),
                          time_forward(x, cfg, p, repeats)});
    }
    if (n <= 256) sweep_n = std::max(sweep_n, n);
  }
  if (sweep_n == 0) sweep_n = sizes.front();

  const std::size_t side = grid_side(sweep_n);
  const FeatureMap x = random_feature_map(rng, side, side, kBenchChannels, 0.5);
  for (std::size_t k = 2; k <= 6; ++k) {
    const BlockConfig cfg{Variant::CHEB_K, kBenchChannels, kBenchReduced, k};
    const BlockParams p = random_params(cfg, rng.next(), 0.3);
    out.order_sweep.push_back({Variant::CHEB_K, sweep_n, k, time_forward(x, cfg, p, repeats)});
  }
  const double base = out.order_sweep.front().seconds;
  const double top = out.order_sweep.back().seconds;
  out.linear_in_order = top <= 5.0 * base;
  return out;
}

std::string format_bench_csv(const BenchResult& result) {
  std::ostringstream os;
  os << "kind,variant,n,order,seconds\n";
  for (const BenchRow& r : result.rows) {
    os << "size," << to_string(r.variant) << ',' << r.positions << ',' << r.order << ','
       << format_double(r.seconds) << '\n';
  }
  for (const BenchRow& r : result.order_sweep) {
    os << "order," << to_string(r.variant) << ',' << r.positions << ',' << r.order << ','
       << format_double(r.seconds) << '\n';
  }
  os << "# linear_in_order," << (result.linear_in_order ? 1 : 0) << '\n';
  return os.str();
}

}  // namespace snl
