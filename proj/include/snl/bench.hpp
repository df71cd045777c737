#pragma once

#include <string>
#include <vector>

#include "snl/blocks.hpp"

namespace snl {

struct BenchRow {
  Variant variant;
  std::size_t positions;
  std::size_t order;
  double seconds;  // mean wall time of one block_forward
};

struct BenchResult {
  std::vector<BenchRow> rows;
  std::vector<BenchRow> order_sweep;  // CHEB_K, K = 2..6, fixed N
  // Incremental cost per extra order stays within a constant factor of the
  // K=2 forward, as expected when A^k is never materialised.
  bool linear_in_order = false;
};

inline constexpr std::size_t kBenchChannels = 8;
inline constexpr std::size_t kBenchReduced = 4;

// Side length of the grid is √N; non-square sizes are rejected. Variants
// whose flattened graph would exceed the size guard are skipped.
BenchResult run_bench(const std::vector<std::size_t>& sizes, std::size_t repeats = 3);

std::string format_bench_csv(const BenchResult& result);

}  // namespace snl
