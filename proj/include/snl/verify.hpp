#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "snl/blocks.hpp"
#include "snl/graph.hpp"
#include "snl/random.hpp"

namespace snl {

struct SuiteResult {
  std::string name;
  bool passed = false;
  std::size_t cases = 0;
  double max_error = 0.0;  // suite-specific metric compared against tolerance
  double tolerance = 0.0;
  std::string detail;
};

inline constexpr std::uint64_t kDefaultVerifySeed = 20210923;

std::vector<std::string> verify_suite_names();

// Runs every suite whose name contains `filter` (all when empty). Fails with
// a config error when the filter matches nothing.
std::vector<SuiteResult> run_verify(const std::string& filter, std::uint64_t seed);

bool all_passed(const std::vector<SuiteResult>& results);
std::string format_verify_table(const std::vector<SuiteResult>& results);
std::string format_verify_csv(const std::vector<SuiteResult>& results);

// Random instances shared by the suites and the acceptance checks.
Matrix random_matrix(Rng& rng, std::size_t rows, std::size_t cols, double lo = -1.0,
                     double hi = 1.0);
Matrix random_symmetric(Rng& rng, std::size_t n);
// exp_dot kernel over random features, symmetrised, then D^{-1/2}·D^{-1/2}.
AffinityMatrix random_symmetric_affinity(Rng& rng, std::size_t n, std::size_t c_s = 4,
                                         double feature_scale = 1.0);
FeatureMap random_feature_map(Rng& rng, std::size_t height, std::size_t width,
                              std::size_t channels, double scale = 1.0);

}  // namespace snl
