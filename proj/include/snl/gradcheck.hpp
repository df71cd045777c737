#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "snl/blocks.hpp"
#include "snl/linalg.hpp"

namespace snl {

struct GradReport {
  std::string parameter;
  double max_abs_error = 0.0;
  double max_rel_error = 0.0;
  std::size_t checked_entries = 0;
  bool passed = false;
};

inline constexpr double kDefaultFdStep = 1e-5;
inline constexpr double kDefaultGradTolerance = 1e-4;
inline constexpr double kRelErrorFloor = 1e-8;

using ScalarLoss = std::function<double(const Matrix&)>;

// Central differences (f(x+εe) − f(x−εe)) / 2ε for every entry of `point`.
Matrix finite_diff(const ScalarLoss& loss, const Matrix& point, double eps = kDefaultFdStep);

// Entry-wise comparison with denominator max(|analytic|, |numeric|, 1e-8).
GradReport compare_gradients(const std::string& name, const Matrix& analytic,
                             const Matrix& numeric, double tolerance);

struct GradCheckShape {
  std::size_t height = 3;
  std::size_t width = 3;
  std::size_t c_in = 4;
  std::size_t c_s = 2;
};

// Random X and parameters from `seed`; loss = Σ Y². Reports X first, then
// each parameter in param_roles order. With backprop_affinity off the
// numeric side holds A fixed at its value for the unperturbed inputs.
std::vector<GradReport> check_block_gradients(const BlockConfig& cfg, std::uint64_t seed,
                                              double tolerance = kDefaultGradTolerance,
                                              double eps = kDefaultFdStep);
std::vector<GradReport> check_block_gradients(const BlockConfig& cfg, std::uint64_t seed,
                                              const GradCheckShape& shape, double tolerance,
                                              double eps);

// Throws a numeric error listing every failed parameter.
void require_all_passed(const std::vector<GradReport>& reports, const std::string& context);

std::string format_reports_table(const std::vector<GradReport>& reports,
                                 const std::string& title = {});
// Header: case,parameter,max_abs_error,max_rel_error,checked_entries,passed
std::string format_reports_csv(const std::vector<GradReport>& reports, const std::string& case_id,
                               bool header);

}  // namespace snl
