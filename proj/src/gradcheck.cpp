#include "snl/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "snl/error.hpp"
#include "snl/matrix_io.hpp"
#include "snl/parallel.hpp"
#include "snl/random.hpp"

namespace snl {

Matrix finite_diff(const ScalarLoss& loss, const Matrix& point, double eps) {
  if (!(eps > 0.0)) fail(ErrorCode::Precondition, "finite_diff: eps must be positive");
  Matrix grad(point.rows(), point.cols());
  parallel_for(point.size(), [&](std::size_t i) {
    Matrix probe = point;
    const double x0 = point.data()[i];
    probe.data()[i] = x0 + eps;
    const double up = loss(probe);
    probe.data()[i] = x0 - eps;
    const double down = loss(probe);
    if (!std::isfinite(up) || !std::isfinite(down)) {
      fail(ErrorCode::Numeric, "finite_diff: non-finite loss at entry " + std::to_string(i));
    }
    grad.data()[i] = (up - down) / (2.0 * eps);
  });
  return grad;
}

GradReport compare_gradients(const std::string& name, const Matrix& analytic,
                             const Matrix& numeric, double tolerance) {
  require_same_shape(analytic, numeric, "compare_gradients " + name);
  GradReport r;
  r.parameter = name;
  r.checked_entries = analytic.size();
  for (std::size_t i = 0; i < analytic.size(); ++i) {
    const double a = analytic.data()[i], n = numeric.data()[i];
    const double abs_err = std::abs(a - n);
    const double denom = std::max({std::abs(a), std::abs(n), kRelErrorFloor});
    r.max_abs_error = std::max(r.max_abs_error, abs_err);
    r.max_rel_error = std::max(r.max_rel_error, abs_err / denom);
  }
  r.passed = r.max_rel_error <= tolerance;
  return r;
}

std::vector<GradReport> check_block_gradients(const BlockConfig& cfg, std::uint64_t seed,
                                              double tolerance, double eps) {
  return check_block_gradients(cfg, seed, GradCheckShape{}, tolerance, eps);
}

std::vector<GradReport> check_block_gradients(const BlockConfig& cfg_in, std::uint64_t seed,
                                              const GradCheckShape& shape, double tolerance,
                                              double eps) {
  BlockConfig cfg = cfg_in;
  cfg.c_in = shape.c_in;
  cfg.c_s = shape.c_s;
  cfg.validate();
  if (shape.height * shape.width > 16 || shape.c_in > 8) {
    fail(ErrorCode::Precondition, "check_block_gradients is limited to N <= 16, C1 <= 8");
  }

  Rng rng(seed);
  Matrix xv(shape.height * shape.width, shape.c_in);
  for (double& v : xv.data()) v = rng.uniform(-1.0, 1.0);
  const FeatureMap x(shape.height, shape.width, xv);
  const BlockParams params = random_params(cfg, rng.next(), 0.5);

  // Frozen affinity for the constant-A mode.
  const AffinityMatrix frozen = build_block_affinity(x, cfg, params);
  auto forward = [&](const FeatureMap& xf, const BlockParams& p) {
    return cfg.backprop_affinity ? block_forward(xf, cfg, p)
                                 : block_forward_with_affinity(xf, cfg, p, frozen);
  };
  auto sum_sq = [](const Matrix& m) {
    double s = 0.0;
    for (double v : m.data()) s += v * v;
    return s;
  };

  const FeatureMap y = forward(x, params);
  const BlockGradients analytic = block_backward(x, cfg, params, y.values() * 2.0);

  std::vector<GradReport> reports;
  const Matrix num_x = finite_diff(
      [&](const Matrix& probe) {
        return sum_sq(forward(FeatureMap(x.height(), x.width(), probe), params).values());
      },
      xv, eps);
  reports.push_back(compare_gradients("x", analytic.x, num_x, tolerance));

  const auto roles = param_roles(cfg);
  const auto analytic_params = param_list(analytic.params);
  for (std::size_t slot = 0; slot < roles.size(); ++slot) {
    const Matrix& base = *param_list(params)[slot];
    const Matrix numeric = finite_diff(
        [&](const Matrix& probe) {
          BlockParams p = params;
          *param_list(p)[slot] = probe;
          return sum_sq(forward(x, p).values());
        },
        base, eps);
    reports.push_back(compare_gradients(roles[slot], *analytic_params[slot], numeric, tolerance));
  }
  return reports;
}

void require_all_passed(const std::vector<GradReport>& reports, const std::string& context) {
  std::string failed;
  for (const GradReport& r : reports) {
    if (!r.passed) {
      failed += (failed.empty() ? "" : ", ") + r.parameter + " (rel " +
                format_double(r.max_rel_error) + ")";
    }
  }
  if (!failed.empty()) fail(ErrorCode::Numeric, context + ": gradient check failed for " + failed);
}

std::string format_reports_table(const std::vector<GradReport>& reports, const std::string& title) {
  std::ostringstream os;
  if (!title.empty()) os << title << '\n';
  char line[160];
  std::snprintf(line, sizeof line, "  %-10s %14s %14s %8s %6s\n", "parameter", "max_abs_err",
                "max_rel_err", "entries", "ok");
  os << line;
  for (const GradReport& r : reports) {
    std::snprintf(line, sizeof line, "  %-10s %14.6e %14.6e %8zu %6s\n", r.parameter.c_str(),
                  r.max_abs_error, r.max_rel_error, r.checked_entries, r.passed ? "pass" : "FAIL");
    os << line;
  }
  return os.str();
}

std::string format_reports_csv(const std::vector<GradReport>& reports, const std::string& case_id,
                               bool header) {
  std::ostringstream os;
  if (header) os << "case,parameter,max_abs_error,max_rel_error,checked_entries,passed\n";
  for (const GradReport& r : reports) {
    os << case_id << ',' << r.parameter << ',' << format_double(r.max_abs_error) << ','
       << format_double(r.max_rel_error) << ',' << r.checked_entries << ','
       << (r.passed ? 1 : 0) << '\n';
  }
  return os.str();
}

}  // namespace snl
