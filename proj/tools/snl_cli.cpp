// Command-line front end. Talks to the library only through the C API.
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "snl/snl.h"

namespace fs = std::filesystem;

namespace {

constexpr int kExitPass = 0;
constexpr int kExitSuiteFailure = 1;
constexpr int kExitUsage = 2;

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Malformed input maps to the usage exit code; anything else is a failure
// of the requested computation.
int exit_code_for(snl_status s) {
  switch (s) {
    case SNL_OK: return kExitPass;
    case SNL_ERR_CONFIG:
    case SNL_ERR_IO:
    case SNL_ERR_INVALID_ARGUMENT: return kExitUsage;
    default: return kExitSuiteFailure;
  }
}

struct Failure {
  snl_status status;
};

void check(snl_status s, const std::string& what) {
  if (s != SNL_OK) {
    std::cerr << "snl: " << what << ": " << snl_status_string(s) << ": " << snl_last_error()
              << '\n';
    throw Failure{s};
  }
}

std::string read_file(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw UsageError("cannot read " + path);
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

void write_file(const fs::path& path, const std::string& content) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw UsageError("cannot write " + path.string());
  os << content;
}

void prepare_dir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw UsageError("cannot create " + dir + ": " + ec.message());
}

std::vector<std::size_t> parse_list(const std::string& text, const char* flag) {
  std::vector<std::size_t> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      const unsigned long long v = std::stoull(item, &used);
      if (used != item.size()) throw std::invalid_argument(item);
      out.push_back(static_cast<std::size_t>(v));
    } catch (const std::exception&) {
      throw UsageError(std::string(flag) + ": bad entry '" + item + "'");
    }
  }
  if (out.empty()) throw UsageError(std::string(flag) + " is empty");
  return out;
}

struct ReportGuard {
  snl_report* r = nullptr;
  ~ReportGuard() { snl_report_destroy(r); }
};

int cmd_verify(const std::string& filter, std::uint64_t seed, const std::string& out) {
  ReportGuard rep;
  check(snl_verify_run(filter.c_str(), seed, &rep.r), "verify");
  std::cout << snl_report_table(rep.r);
  if (!out.empty()) {
    prepare_dir(out);
    write_file(fs::path(out) / "verify.csv", snl_report_csv(rep.r));
  }
  return snl_report_passed(rep.r) ? kExitPass : kExitSuiteFailure;
}

int cmd_gradcheck(const std::string& variant, double tol, std::uint64_t seed, std::size_t seeds,
                  const std::string& out) {
  ReportGuard rep;
  check(snl_gradcheck_run(variant.empty() ? nullptr : variant.c_str(), tol, seed, seeds, &rep.r),
        "gradcheck");
  std::cout << snl_report_table(rep.r);
  if (!out.empty()) {
    prepare_dir(out);
    write_file(fs::path(out) / "gradcheck.csv", snl_report_csv(rep.r));
  }
  return snl_report_passed(rep.r) ? kExitPass : kExitSuiteFailure;
}

int cmd_train(const std::string& config, std::uint64_t seed, const std::string& out) {
  const std::string json = read_file(config);
  ReportGuard rep;
  check(snl_train_run(json.c_str(), seed, &rep.r), "train");
  std::cout << snl_report_table(rep.r);
  prepare_dir(out);
  write_file(fs::path(out) / "metrics.csv", snl_report_csv(rep.r));
  return kExitPass;
}

std::pair<std::size_t, std::size_t> grid_for(std::size_t rows, const std::string& grid) {
  if (!grid.empty()) {
    const auto x = grid.find('x');
    if (x == std::string::npos) throw UsageError("--grid expects HxW");
    const auto dims = parse_list(grid.substr(0, x) + "," + grid.substr(x + 1), "--grid");
    if (dims.size() != 2 || dims[0] * dims[1] != rows) {
      throw UsageError("--grid " + grid + " does not match " + std::to_string(rows) + " rows");
    }
    return {dims[0], dims[1]};
  }
  std::size_t side = 1;
  while (side * side < rows) ++side;
  if (side * side != rows) throw UsageError("input rows are not a square grid; pass --grid HxW");
  return {side, side};
}

int cmd_export(const std::string& input, const std::string& block_cfg, const std::string& params,
               const std::string& positions, const std::string& grid, std::uint64_t seed,
               const std::string& out) {
  struct Handles {
    snl_matrix* x = nullptr;
    snl_matrix* a = nullptr;
    snl_block* b = nullptr;
    ~Handles() {
      snl_matrix_destroy(x);
      snl_matrix_destroy(a);
      snl_block_destroy(b);
    }
  } h;
  check(snl_matrix_load(input.c_str(), &h.x), "loading " + input);
  if (!params.empty()) {
    check(snl_block_load(params.c_str(), &h.b), "loading parameters");
  } else {
    if (block_cfg.empty()) throw UsageError("export-attention needs --block or --params");
    check(snl_block_create(read_file(block_cfg).c_str(), seed, &h.b), "block config");
  }
  const std::size_t rows = snl_matrix_rows(h.x);
  const auto [height, width] = grid_for(rows, grid);
  check(snl_block_affinity(h.b, height, width, h.x, &h.a), "affinity");
  const std::size_t vertices = snl_matrix_rows(h.a);
  if (vertices != rows) {
    throw UsageError("attention rows are only defined for position graphs (not CGNL)");
  }

  prepare_dir(out);
  const double* data = snl_matrix_data(h.a);
  for (std::size_t p : parse_list(positions, "--positions")) {
    if (p >= rows) throw UsageError("position " + std::to_string(p) + " out of range");
    const fs::path file = fs::path(out) / ("attention_" + std::to_string(p) + ".pgm");
    check(snl_write_heatmap_pgm(data + p * vertices, height, width, file.string().c_str()),
          "heatmap");
    std::cout << "wrote " << file.string() << '\n';
  }
  return kExitPass;
}

int cmd_bench(const std::string& sizes, const std::string& out) {
  const auto list = parse_list(sizes, "--sizes");
  ReportGuard rep;
  check(snl_bench_run(list.data(), list.size(), &rep.r), "bench");
  std::cout << snl_report_table(rep.r);
  if (!out.empty()) {
    prepare_dir(out);
    write_file(fs::path(out) / "bench.csv", snl_report_csv(rep.r));
  }
  return snl_report_passed(rep.r) ? kExitPass : kExitSuiteFailure;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Spectral nonlocal blocks: verification, gradient checks, toy training"};
  app.require_subcommand(1);

  std::uint64_t seed = 20210923;
  std::string out, filter, variant, config, input, block_cfg, params, positions, grid;
  std::string sizes = "64,256,1024";
  double tol = 1e-4;
  std::size_t seeds = 3;

  auto* verify = app.add_subcommand("verify", "run the spectral and unification invariant suites");
  verify->add_option("--filter", filter, "only suites whose name contains this text");
  verify->add_option("--seed", seed, "seed for the random test inputs");
  verify->add_option("--out", out, "directory for verify.csv");

  auto* gradcheck = app.add_subcommand("gradcheck", "finite-difference check of block gradients");
  gradcheck->add_option("--variant", variant, "NL, NS, A2, CGNL, CC, SNL, SNL_A1, SNL_A2, CHEB_K");
  gradcheck->add_option("--tol", tol, "max relative error");
  gradcheck->add_option("--seeds", seeds, "seeds per variant and mode");
  gradcheck->add_option("--seed", seed, "first seed");
  gradcheck->add_option("--out", out, "directory for gradcheck.csv");

  auto* train = app.add_subcommand("train", "train the toy network on the paired-patch task");
  train->add_option("--config", config, "JSON training config")->required();
  train->add_option("--seed", seed, "seed for data, initialisation and batching");
  train->add_option("--out", out, "directory for metrics.csv")->required();

  auto* exp = app.add_subcommand("export-attention", "write attention rows as PGM heatmaps");
  exp->add_option("--input", input, "feature map matrix (CSV or binary), N x C")->required();
  exp->add_option("--block", block_cfg, "block config JSON");
  exp->add_option("--params", params, "saved parameter directory (overrides --block)");
  exp->add_option("--positions", positions, "comma-separated grid positions")->required();
  exp->add_option("--grid", grid, "HxW; defaults to a square grid");
  exp->add_option("--seed", seed, "parameter initialisation seed");
  exp->add_option("--out", out, "output directory")->required();

  auto* bench = app.add_subcommand("bench", "time block_forward per variant");
  bench->add_option("--sizes", sizes, "comma-separated position counts");
  bench->add_option("--out", out, "directory for bench.csv");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  try {
    if (*verify) return cmd_verify(filter, seed, out);
    if (*gradcheck) return cmd_gradcheck(variant, tol, seed, seeds, out);
    if (*train) return cmd_train(config, seed, out);
    if (*exp) return cmd_export(input, block_cfg, params, positions, grid, seed, out);
    if (*bench) return cmd_bench(sizes, out);
  } catch (const UsageError& e) {
    std::cerr << "snl: " << e.what() << '\n';
    return kExitUsage;
  } catch (const Failure& f) {
    return exit_code_for(f.status);
  }
  return kExitUsage;
}
