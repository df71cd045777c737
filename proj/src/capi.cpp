#include "snl/snl.h"

#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <fstream>
#include <memory>
#include <new>
#include <sstream>
#include <string>

#include "snl/bench.hpp"
#include "snl/blocks.hpp"
#include "snl/error.hpp"
#include "snl/gradcheck.hpp"
#include "snl/harness.hpp"
#include "snl/matrix_io.hpp"
#include "snl/verify.hpp"

struct snl_matrix {
  snl::Matrix value;
};

struct snl_block {
  snl::BlockConfig config;
  snl::BlockParams params;
};

struct snl_report {
  bool passed = false;
  std::string table;
  std::string csv;
};

namespace {

thread_local std::string last_error;

snl_status to_status(snl::ErrorCode code) {
  switch (code) {
    case snl::ErrorCode::Shape: return SNL_ERR_SHAPE;
    case snl::ErrorCode::Symmetry: return SNL_ERR_SYMMETRY;
    case snl::ErrorCode::Convergence: return SNL_ERR_CONVERGENCE;
    case snl::ErrorCode::Overflow: return SNL_ERR_OVERFLOW;
    case snl::ErrorCode::KernelDomain: return SNL_ERR_KERNEL_DOMAIN;
    case snl::ErrorCode::DegenerateVertex: return SNL_ERR_DEGENERATE_VERTEX;
    case snl::ErrorCode::Precondition: return SNL_ERR_PRECONDITION;
    case snl::ErrorCode::Spec: return SNL_ERR_SPEC;
    case snl::ErrorCode::Numeric: return SNL_ERR_NUMERIC;
    case snl::ErrorCode::Config: return SNL_ERR_CONFIG;
    case snl::ErrorCode::Divergence: return SNL_ERR_DIVERGENCE;
    case snl::ErrorCode::Io: return SNL_ERR_IO;
  }
  return SNL_ERR_INTERNAL;
}

// Runs body, translating exceptions into status codes.
template <typename F>
snl_status guarded(F&& body) {
  try {
    body();
    return SNL_OK;
  } catch (const snl::Error& e) {
    last_error = e.what();
    return to_status(e.code());
  } catch (const std::bad_alloc&) {
    last_error = "out of memory";
    return SNL_ERR_INTERNAL;
  } catch (const std::exception& e) {
    last_error = e.what();
    return SNL_ERR_INTERNAL;
  }
}

snl_status invalid(const char* what) {
  last_error = what;
  return SNL_ERR_INVALID_ARGUMENT;
}

snl_matrix* wrap(snl::Matrix m) { return new snl_matrix{std::move(m)}; }

snl::FeatureMap as_feature_map(std::size_t h, std::size_t w, const snl_matrix* x) {
  return snl::FeatureMap(h, w, x->value);
}

}  // namespace

extern "C" {

const char* snl_version(void) { return "0.1.0"; }

const char* snl_status_string(snl_status status) {
  switch (status) {
    case SNL_OK: return "ok";
    case SNL_ERR_INVALID_ARGUMENT: return "invalid argument";
    case SNL_ERR_INTERNAL: return "internal error";
    default: break;
  }
  return snl::to_string(static_cast<snl::ErrorCode>(status));
}

const char* snl_last_error(void) { return last_error.c_str(); }

snl_status snl_matrix_create(size_t rows, size_t cols, const double* data, snl_matrix** out) {
  if (!out || (!data && rows * cols > 0)) return invalid("snl_matrix_create: null argument");
  return guarded([&] {
    *out = wrap(snl::Matrix(rows, cols, std::vector<double>(data, data + rows * cols)));
  });
}

void snl_matrix_destroy(snl_matrix* m) { delete m; }
size_t snl_matrix_rows(const snl_matrix* m) { return m ? m->value.rows() : 0; }
size_t snl_matrix_cols(const snl_matrix* m) { return m ? m->value.cols() : 0; }
const double* snl_matrix_data(const snl_matrix* m) { return m ? m->value.data().data() : nullptr; }

snl_status snl_matrix_load(const char* path, snl_matrix** out) {
  if (!path || !out) return invalid("snl_matrix_load: null argument");
  return guarded([&] { *out = wrap(snl::load_matrix(path)); });
}

snl_status snl_matrix_save_csv(const snl_matrix* m, const char* path) {
  if (!m || !path) return invalid("snl_matrix_save_csv: null argument");
  return guarded([&] { snl::save_csv(path, m->value); });
}

snl_status snl_matrix_save_binary(const snl_matrix* m, const char* path) {
  if (!m || !path) return invalid("snl_matrix_save_binary: null argument");
  return guarded([&] { snl::save_binary(path, m->value); });
}

snl_status snl_matrix_matmul(const snl_matrix* a, const snl_matrix* b, snl_matrix** out) {
  if (!a || !b || !out) return invalid("snl_matrix_matmul: null argument");
  return guarded([&] { *out = wrap(snl::matmul(a->value, b->value)); });
}

snl_status snl_matrix_eigh(const snl_matrix* s, snl_matrix** eigenvalues,
                           snl_matrix** eigenvectors) {
  if (!s || !eigenvalues || !eigenvectors) return invalid("snl_matrix_eigh: null argument");
  return guarded([&] {
    snl::SpectralDecomposition d = snl::jacobi_eigh(s->value);
    snl::Matrix vals = snl::Matrix::column(d.eigenvalues);
    *eigenvalues = wrap(std::move(vals));
    *eigenvectors = wrap(std::move(d.eigenvectors));
  });
}

snl_status snl_block_create(const char* config_json, uint64_t seed, snl_block** out) {
  if (!config_json || !out) return invalid("snl_block_create: null argument");
  return guarded([&] {
    const snl::BlockConfig cfg = snl::block_config_from_json(config_json);
    *out = new snl_block{cfg, snl::init_params(cfg, seed)};
  });
}

snl_status snl_block_load(const char* params_dir, snl_block** out) {
  if (!params_dir || !out) return invalid("snl_block_load: null argument");
  return guarded([&] {
    snl::BlockConfig cfg;
    snl::BlockParams p = snl::load_params(params_dir, &cfg);
    *out = new snl_block{cfg, std::move(p)};
  });
}

void snl_block_destroy(snl_block* b) { delete b; }

snl_status snl_block_save(const snl_block* b, const char* params_dir) {
  if (!b || !params_dir) return invalid("snl_block_save: null argument");
  return guarded([&] { snl::save_params(params_dir, b->config, b->params); });
}

snl_status snl_block_config_json(const snl_block* b, char** out) {
  if (!b || !out) return invalid("snl_block_config_json: null argument");
  return guarded([&] {
    const std::string s = snl::to_json(b->config);
    char* buf = static_cast<char*>(std::malloc(s.size() + 1));
    if (!buf) throw std::bad_alloc();
    std::memcpy(buf, s.c_str(), s.size() + 1);
    *out = buf;
  });
}

snl_status snl_block_forward(const snl_block* b, size_t height, size_t width,
                             const snl_matrix* x, snl_matrix** y) {
  if (!b || !x || !y) return invalid("snl_block_forward: null argument");
  return guarded([&] {
    *y = wrap(snl::block_forward(as_feature_map(height, width, x), b->config, b->params).values());
  });
}

snl_status snl_block_affinity(const snl_block* b, size_t height, size_t width,
                              const snl_matrix* x, snl_matrix** affinity) {
  if (!b || !x || !affinity) return invalid("snl_block_affinity: null argument");
  return guarded([&] {
    *affinity = wrap(
        snl::build_block_affinity(as_feature_map(height, width, x), b->config, b->params).values);
  });
}

snl_status snl_block_backward_input(const snl_block* b, size_t height, size_t width,
                                    const snl_matrix* x, const snl_matrix* upstream,
                                    snl_matrix** grad_x) {
  if (!b || !x || !upstream || !grad_x) return invalid("snl_block_backward_input: null argument");
  return guarded([&] {
    *grad_x = wrap(snl::block_backward(as_feature_map(height, width, x), b->config, b->params,
                                       upstream->value)
                       .x);
  });
}

snl_status snl_write_heatmap_pgm(const double* row, size_t height, size_t width,
                                 const char* path) {
  if (!row || !path) return invalid("snl_write_heatmap_pgm: null argument");
  return guarded([&] {
    const std::string pgm = snl::encode_pgm_heatmap({row, height * width}, height, width);
    std::ofstream os(path, std::ios::binary);
    if (!os) snl::fail(snl::ErrorCode::Io, std::string("cannot write ") + path);
    os.write(pgm.data(), static_cast<std::streamsize>(pgm.size()));
  });
}

snl_status snl_verify_run(const char* filter, uint64_t seed, snl_report** out) {
  if (!out) return invalid("snl_verify_run: null argument");
  return guarded([&] {
    const auto results = snl::run_verify(filter ? filter : "", seed);
    *out = new snl_report{snl::all_passed(results), snl::format_verify_table(results),
                          snl::format_verify_csv(results)};
  });
}

snl_status snl_gradcheck_run(const char* variant, double tolerance, uint64_t seed,
                             size_t n_seeds, snl_report** out) {
  if (!out) return invalid("snl_gradcheck_run: null argument");
  if (!(tolerance > 0.0) || n_seeds == 0) return invalid("snl_gradcheck_run: bad tolerance/seeds");
  return guarded([&] {
    std::vector<snl::Variant> variants;
    if (variant && *variant) {
      variants.push_back(snl::parse_variant(variant));
    } else {
      variants.assign(snl::kAllVariants.begin(), snl::kAllVariants.end());
    }
    auto report = std::make_unique<snl_report>();
    report->passed = true;
    bool header = true;
    std::size_t runs = 0, failed_runs = 0;
    for (snl::Variant v : variants) {
      for (bool mode : {false, true}) {
        for (std::size_t s = 0; s < n_seeds; ++s) {
          snl::BlockConfig cfg{v, 4, 2, 3};
          cfg.backprop_affinity = mode;
          const auto reports = snl::check_block_gradients(cfg, seed + s, tolerance,
                                                          snl::kDefaultFdStep);
          const std::string id = std::string(snl::to_string(v)) +
                                 (mode ? "/affinity" : "/constant") + "/seed" +
                                 std::to_string(seed + s);
          report->csv += snl::format_reports_csv(reports, id, header);
          header = false;
          bool ok = true;
          for (const auto& r : reports) ok = ok && r.passed;
          ++runs;
          if (!ok) {
            ++failed_runs;
            report->passed = false;
            report->table += snl::format_reports_table(reports, id + "  FAIL");
          } else {
            report->table += snl::format_reports_table(reports, id);
          }
        }
      }
    }
    report->table += std::to_string(runs - failed_runs) + "/" + std::to_string(runs) +
                     " gradient checks passed\n";
    *out = report.release();
  });
}

snl_status snl_train_run(const char* config_json, uint64_t seed, snl_report** out) {
  if (!config_json || !out) return invalid("snl_train_run: null argument");
  return guarded([&] {
    const snl::TrainConfig cfg = snl::train_config_from_json(config_json);
    const snl::TrainResult result = snl::run_training(cfg, seed);
    std::ostringstream table;
    table << "block: " << (cfg.block ? std::string(snl::to_string(cfg.block->variant)) : "none")
          << "\nsteps: " << cfg.train.steps << "\nfinal loss: "
          << snl::format_double(result.final.loss)
          << "\nfinal accuracy: " << snl::format_double(result.final.accuracy) << '\n';
    *out = new snl_report{true, table.str(), snl::metrics_csv(result.history)};
  });
}

snl_status snl_bench_run(const size_t* sizes, size_t n_sizes, snl_report** out) {
  if (!out || (!sizes && n_sizes > 0)) return invalid("snl_bench_run: null argument");
  return guarded([&] {
    const snl::BenchResult result =
        snl::run_bench(std::vector<std::size_t>(sizes, sizes + n_sizes));
    std::ostringstream table;
    char line[128];
    for (const auto& r : result.rows) {
      std::snprintf(line, sizeof line, "%-8s N=%-5zu %12.6f s\n",
                    std::string(snl::to_string(r.variant)).c_str(), r.positions, r.seconds);
      table << line;
    }
    for (const auto& r : result.order_sweep) {
      std::snprintf(line, sizeof line, "CHEB_K   N=%-5zu K=%zu %12.6f s\n", r.positions, r.order,
                    r.seconds);
      table << line;
    }
    table << "order scaling linear: " << (result.linear_in_order ? "yes" : "NO") << '\n';
    *out = new snl_report{result.linear_in_order, table.str(), snl::format_bench_csv(result)};
  });
}

int snl_report_passed(const snl_report* r) { return r && r->passed ? 1 : 0; }
const char* snl_report_table(const snl_report* r) { return r ? r->table.c_str() : ""; }
const char* snl_report_csv(const snl_report* r) { return r ? r->csv.c_str() : ""; }
void snl_report_destroy(snl_report* r) { delete r; }
void snl_string_free(char* s) { std::free(s); }

}  // extern "C"
