/*
 * C interface to the spectral nonlocal library.
 *
 * Every object is an opaque handle released by its *_destroy function.
 * Functions return an snl_status; on failure snl_last_error() holds a
 * message for the calling thread until its next failing call.
 */
#ifndef SNL_SNL_H
#define SNL_SNL_H

#include <stddef.h>
#include <stdint.h>

#if defined(SNL_BUILDING_LIBRARY)
#define SNL_API __attribute__((visibility("default")))
#else
#define SNL_API
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum snl_status {
  SNL_OK = 0,
  SNL_ERR_SHAPE = 1,
  SNL_ERR_SYMMETRY = 2,
  SNL_ERR_CONVERGENCE = 3,
  SNL_ERR_OVERFLOW = 4,
  SNL_ERR_KERNEL_DOMAIN = 5,
  SNL_ERR_DEGENERATE_VERTEX = 6,
  SNL_ERR_PRECONDITION = 7,
  SNL_ERR_SPEC = 8,
  SNL_ERR_NUMERIC = 9,
  SNL_ERR_CONFIG = 10,
  SNL_ERR_DIVERGENCE = 11,
  SNL_ERR_IO = 12,
  SNL_ERR_INVALID_ARGUMENT = 13,
  SNL_ERR_INTERNAL = 14
} snl_status;

typedef struct snl_matrix snl_matrix;
typedef struct snl_block snl_block;
typedef struct snl_report snl_report;

SNL_API const char* snl_version(void);
SNL_API const char* snl_status_string(snl_status status);
SNL_API const char* snl_last_error(void);

/* Matrices: row-major doubles. */
SNL_API snl_status snl_matrix_create(size_t rows, size_t cols, const double* data,
                                     snl_matrix** out);
SNL_API void snl_matrix_destroy(snl_matrix* m);
SNL_API size_t snl_matrix_rows(const snl_matrix* m);
SNL_API size_t snl_matrix_cols(const snl_matrix* m);
SNL_API const double* snl_matrix_data(const snl_matrix* m);
/* Loads the binary format when the file starts with "SNLMAT01", else CSV. */
SNL_API snl_status snl_matrix_load(const char* path, snl_matrix** out);
SNL_API snl_status snl_matrix_save_csv(const snl_matrix* m, const char* path);
SNL_API snl_status snl_matrix_save_binary(const snl_matrix* m, const char* path);
SNL_API snl_status snl_matrix_matmul(const snl_matrix* a, const snl_matrix* b, snl_matrix** out);
/* Eigenvalues (n x 1, ascending) and eigenvectors (columns) of a symmetric matrix. */
SNL_API snl_status snl_matrix_eigh(const snl_matrix* s, snl_matrix** eigenvalues,
                                   snl_matrix** eigenvectors);

/* Blocks: configuration JSON plus parameters initialised from a seed. */
SNL_API snl_status snl_block_create(const char* config_json, uint64_t seed, snl_block** out);
SNL_API snl_status snl_block_load(const char* params_dir, snl_block** out);
SNL_API void snl_block_destroy(snl_block* b);
/* Writes manifest.json and one binary matrix per parameter role. */
SNL_API snl_status snl_block_save(const snl_block* b, const char* params_dir);
/* Caller frees the returned string with snl_string_free. */
SNL_API snl_status snl_block_config_json(const snl_block* b, char** out);
/* x holds height*width rows of c_in features in row-major grid order. */
SNL_API snl_status snl_block_forward(const snl_block* b, size_t height, size_t width,
                                     const snl_matrix* x, snl_matrix** y);
SNL_API snl_status snl_block_affinity(const snl_block* b, size_t height, size_t width,
                                      const snl_matrix* x, snl_matrix** affinity);
/* Gradient of <upstream, Y> with respect to X. */
SNL_API snl_status snl_block_backward_input(const snl_block* b, size_t height, size_t width,
                                            const snl_matrix* x, const snl_matrix* upstream,
                                            snl_matrix** grad_x);

/* Binary PGM heatmap of one row laid out on a height x width grid. */
SNL_API snl_status snl_write_heatmap_pgm(const double* row, size_t height, size_t width,
                                         const char* path);

/* Suites. Each produces a report with a pass flag, a text table and CSV. */
SNL_API snl_status snl_verify_run(const char* filter, uint64_t seed, snl_report** out);
/* variant may be NULL for all variants; both affinity modes, seeds seed..seed+n_seeds-1. */
SNL_API snl_status snl_gradcheck_run(const char* variant, double tolerance, uint64_t seed,
                                     size_t n_seeds, snl_report** out);
/* CSV is the metrics history (step,loss,accuracy). */
SNL_API snl_status snl_train_run(const char* config_json, uint64_t seed, snl_report** out);
SNL_API snl_status snl_bench_run(const size_t* sizes, size_t n_sizes, snl_report** out);

SNL_API int snl_report_passed(const snl_report* r);
SNL_API const char* snl_report_table(const snl_report* r);
SNL_API const char* snl_report_csv(const snl_report* r);
SNL_API void snl_report_destroy(snl_report* r);

SNL_API void snl_string_free(char* s);

#ifdef __cplusplus
}
#endif

#endif /* SNL_SNL_H */
