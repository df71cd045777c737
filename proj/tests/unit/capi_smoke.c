/* Compiled as C to keep the public header C-clean. */
#include <stdio.h>

#include "snl/snl.h"

int main(void) {
  const double data[4] = {4.0, 1.0, 1.0, 3.0};
  snl_matrix* m = NULL;
  snl_matrix* vals = NULL;
  snl_matrix* vecs = NULL;
  if (snl_matrix_create(2, 2, data, &m) != SNL_OK) return 1;
  if (snl_matrix_eigh(m, &vals, &vecs) != SNL_OK) return 1;
  printf("snl %s: eigenvalues %.6f %.6f\n", snl_version(), snl_matrix_data(vals)[0],
         snl_matrix_data(vals)[1]);
  snl_matrix_destroy(vecs);
  snl_matrix_destroy(vals);
  snl_matrix_destroy(m);
  return snl_matrix_create(1, 1, NULL, &m) == SNL_ERR_INVALID_ARGUMENT ? 0 : 1;
}
