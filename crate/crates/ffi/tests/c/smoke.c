/* Exercises the C ABI: problem lifecycle, optimization, error reporting. */
#include <stdio.h>
#include <string.h>

#include "topoformer.h"

#define CHECK(cond)                                                    \
  do {                                                                 \
    if (!(cond)) {                                                     \
      char msg[256];                                                   \
      tf_last_error(msg, sizeof msg);                                  \
      fprintf(stderr, "%s:%d: %s (last error: %s)\n", __FILE__,        \
              __LINE__, #cond, msg);                                   \
      return 1;                                                        \
    }                                                                  \
  } while (0)

int main(int argc, char **argv) {
  CHECK(argc == 3);
  const char *spec_json = argv[1];
  const char *missing_ckpt = argv[2];
  CHECK(strlen(tf_version()) > 0);

  TfProblem *p = NULL;
  CHECK(tf_problem_from_json(spec_json, NULL, &p) == TF_STATUS_OK);
  size_t nelx = 0, nely = 0;
  bool dynamic = true;
  CHECK(tf_problem_info(p, &nelx, &nely, &dynamic) == TF_STATUS_OK);
  CHECK(nelx == 16 && nely == 8 && !dynamic);

  double density[128], binary[128], sed[128], vm[128];
  size_t iterations = 0;
  bool converged = false;
  CHECK(tf_optimize(p, density, binary, 128, &iterations, &converged) ==
        TF_STATUS_OK);
  CHECK(converged && iterations > 0);
  double solid = 0.0;
  for (size_t i = 0; i < 128; i++) solid += binary[i];
  CHECK(solid >= 0.38 * 128 && solid <= 0.42 * 128);

  CHECK(tf_problem_fields(p, sed, vm, 128) == TF_STATUS_OK);
  CHECK(tf_problem_fields(p, sed, vm, 64) == TF_STATUS_INVALID_ARGUMENT);
  CHECK(tf_problem_fields(p, NULL, vm, 128) == TF_STATUS_NULL_POINTER);
  tf_problem_free(p);

  TfProblem *bad = NULL;
  CHECK(tf_problem_from_json("{\"grid\": 1}", NULL, &bad) == TF_STATUS_SCHEMA);
  CHECK(bad == NULL);
  size_t need = tf_last_error(NULL, 0);
  CHECK(need > 0);
  char small[8];
  CHECK(tf_last_error(small, sizeof small) == need && strlen(small) == 7);

  TfModel *m = NULL;
  CHECK(tf_model_load(missing_ckpt, &m) == TF_STATUS_IO);
  CHECK(tf_model_info(NULL, NULL, NULL) == TF_STATUS_NULL_POINTER);
  tf_model_free(NULL);
  tf_problem_free(NULL);
  puts("ok");
  return 0;
}
