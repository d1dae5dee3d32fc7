#include <math.h>
#include <stdio.h>
#include <string.h>

#include "switchbench.h"

#define CHECK(cond)                                                  \
  do {                                                               \
    if (!(cond)) {                                                   \
      const char *err = sb_last_error();                             \
      fprintf(stderr, "line %d: %s (%s)\n", __LINE__, #cond,         \
              err ? err : "no error");                               \
      return 1;                                                      \
    }                                                                \
  } while (0)

int main(void) {
  CHECK(strncmp(sb_version(), "switchbench ", 12) == 0);

  const char *gold[] = {"the red barn", "a barn"};
  double f1 = -1.0;
  CHECK(sb_token_f1("red barn", gold, 2, &f1) == SB_STATUS_OK);
  CHECK(fabs(f1 - 1.0) < 1e-12);

  double xs[] = {0.1, 0.4, 0.2, 0.9, 0.5, 0.3};
  double lo = 0.0, hi = 0.0;
  CHECK(sb_bca_ci(xs, 6, 1000, 7, 0.95, &lo, &hi) == SB_STATUS_OK);
  CHECK(lo < 0.4 && 0.4 < hi);
  CHECK(sb_bca_ci(xs, 6, 1000, 7, 1.5, &lo, &hi) == SB_STATUS_INVALID_ARGUMENT);
  CHECK(sb_last_error() != NULL);

  /* mu = 0.1, alpha = (0.02, -0.02, 0), beta = (0.01, 0.03, -0.04) */
  const char *names[] = {"a", "b", "c"};
  double values[] = {
      NAN, 0.15, 0.08,
      0.09, NAN, 0.04,
      0.11, 0.13, NAN,
  };
  SbFactorModel *model = NULL;
  CHECK(sb_factor_fit(names, values, 3, &model) == SB_STATUS_OK);
  CHECK(sb_factor_len(model) == 3);
  double mu = 0.0, alpha = 0.0, beta = 0.0, r2 = 0.0, loo = 0.0;
  CHECK(sb_factor_mu(model, &mu) == SB_STATUS_OK && fabs(mu - 0.1) < 1e-12);
  CHECK(sb_factor_alpha(model, 0, &alpha) == SB_STATUS_OK && fabs(alpha - 0.02) < 1e-12);
  CHECK(sb_factor_beta(model, 2, &beta) == SB_STATUS_OK && fabs(beta + 0.04) < 1e-12);
  CHECK(sb_factor_beta(model, 3, &beta) == SB_STATUS_OUT_OF_RANGE);
  CHECK(sb_factor_r2(model, &r2, &loo) == SB_STATUS_OK && fabs(r2 - 1.0) < 1e-12);
  const char *name = NULL;
  CHECK(sb_factor_name(model, 1, &name) == SB_STATUS_OK && strcmp(name, "b") == 0);
  sb_factor_free(model);
  sb_factor_free(NULL);

  SbConfig *config = NULL;
  CHECK(sb_config_load("/nonexistent/run.toml", &config) == SB_STATUS_CONFIG);
  CHECK(config == NULL);

  puts("ok");
  return 0;
}
