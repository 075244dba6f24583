#include <stdio.h>
#include <string.h>

#include "sacfem.h"

static const char *CONFIG =
    "kind = \"operators\"\n"
    "[mesh]\n"
    "levels = [3, 4, 5]\n"
    "[[operators.cases]]\n"
    "s = 0.0\n"
    "r = 2.0\n"
    "projection = \"l2\"\n";

int main(void) {
    SacfemConfig *cfg = NULL;
    if (sacfem_config_parse(CONFIG, &cfg) != SACFEM_STATUS_OK) {
        fprintf(stderr, "parse: %s\n", sacfem_last_error());
        return 1;
    }
    SacfemStudy *study = NULL;
    if (sacfem_study_run(cfg, 1, &study) != SACFEM_STATUS_OK) {
        fprintf(stderr, "run: %s\n", sacfem_last_error());
        return 1;
    }
    double slope = 0.0;
    sacfem_study_slope(study, 0, &slope);
    printf("sacfem %s slope %.4f\n", sacfem_version(), slope);

    if (sacfem_study_slope(study, 7, &slope) != SACFEM_STATUS_OUT_OF_RANGE) {
        return 1;
    }
    char *csv = NULL;
    sacfem_study_csv(study, 0, &csv);
    int ok = strstr(csv, "level,h,error,stderr,usable") != NULL;
    sacfem_string_free(csv);
    sacfem_study_free(study);
    sacfem_config_free(cfg);
    return ok ? 0 : 1;
}
