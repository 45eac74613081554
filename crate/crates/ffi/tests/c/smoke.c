#include <stdio.h>
#include <stdlib.h>
#include <string.h>

#include "cdf.h"

#define CHECK(call)                                                   \
    do {                                                              \
        CdfStatus s_ = (call);                                        \
        if (s_ != CDF_STATUS_OK) {                                    \
            fprintf(stderr, "%s -> %d: %s\n", #call, (int)s_,         \
                    cdf_last_error() ? cdf_last_error() : "");        \
            return 1;                                                 \
        }                                                             \
    } while (0)

int main(void) {
    double x[2] = {1.0, -2.0}, c[2] = {0.0, 0.0}, d = 0.0;
    CHECK(cdf_robust_distance(x, c, NULL, 2, &d));
    if (d <= 0.0) return 2;

    size_t n = 1200;
    unsigned char *labels = malloc(n);
    CdfMatrix *m = NULL;
    CHECK(cdf_generate_labeled(n, 11, labels, &m));
    if (cdf_matrix_rows(m) != n || cdf_matrix_cols(m) != 41) return 3;

    CdfPipeline *p = NULL;
    CHECK(cdf_pipeline_fit(m, labels, n, CDF_VARIANT_EA_PCA, CDF_ALGORITHM_POSSCP, 5, &p));

    unsigned char *pred = malloc(n);
    CHECK(cdf_pipeline_classify(p, m, pred, n));
    size_t agree = 0;
    for (size_t i = 0; i < n; i++) agree += pred[i] == labels[i];
    if (agree * 10 < n * 8) return 4;

    char *json = NULL;
    CHECK(cdf_pipeline_to_json(p, &json));
    CdfPipeline *q = NULL;
    CHECK(cdf_pipeline_from_json(json, &q));
    cdf_string_free(json);

    int64_t transition = 0;
    CHECK(cdf_detect_stream(q, m, 40, NULL, 0, &transition));

    if (cdf_pipeline_fit(m, labels, n, 9, 0, 1, &q) != CDF_STATUS_INVALID_ARGUMENT) return 5;
    if (cdf_last_error() == NULL) return 6;

    cdf_pipeline_free(p);
    cdf_pipeline_free(q);
    cdf_matrix_free(m);
    free(pred);
    free(labels);
    printf("ok %s\n", cdf_version());
    return 0;
}
