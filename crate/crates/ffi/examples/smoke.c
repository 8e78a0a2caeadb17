/* Trains a tiny kernel ridge model through the C API, predicts, saves and
 * reloads it. Exits non-zero on any mismatch. */
#include <math.h>
#include <stdio.h>

#include "dualkern.h"

static int fail(const char *what) {
    char msg[256];
    dk_last_error_message(msg, sizeof msg);
    fprintf(stderr, "%s failed: %s\n", what, msg);
    return 1;
}

int main(int argc, char **argv) {
    const char *path = argc > 1 ? argv[1] : "smoke.dkm";
    double x[] = {0.0, 1.0, 2.0, 3.0, 4.0, 5.0};
    double y[] = {0.0, 0.8, 0.9, 0.1, -0.7, -1.0};
    DkTrainConfig cfg;
    DkModel *model = NULL;
    DkModel *again = NULL;
    double raw[6], raw2[6];
    size_t dim = 0;

    if (dk_train_config_default(&cfg) != DK_OK) return fail("config");
    cfg.sigma = 1.0;
    cfg.lambda = 0.1;
    cfg.iterations = 20;
    if (dk_train_dense(x, 6, 1, y, &cfg, &model) != DK_OK) return fail("train");
    if (dk_model_dim(model, &dim) != DK_OK || dim != 1) return fail("dim");
    if (dk_predict_raw(model, x, 6, 1, raw) != DK_OK) return fail("predict");
    if (dk_predict_label(model, x, 6, 1, raw2) != DK_ERR_UNSUPPORTED) {
        fprintf(stderr, "labels from a regression model should be rejected\n");
        return 1;
    }
    if (dk_model_save(model, path) != DK_OK) return fail("save");
    if (dk_model_load(path, &again) != DK_OK) return fail("load");
    if (dk_predict_raw(again, x, 6, 1, raw2) != DK_OK) return fail("predict reloaded");
    for (int i = 0; i < 6; i++) {
        if (raw[i] != raw2[i] || fabs(raw[i] - y[i]) > 0.5) {
            fprintf(stderr, "row %d: %g vs %g (target %g)\n", i, raw[i], raw2[i], y[i]);
            return 1;
        }
    }
    dk_model_free(model);
    dk_model_free(again);
    printf("ok %s\n", dk_version());
    return 0;
}
