#include <stdio.h>
#include <stdlib.h>
#include <string.h>

#include "dampwave.h"

#define CHECK(call)                                                        \
    do {                                                                   \
        enum DwStatus s_ = (call);                                         \
        if (s_ != DW_STATUS_OK) {                                          \
            char msg_[256];                                                \
            dw_last_error_message(msg_, sizeof msg_);                      \
            fprintf(stderr, "%s failed with %d: %s\n", #call, s_, msg_);   \
            return 1;                                                      \
        }                                                                  \
    } while (0)

int main(void) {
    DwProfile collar = {DW_PROFILE_KIND_BOUNDARY_COLLAR, 1.0, 0.25, 0.0, 0.0, 0.0};
    DwLab *lab = NULL;
    CHECK(dw_lab_new(8, 8, 1.0, 1.0, DW_LAW_BRINKMAN, &collar, &lab));

    size_t n = 0;
    CHECK(dw_lab_state_dim(lab, &n));
    if (n != 3 * 64 - 16) {
        fprintf(stderr, "state dimension %zu\n", n);
        return 1;
    }

    double *z = calloc(n, sizeof *z);
    double *energies = calloc(101, sizeof *energies);
    for (size_t i = 0; i < n; i++) {
        z[i] = (double)((i * 37) % 11) / 11.0 - 0.5;
    }
    CHECK(dw_lab_simulate(lab, z, n, 0.01, 100, energies, 101, NULL));
    for (int i = 1; i <= 100; i++) {
        if (energies[i] > energies[i - 1] * (1.0 + 1e-12)) {
            fprintf(stderr, "energy grew at step %d\n", i);
            return 1;
        }
    }

    double c = 0.0;
    CHECK(dw_lab_observability_constant(lab, 4.0, 0.0, &c));

    /* errors come back as codes with a readable message */
    DwLab *bad = NULL;
    if (dw_lab_new(0, 8, 1.0, 1.0, DW_LAW_BRINKMAN, &collar, &bad) != DW_STATUS_INVALID_ARGUMENT || bad != NULL) {
        return 1;
    }
    char msg[256];
    if (dw_last_error_message(msg, sizeof msg) == 0 || strlen(msg) == 0) {
        return 1;
    }

    printf("dampwave %s: E(0)=%.6f E(1)=%.6f C(4)=%.6f\n", dw_version(), energies[0], energies[100], c);
    dw_lab_free(lab);
    free(z);
    free(energies);
    return 0;
}
