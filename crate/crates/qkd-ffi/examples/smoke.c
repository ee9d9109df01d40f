/* Minimal C client: load a preset, evaluate probabilities and one protocol. */
#include <stdio.h>
#include "qkd.h"

int main(void) {
    QkdConfig *cfg = NULL;
    if (qkd_config_preset("fig5", &cfg) != QKD_STATUS_OK) {
        fprintf(stderr, "preset: %s\n", qkd_last_error_message());
        return 1;
    }
    double probs[4];
    if (qkd_joint_probabilities(cfg, 0.0, 0.0, probs) != QKD_STATUS_OK) {
        fprintf(stderr, "probabilities: %s\n", qkd_last_error_message());
        return 1;
    }
    double sum = probs[0] + probs[1] + probs[2] + probs[3];
    printf("sum=%.6f\n", sum);

    QkdProtocolResult bb84;
    if (qkd_protocol_eval(cfg, QKD_PROTOCOL_BB84, 0.0, &bb84) != QKD_STATUS_OK) {
        fprintf(stderr, "protocol: %s\n", qkd_last_error_message());
        return 1;
    }
    printf("k=%.1f qber=%.4f\n", bb84.sifted_key, bb84.qber);

    qkd_config_free(cfg);
    return 0;
}
