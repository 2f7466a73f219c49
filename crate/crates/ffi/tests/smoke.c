#include <math.h>
#include <stdio.h>
#include "heartformer.h"

int main(void) {
    double xyz[24];
    uint8_t labels[8] = {0};
    for (int i = 0; i < 8; i++) {
        xyz[3 * i] = (i & 1) * 20.0;
        xyz[3 * i + 1] = ((i >> 1) & 1) * 20.0;
        xyz[3 * i + 2] = ((i >> 2) & 1) * 20.0;
    }
    HfCloud *cloud = NULL;
    if (hf_cloud_new(xyz, labels, 8, &cloud) != HF_STATUS_OK) return 1;
    double ml = 0.0;
    if (hf_chamber_volume(cloud, 0, &ml) != HF_STATUS_OK || fabs(ml - 8.0) > 1e-9) return 2;
    if (hf_chamber_volume(cloud, 4, &ml) != HF_STATUS_EMPTY_CLASS) return 3;
    if (hf_last_error()[0] == '\0') return 4;
    hf_cloud_free(cloud);
    puts("ok");
    return 0;
}
