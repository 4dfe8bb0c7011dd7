#include <stdio.h>
#include <stdlib.h>
#include "stn_grasp.h"

int main(void) {
    StnGraspModel *model = NULL;
    if (stn_grasp_model_new(1, &model) != STN_GRASP_STATUS_OK) return 10;
    size_t size = stn_grasp_model_image_size(model);
    size_t len = stn_grasp_num_channels() * size * size;
    float *data = calloc(len, sizeof(float));
    StnGraspDetection det;
    StnGraspStatus s = stn_grasp_detect(model, data, len, size, size, &det);
    if (s != STN_GRASP_STATUS_OK) return 11;
    printf("%.3f %.3f %.3f %.3f %.3f %.3f\n", det.rect.x, det.rect.y, det.rect.theta_deg, det.rect.w,
           det.rect.h, det.score);
    s = stn_grasp_detect(model, data, 3, size, size, &det);
    if (s != STN_GRASP_STATUS_INVALID_ARGUMENT || stn_grasp_last_error() == NULL) return 12;
    free(data);
    stn_grasp_model_free(model);
    return 0;
}
