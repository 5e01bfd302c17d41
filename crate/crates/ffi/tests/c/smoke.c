#include <stdio.h>
#include <string.h>
#include "twostage_mot.h"

int main(void) {
    TsmTracker *t = NULL;
    if (tsm_tracker_new(NULL, &t) != TSM_STATUS_OK) return 1;
    uint64_t first_id = 0;
    for (int k = 0; k < 5; ++k) {
        TsmDetection d = {{k * 1.0, 0.0, 0.0}, {1.9, 4.5, 1.6}, 0.0, 0.9, TSM_CLASS_CAR_LIKE};
        size_t n = 0;
        if (tsm_tracker_step(t, &d, 1, k * 0.1, &n) != TSM_STATUS_OK || n != 1) return 2;
        TsmTrack out[4];
        size_t written = 0;
        if (tsm_tracker_tracks(t, out, 4, &written) != TSM_STATUS_OK || written != 1) return 3;
        if (k == 0) first_id = out[0].id;
        if (out[0].id != first_id) return 4;
    }
    if (tsm_tracker_step(t, NULL, 0, 0.0, NULL) != TSM_STATUS_TEMPORAL_ORDER) return 5;
    if (tsm_last_error_message() == NULL) return 6;
    tsm_tracker_free(t);
    printf("ok %s\n", tsm_version());
    return 0;
}
