#include <stdio.h>
#include <stdlib.h>
#include <string.h>
#include "lipsync.h"

int main(int argc, char **argv) {
    if (argc != 2) return 2;
    LsModel *model = NULL;
    if (ls_model_load(argv[1], &model) != LS_STATUS_OK) {
        fprintf(stderr, "load: %s\n", ls_last_error_message());
        return 1;
    }
    LsSession *session = NULL;
    if (ls_session_new(model, NULL, &session) != LS_STATUS_OK) return 1;
    ls_model_free(model);

    int16_t pcm[1600];
    for (int i = 0; i < 1600; i++) pcm[i] = (int16_t)((i * 97) % 4000 - 2000);
    for (int k = 0; k < 10; k++) {
        if (ls_session_push(session, pcm, 1600) != LS_STATUS_OK) return 1;
    }
    if (ls_session_finish(session) != LS_STATUS_OK) return 1;
    if (ls_session_push(session, pcm, 1) != LS_STATUS_STATE) return 1;

    LsEvent ev;
    unsigned long frames = 0;
    while (ls_session_poll_event(session, &ev) == LS_STATUS_OK) {
        if (ev.frame != frames || ls_viseme_name(ev.viseme) == NULL) return 1;
        frames++;
    }
    double latency = 0.0;
    ls_algorithmic_latency_ms(session, &latency);
    ls_session_free(session);
    printf("%lu %.1f\n", frames, latency);
    return 0;
}
