/* SignSpeak engine — public C API.
 *
 * All functions return ss_status; on failure a thread-local message is
 * available via ss_last_error(). Handles are opaque and freed with the
 * matching *_free function.
 */
#ifndef SIGNSPEAK_H
#define SIGNSPEAK_H

#include <stddef.h>
#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

typedef enum ss_status {
    SS_OK = 0,
    SS_ERR_USAGE = 1, /* bad arguments, unknown names, config errors */
    SS_ERR_DATA = 2,  /* parse/validation/I-O failures on inputs */
    SS_ERR_TRAIN = 3  /* training divergence or runtime failure */
} ss_status;

/* message describing the most recent failure on this thread */
const char* ss_last_error(void);

void ss_free_text(char* text);

/* ---- dataset ---------------------------------------------------------- */

typedef struct ss_dataset ss_dataset;

ss_status ss_dataset_load(const char* csv_path, ss_dataset** out);
/* adapter for external layouts; canonical files pass through unchanged */
ss_status ss_dataset_import(const char* path, ss_dataset** out);
ss_status ss_dataset_synth(size_t n_per_class, double noise_std, uint64_t seed,
                           ss_dataset** out);
ss_status ss_dataset_write(const ss_dataset* ds, const char* csv_path);
/* per-class counts, length histogram and rejection summary; free with
 * ss_free_text */
ss_status ss_dataset_stats(const ss_dataset* ds, char** out_text);
size_t ss_dataset_num_recordings(const ss_dataset* ds);
size_t ss_dataset_num_rejected(const ss_dataset* ds);
void ss_dataset_free(ss_dataset* ds);

/* ---- parameter counting ----------------------------------------------- */

/* model_name: stacked_lstm, stacked_gru, dense_lstm, dense_gru,
 * dense_stacked_lstm, dense_stacked_gru, encoder */
ss_status ss_param_count(const char* model_name, long long* out_count);
/* table of all seven families with nearest-1K rounding */
ss_status ss_param_table(char** out_text);

/* ---- training --------------------------------------------------------- */

/* config_kv: flat key=value lines (model=..., seed=..., train.lr0=..., ...);
 * unknown keys are rejected. Artifacts are written under out_dir. */
ss_status ss_train(const char* config_kv, const char* dataset_csv, const char* out_dir);
ss_status ss_cv(const char* config_kv, const char* dataset_csv, const char* out_dir);

/* ---- inference / streaming ------------------------------------------- */

typedef struct ss_model ss_model;

ss_status ss_model_load(const char* checkpoint_path, ss_model** out);
/* frames: num_frames x 5 raw readings in [0,1023]. out_probs may be NULL. */
ss_status ss_model_classify(ss_model* model, const uint16_t* frames, size_t num_frames,
                            int* out_label, float* out_probs);
const char* ss_model_label_name(const ss_model* model, int label);
size_t ss_model_num_classes(const ss_model* model);
void ss_model_free(ss_model* model);

typedef struct ss_segmenter ss_segmenter;

typedef struct ss_segment_event {
    uint16_t frames[81][5];
    size_t num_frames;
    size_t start_index;
    size_t end_index;               /* exclusive */
    int disposition;                /* 0 emitted, 1 too short, 2 too long */
} ss_segment_event;

ss_status ss_segmenter_new(int activation_threshold, size_t min_len, size_t max_len,
                           ss_segmenter** out);
/* returns 1 and fills *out_event when the frame closes a segment, else 0;
 * returns -1 on error */
int ss_segmenter_push(ss_segmenter* seg, const uint16_t frame[5], ss_segment_event* out_event);
void ss_segmenter_counters(const ss_segmenter* seg, size_t* emitted, size_t* discarded_short,
                           size_t* discarded_long);
void ss_segmenter_free(ss_segmenter* seg);

/* one callback per emitted segment during replay */
typedef void (*ss_prediction_fn)(void* user, double t_start_sec, const char* label,
                                 double p_max);

/* source: canonical dataset CSV or raw `s1,s2,s3,s4,s5` frame file.
 * rate_hz = 0 replays unthrottled. out_report (optional) receives the
 * key-value statistics text; free with ss_free_text. */
ss_status ss_stream(const char* checkpoint_path, const char* source_path, double rate_hz,
                    size_t rest_frames, ss_prediction_fn callback, void* user,
                    char** out_report);

#ifdef __cplusplus
} /* extern "C" */
#endif

#endif /* SIGNSPEAK_H */
