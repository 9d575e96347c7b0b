#ifndef ENGAGE_ENGAGE_H
#define ENGAGE_ENGAGE_H

#include <stddef.h>
#include <stdint.h>

#if defined(ENGAGE_BUILDING_LIBRARY)
#define ENGAGE_API __attribute__((visibility("default")))
#else
#define ENGAGE_API
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum engage_status {
  ENGAGE_OK = 0,
  ENGAGE_ERR_VALIDATION = 1,
  ENGAGE_ERR_DEGENERATE = 2,
  ENGAGE_ERR_SHAPE = 3,
  ENGAGE_ERR_OUT_OF_RANGE = 4,
  ENGAGE_ERR_IO = 5,
  ENGAGE_ERR_BAD_MAGIC = 6,
  ENGAGE_ERR_VERSION_MISMATCH = 7,
  ENGAGE_ERR_TRUNCATED = 8,
  ENGAGE_ERR_PARSE = 9,
  ENGAGE_ERR_FINGERPRINT = 10,
  ENGAGE_ERR_CONFIG = 11,
  ENGAGE_ERR_NUMERIC = 12,
  ENGAGE_ERR_UNDEFINED_METRIC = 13,
  ENGAGE_ERR_INVALID_ARGUMENT = 14,
  ENGAGE_ERR_INTERNAL = 15
} engage_status;

typedef struct engage_model engage_model;
typedef struct engage_sequence engage_sequence;

/* Message of the last failed call on this thread; empty after success. */
ENGAGE_API const char* engage_last_error(void);
ENGAGE_API const char* engage_status_name(engage_status status);
/* Process exit code: 0 ok, 2 config, 3 data, 4 numeric, 1 otherwise. */
ENGAGE_API int engage_exit_code(engage_status status);
/* Frees strings returned through char** out parameters. */
ENGAGE_API void engage_string_free(char* s);

/* threads <= 0 reads ENGAGE_THREADS (default: all cores). Returns the
   thread count in effect. */
ENGAGE_API int engage_set_threads(int threads);

/* Canonical face graph: node count, edges, template coordinates. */
ENGAGE_API engage_status engage_graph_export_json(char** out_json);

/* Parses a run config, applies "section.key=value" overrides in order and
   returns the canonical JSON with every field present. */
ENGAGE_API engage_status engage_config_resolve(const char* config_json, const char* const* overrides,
                                               size_t override_count, char** out_json);

ENGAGE_API engage_status engage_sequence_read(const char* path, engage_sequence** out);
ENGAGE_API engage_status engage_sequence_write(const engage_sequence* seq, const char* path);
/* coords holds frames*nodes*3 floats (frame, node, xyz); valid holds frames
   bytes and may be NULL (all valid); label < 0 means unlabeled. */
ENGAGE_API engage_status engage_sequence_create(const char* sample_id, uint32_t frames, uint16_t nodes,
                                                const float* coords, const uint8_t* valid, int label,
                                                float fps, engage_sequence** out);
ENGAGE_API engage_status engage_sequence_info(const engage_sequence* seq, uint32_t* frames,
                                              uint16_t* nodes, int* label);
ENGAGE_API void engage_sequence_free(engage_sequence* seq);

/* Writes val_fraction of every class as val; summary lists the counts. */
ENGAGE_API engage_status engage_synth(const char* out_dir, size_t samples, int classes, size_t frames,
                                      uint64_t seed, double val_fraction, int eye_closure_only,
                                      char** out_summary_json);

/* Base training from a resolved config. Writes best.stgc, last.stgc and
   metrics.jsonl under paths.out_dir. */
ENGAGE_API engage_status engage_train(const char* config_json, char** out_summary_json);
/* Ordinal head training on top of a K-class checkpoint. */
ENGAGE_API engage_status engage_train_ordinal(const char* config_json, const char* base_checkpoint,
                                              char** out_summary_json);

ENGAGE_API engage_status engage_model_load(const char* path, engage_model** out);
ENGAGE_API void engage_model_free(engage_model* model);
ENGAGE_API engage_status engage_model_info_json(const engage_model* model, char** out_json);
/* Probabilities and predicted class for one sample. */
ENGAGE_API engage_status engage_model_infer(engage_model* model, const engage_sequence* seq,
                                            char** out_json);
ENGAGE_API engage_status engage_model_eval(engage_model* model, const char* manifest_path,
                                           const char* split, char** out_json);
/* Grad-CAM saliency for target_class; point_cloud != 0 returns per-frame
   node coordinates with saliency instead of the flat map. */
ENGAGE_API engage_status engage_model_explain(engage_model* model, const engage_sequence* seq,
                                              int target_class, int point_cloud, char** out_json);

#ifdef __cplusplus
}
#endif

#endif
