#ifndef NLOS_NLOS_H
#define NLOS_NLOS_H

/* C interface to the NLOS detection library. Every call returns an
 * nlos_status; on failure nlos_last_error() describes the problem for the
 * calling thread. Handles are opaque and owned by the caller, who releases
 * them with the matching *_free function. Strings returned by accessors stay
 * valid until the owning handle is freed or modified. */

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#define NLOS_API __declspec(dllexport)
#else
#define NLOS_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum nlos_status {
  NLOS_OK = 0,
  NLOS_ERR_USAGE = 1,   /* bad arguments, configuration or missing inputs */
  NLOS_ERR_DATA = 2,    /* malformed or insufficient data */
  NLOS_ERR_NUMERIC = 3, /* singular geometry, divergence, non-finite values */
  NLOS_ERR_INTERNAL = 4 /* unexpected failure inside the library */
} nlos_status;

typedef struct nlos_config nlos_config;
typedef struct nlos_dataset nlos_dataset;
typedef struct nlos_model nlos_model;
typedef struct nlos_result nlos_result;

NLOS_API const char* nlos_version(void);
/* Message of the last failed call on this thread, "" after a success. */
NLOS_API const char* nlos_last_error(void);

/* Configuration: defaults, then a key-value file, then overrides. */
NLOS_API nlos_status nlos_config_new(nlos_config** out);
NLOS_API void nlos_config_free(nlos_config* config);
NLOS_API nlos_status nlos_config_load_file(nlos_config* config, const char* path);
NLOS_API nlos_status nlos_config_set(nlos_config* config, const char* key, const char* value);
/* Effective value of one key. */
NLOS_API nlos_status nlos_config_get(nlos_config* config, const char* key, const char** value);
/* Every effective key as `key = value` lines. */
NLOS_API nlos_status nlos_config_dump(nlos_config* config, const char** text);
NLOS_API nlos_status nlos_config_hash(nlos_config* config, uint64_t* hash);
NLOS_API size_t nlos_config_key_count(void);
NLOS_API const char* nlos_config_key(size_t index);

/* Datasets of epochs. */
NLOS_API nlos_status nlos_dataset_generate(const nlos_config* config, nlos_dataset** out);
NLOS_API nlos_status nlos_dataset_read(const char* path, nlos_dataset** out);
NLOS_API nlos_status nlos_dataset_write(const nlos_dataset* dataset, const char* path);
NLOS_API void nlos_dataset_free(nlos_dataset* dataset);
NLOS_API size_t nlos_dataset_epoch_count(const nlos_dataset* dataset);
NLOS_API size_t nlos_dataset_observation_count(const nlos_dataset* dataset);
/* Percentage of labeled observations that are NLOS. */
NLOS_API nlos_status nlos_dataset_nlos_percent(const nlos_dataset* dataset, double* percent);

/* Trained models (checkpoints). */
NLOS_API nlos_status nlos_model_load(const char* path, nlos_model** out);
NLOS_API void nlos_model_free(nlos_model* model);
NLOS_API size_t nlos_model_parameter_count(const nlos_model* model);
/* Window length T and slot count N_max of the model. */
NLOS_API void nlos_model_shape(const nlos_model* model, size_t* T, size_t* n_max);
/* LOS probabilities of the valid satellites of every window of the dataset,
 * window by window. *count receives the number of values. With probs NULL
 * only the count is computed; a capacity below the count is a usage error. */
NLOS_API nlos_status nlos_model_predict(const nlos_model* model, const nlos_dataset* dataset, double* probs,
                                        size_t capacity, size_t* count);

/* Commands: run stages every output in memory; commit writes them
 * atomically. `keys`/`values` are parallel arrays of flag names without the
 * leading dashes (data, model, out, ...). */
NLOS_API size_t nlos_command_count(void);
NLOS_API const char* nlos_command_name(size_t index);
NLOS_API nlos_status nlos_command_run(const char* command, const nlos_config* config, const char* const* keys,
                                      const char* const* values, size_t n_args, nlos_result** out);
NLOS_API const char* nlos_result_text(const nlos_result* result);
NLOS_API const char* nlos_result_manifest(const nlos_result* result);
NLOS_API size_t nlos_result_output_count(const nlos_result* result);
NLOS_API const char* nlos_result_output_path(const nlos_result* result, size_t index);
NLOS_API nlos_status nlos_result_commit(nlos_result* result);
NLOS_API void nlos_result_free(nlos_result* result);

#ifdef __cplusplus
}
#endif

#endif /* NLOS_NLOS_H */
