/* Stable C interface to the saelab engine. All functions return an sae_status;
 * on failure the message is available from sae_last_error() on the same thread. */
#ifndef SAELAB_H
#define SAELAB_H

#include <stddef.h>
#include <stdint.h>

#if defined(SAELAB_BUILDING_LIBRARY)
#define SAELAB_API __attribute__((visibility("default")))
#else
#define SAELAB_API
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum sae_status {
    SAE_OK = 0,
    SAE_ERR_INVALID_ARGUMENT = 1,
    SAE_ERR_CONFIG = 2,
    SAE_ERR_NUMERICAL = 3,
    SAE_ERR_IO = 4,
    SAE_ERR_FORMAT = 5,
    SAE_ERR_INTERNAL = 6
} sae_status;

typedef enum sae_kind { SAE_KIND_RELU = 0, SAE_KIND_TOPK = 1, SAE_KIND_GATED = 2 } sae_kind;

typedef struct sae_arch {
    sae_kind kind;
    double lambda;    /* relu, gated */
    uint32_t k;       /* topk */
    int topk_use_bias;
    int tie_gate_weights;
} sae_arch;

typedef struct sae_dataset sae_dataset;
typedef struct sae_model sae_model;
typedef struct sae_hierarchy sae_hierarchy;

/* Process exit code for a status: 0 ok, 2 config/validation, 3 numerical, 4 I/O or format, 1 internal. */
SAELAB_API int sae_exit_code(sae_status status);
SAELAB_API const char* sae_last_error(void);
SAELAB_API const char* sae_version(void);
SAELAB_API void sae_string_free(char* s);

/* Activation files */
SAELAB_API sae_status sae_dataset_open(const char* path, sae_dataset** out);
SAELAB_API void sae_dataset_free(sae_dataset* ds);
SAELAB_API sae_status sae_dataset_info(const sae_dataset* ds, uint64_t* n_samples, uint32_t* dim, int* has_labels,
                                       uint32_t* n_classes);
/* Metadata JSON; release with sae_string_free. */
SAELAB_API sae_status sae_dataset_meta(const sae_dataset* ds, char** json_out);
SAELAB_API sae_status sae_dataset_read_row(const sae_dataset* ds, uint64_t row, float* out, uint32_t dim);
SAELAB_API sae_status sae_dataset_label(const sae_dataset* ds, uint64_t row, uint32_t* label);
/* labels and meta_json may be NULL. */
SAELAB_API sae_status sae_dataset_write(const char* path, const float* rows, uint64_t n_samples, uint32_t dim,
                                        const uint32_t* labels, uint32_t n_classes, const char* meta_json);

/* Models. Matrices are row-major doubles. */
SAELAB_API sae_status sae_model_init(const sae_arch* arch, uint32_t d, uint32_t expansion, uint64_t seed,
                                     sae_model** out);
SAELAB_API sae_status sae_model_load(const char* path, sae_model** out);
SAELAB_API sae_status sae_model_save(const sae_model* model, const char* path);
SAELAB_API void sae_model_free(sae_model* model);
SAELAB_API sae_status sae_model_info(const sae_model* model, uint32_t* d, uint32_t* n, sae_arch* arch);
SAELAB_API sae_status sae_model_checksum(const sae_model* model, uint64_t* checksum);
/* x: rows x d in, z: rows x n out. */
SAELAB_API sae_status sae_model_encode(const sae_model* model, const double* x, uint64_t rows, double* z);
/* z: rows x n in, x_hat: rows x d out. */
SAELAB_API sae_status sae_model_decode(const sae_model* model, const double* z, uint64_t rows, double* x_hat);
/* Unit-normalized decoder column k, length d. */
SAELAB_API sae_status sae_model_feature_direction(const sae_model* model, uint32_t k, double* direction);

/* out = x + lambda * direction / |direction|. */
SAELAB_API sae_status sae_steer(const double* x, const double* direction, uint32_t d, double lambda, double* out);

/* Hierarchies */
SAELAB_API sae_status sae_hierarchy_load(const char* path, sae_hierarchy** out);
SAELAB_API void sae_hierarchy_free(sae_hierarchy* h);
SAELAB_API sae_status sae_hierarchy_info(const sae_hierarchy* h, uint32_t* n_nodes, uint32_t* n_leaves);
/* LCH of a class set. id_buf receives the NUL-terminated node id; height and coverage may be NULL. */
SAELAB_API sae_status sae_hierarchy_lch(const sae_hierarchy* h, const uint32_t* classes, uint32_t count, char* id_buf,
                                        size_t id_buf_len, double* height, double* coverage);

/* Batch workflows (train, sweep, eval, probe, ontology, overlap, steer-export, dataset-info, synth). */
typedef struct sae_run_options {
    int has_seed;
    uint64_t seed;
    const char* out;   /* NULL: use the config value */
    uint32_t threads;  /* 0: use the config value */
} sae_run_options;

/* opts and summary_json may be NULL. The summary is a JSON string released with sae_string_free. */
SAELAB_API sae_status sae_run_command(const char* command, const char* config_path, const sae_run_options* opts,
                                      char** summary_json);

#ifdef __cplusplus
}
#endif

#endif /* SAELAB_H */
