/*
 * featmerge C API.
 *
 * Networks and datasets are opaque handles owned by the caller and released
 * with the matching *_free function. Every fallible call returns an
 * fm_status; on failure fm_last_error() describes the problem (per thread,
 * valid until the next failing call on that thread). Strings returned
 * through char** out-parameters are heap allocated and released with
 * fm_string_free.
 *
 * Config arguments are JSON objects (NULL means defaults):
 *   IFM:   {"beta", "positions", "max_merges", "bias_in_distance",
 *           "merge_residual_interior", "incremental"}
 *   train: {"hidden", "epochs", "batch_size", "learning_rate", "momentum",
 *           "weight_decay", "milestones", "lr_decay", "seed", "dtype"}
 */
#ifndef FEATMERGE_H
#define FEATMERGE_H

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#define FM_API __declspec(dllexport)
#else
#define FM_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef struct fm_network fm_network;
typedef struct fm_dataset fm_dataset;

typedef enum fm_status {
    FM_OK = 0,
    FM_ERR_INVALID_ARGUMENT = 1,
    FM_ERR_DIMENSION = 2,
    FM_ERR_STRUCTURE = 3,
    FM_ERR_FORMAT = 4,
    FM_ERR_VALIDATION = 5,
    FM_ERR_IO = 6,
    FM_ERR_UNSUPPORTED = 7,
    FM_ERR_INTERNAL = 8
} fm_status;

FM_API const char* fm_version(void);
FM_API const char* fm_last_error(void);
FM_API const char* fm_status_name(fm_status status);
FM_API void fm_string_free(char* s);

/* Networks (.fma archives). */
FM_API fm_status fm_network_load(const char* path, fm_network** out);
FM_API fm_status fm_network_save(const fm_network* net, const char* path);
FM_API fm_status fm_network_clone(const fm_network* net, fm_network** out);
FM_API void fm_network_free(fm_network* net);
FM_API fm_status fm_network_param_count(const fm_network* net, uint64_t* out);
/* Layers, output shapes and mergeable positions as JSON. */
FM_API fm_status fm_network_describe(const fm_network* net, char** json_out);
/* inputs: batch * input_len floats; logits: batch * logits_len doubles. */
FM_API fm_status fm_network_forward(const fm_network* net, const float* inputs, size_t batch, size_t input_len,
                                    double* logits, size_t logits_len);
FM_API fm_status fm_network_equal(const fm_network* a, const fm_network* b, int* equal);

/* Datasets. kind is "blobs", "xor-grid" or "ring". */
FM_API fm_status fm_dataset_load(const char* path, fm_dataset** out);
FM_API fm_status fm_dataset_save(const fm_dataset* data, const char* path);
FM_API fm_status fm_dataset_make(const char* kind, size_t n, double noise, uint64_t seed, size_t classes,
                                 fm_dataset** out);
FM_API void fm_dataset_free(fm_dataset* data);
FM_API fm_status fm_dataset_size(const fm_dataset* data, size_t* n);
FM_API fm_status fm_evaluate(const fm_network* net, const fm_dataset* data, double* accuracy, double* loss);

/*
 * Distance matrices. position < 0 selects every mergeable position.
 * json_out: [{"producer", "dim", "min", "max", "mean", "argmin", "csv"}].
 */
FM_API fm_status fm_analyze(const fm_network* net, long position, int bias_in_distance, char** json_out);

/* Runs iterative feature merging. report_json: {"config", "records",
 * "positions", "profile", "params_before", "params_after",
 * "iteration_timing"}. Either output may be NULL. */
FM_API fm_status fm_merge(const fm_network* net, const char* config_json, fm_network** merged, char** report_json);
FM_API fm_status fm_complexity(const fm_network* net, const char* config_json, char** json_out);
FM_API fm_status fm_grid_search(const fm_network* net, const fm_dataset* data, const double* betas, size_t n_betas,
                                double retention, const char* config_json, char** json_out);
/* Mean/std wall time of `repeats` single merge iterations. */
FM_API fm_status fm_time_iterations(const fm_network* net, const char* config_json, size_t repeats, char** json_out);

/*
 * Interpolation between a network and its swap-permuted copy. mode is
 * "matched" (cycle features inside clusters found by merging with the
 * config's beta) or "random" (same cardinality, seeded). avoid_clusters
 * restricts the random sample to unclustered features. alphas may be NULL
 * for the default 0, 0.1, ..., 1.
 */
FM_API fm_status fm_interpolate(const fm_network* net, const fm_dataset* data, const char* mode, uint64_t seed,
                                int avoid_clusters, const double* alphas, size_t n_alphas, const char* config_json,
                                char** json_out);

/* Toy models. */
FM_API fm_status fm_train(const fm_dataset* data, const char* config_json, fm_network** out);
FM_API fm_status fm_plant(const fm_network* net, size_t producer, const size_t* sources, const size_t* counts,
                          size_t n, fm_network** out);

#ifdef __cplusplus
}
#endif

#endif /* FEATMERGE_H */
