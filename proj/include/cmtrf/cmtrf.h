/* C interface to the cmtrf library. All functions return a cmtrf_status;
 * on failure cmtrf_last_error() describes the problem (thread-local, valid
 * until the next failing call on the same thread). Handles are opaque and
 * released with the matching _free function; passing NULL to _free is fine. */
#ifndef CMTRF_CMTRF_H
#define CMTRF_CMTRF_H

#include <stddef.h>
#include <stdint.h>

#if defined(CMTRF_BUILDING_LIBRARY)
#define CMTRF_API __attribute__((visibility("default")))
#else
#define CMTRF_API
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum cmtrf_status {
  CMTRF_OK = 0,
  CMTRF_ERR_INVALID_ARGUMENT = 1,
  CMTRF_ERR_IO = 2,
  CMTRF_ERR_PARSE = 3,
  CMTRF_ERR_DOMAIN = 4,
  CMTRF_ERR_INDEX = 5,
  CMTRF_ERR_EMPTY_DATA = 6,
  CMTRF_ERR_VOCABULARY_MISMATCH = 7,
  CMTRF_ERR_NUMERICAL = 8,
  CMTRF_ERR_INTERNAL = 99
} cmtrf_status;

CMTRF_API const char* cmtrf_last_error(void);
CMTRF_API const char* cmtrf_status_name(cmtrf_status status);
CMTRF_API const char* cmtrf_version(void);

typedef struct cmtrf_dataset cmtrf_dataset;
typedef struct cmtrf_split cmtrf_split;
typedef struct cmtrf_model cmtrf_model;
typedef struct cmtrf_grid cmtrf_grid;

/* ---- datasets ---- */

typedef enum cmtrf_text_format {
  CMTRF_FORMAT_TSV = 0,
  CMTRF_FORMAT_CSV = 1
} cmtrf_text_format;

/* Zero-based columns; timestamp_col < 0 means no timestamp column. */
typedef struct cmtrf_load_options {
  int format;
  int user_col;
  int item_col;
  int rating_col;
  int timestamp_col;
  int header_row;
} cmtrf_load_options;

CMTRF_API void cmtrf_load_options_init(cmtrf_load_options* opts);

CMTRF_API cmtrf_status cmtrf_dataset_load(const char* path,
                                          const cmtrf_load_options* opts,
                                          cmtrf_dataset** out);
/* Canonical tab-separated form with a "# levels:" header. */
CMTRF_API cmtrf_status cmtrf_dataset_save(const cmtrf_dataset* data,
                                          const char* path);
CMTRF_API cmtrf_status cmtrf_dataset_concatenate(const cmtrf_dataset* a,
                                                 const cmtrf_dataset* b,
                                                 cmtrf_dataset** out);
CMTRF_API void cmtrf_dataset_free(cmtrf_dataset* data);

typedef struct cmtrf_dataset_info {
  size_t num_users;
  size_t num_items;
  size_t num_levels;
  size_t num_ratings;
  size_t num_warnings;
  int has_timestamps;
} cmtrf_dataset_info;

CMTRF_API cmtrf_status cmtrf_dataset_info_get(const cmtrf_dataset* data,
                                              cmtrf_dataset_info* info);
/* Copies min(capacity, num_levels) ascending level values. */
CMTRF_API cmtrf_status cmtrf_dataset_levels(const cmtrf_dataset* data,
                                            double* out, size_t capacity);
/* NULL when k is out of range. */
CMTRF_API const char* cmtrf_dataset_warning(const cmtrf_dataset* data, size_t k);

/* ---- preprocessing and splits ---- */

typedef enum cmtrf_split_strategy {
  CMTRF_SPLIT_CHRONOLOGICAL = 0,
  CMTRF_SPLIT_UNIFORM = 1
} cmtrf_split_strategy;

typedef struct cmtrf_split_options {
  int strategy;
  uint64_t seed;
  double train_fraction;      /* default 0.8 */
  double validation_fraction; /* share of the training portion, default 0.1 */
} cmtrf_split_options;

typedef enum cmtrf_part {
  CMTRF_PART_TRAIN = 0,
  CMTRF_PART_VALIDATION = 1,
  CMTRF_PART_TEST = 2
} cmtrf_part;

typedef struct cmtrf_split_counts {
  size_t input;
  size_t constant_users_removed;
  size_t after_constant_filter;
  size_t train;
  size_t validation;
  size_t test;
  size_t cold_test_dropped;
} cmtrf_split_counts;

CMTRF_API void cmtrf_split_options_init(cmtrf_split_options* opts);
/* Removes constant raters, splits, and drops cold-start test rows. */
CMTRF_API cmtrf_status cmtrf_split_prepare(const cmtrf_dataset* data,
                                           const cmtrf_split_options* opts,
                                           cmtrf_split** out);
/* Returns a new dataset handle holding a copy of the part. */
CMTRF_API cmtrf_status cmtrf_split_part(const cmtrf_split* split, int part,
                                        cmtrf_dataset** out);
CMTRF_API cmtrf_status cmtrf_split_counts_get(const cmtrf_split* split,
                                              cmtrf_split_counts* counts);
CMTRF_API void cmtrf_split_free(cmtrf_split* split);

/* ---- synthetic data ---- */

typedef enum cmtrf_synth_kind { CMTRF_SYNTH_SD1 = 0, CMTRF_SYNTH_SD2 = 1 } cmtrf_synth_kind;

/* factor_mean / factor_std set to NaN pick the per-kind defaults. */
typedef struct cmtrf_synth_options {
  int kind;
  size_t num_users;
  size_t num_items;
  size_t rank;
  size_t levels;
  double epsilon;
  double factor_mean;
  double factor_std;
  double density;
  uint64_t seed;
} cmtrf_synth_options;

CMTRF_API void cmtrf_synth_options_init(cmtrf_synth_options* opts);
/* truth_json_path may be NULL; otherwise the ground truth (factors, per-user
 * level values, steepness) is written there as JSON. */
CMTRF_API cmtrf_status cmtrf_synth_generate(const cmtrf_synth_options* opts,
                                            const char* truth_json_path,
                                            cmtrf_dataset** out);

/* ---- training ---- */

typedef enum cmtrf_mode {
  CMTRF_MODE_ONE = 0,       /* one global transform */
  CMTRF_MODE_PER_USER = 1,  /* one transform per user */
  CMTRF_MODE_CLUSTERED = 2, /* K cluster transforms */
  CMTRF_MODE_PLAIN_MF = 3   /* fixed raw scale, plain regularized MF */
} cmtrf_mode;

typedef enum cmtrf_divergence {
  CMTRF_DIV_SQUARED = 0,
  CMTRF_DIV_KL = 1,
  CMTRF_DIV_GID = 2
} cmtrf_divergence;

typedef struct cmtrf_train_options {
  int mode;
  size_t clusters;
  double epsilon;
  double lambda_u;
  double lambda_v;
  size_t rank;
  int outer_max_iters;
  int inner_sweeps;
  double tolerance;
  uint64_t seed;
  int divergence;
} cmtrf_train_options;

CMTRF_API void cmtrf_train_options_init(cmtrf_train_options* opts);
CMTRF_API cmtrf_status cmtrf_mode_from_name(const char* name, int* mode);
CMTRF_API const char* cmtrf_mode_name(int mode);

CMTRF_API cmtrf_status cmtrf_model_train(const cmtrf_dataset* train,
                                         const cmtrf_train_options* opts,
                                         cmtrf_model** out);
/* <prefix>.factors and <prefix>.json */
CMTRF_API cmtrf_status cmtrf_model_save(const cmtrf_model* model,
                                        const char* prefix);
CMTRF_API cmtrf_status cmtrf_model_load(const char* prefix, cmtrf_model** out);
/* JSON lines: starting objective, one record per iteration, final summary. */
CMTRF_API cmtrf_status cmtrf_model_write_trace(const cmtrf_model* model,
                                               const char* path);
CMTRF_API void cmtrf_model_free(cmtrf_model* model);

typedef struct cmtrf_model_info {
  int mode;
  size_t num_users;
  size_t num_items;
  size_t rank;
  size_t num_levels;
  size_t num_transforms;
  size_t trace_length;
  size_t num_warnings;
  int converged;
  double objective;
  double seconds;
} cmtrf_model_info;

CMTRF_API cmtrf_status cmtrf_model_info_get(const cmtrf_model* model,
                                            cmtrf_model_info* info);
CMTRF_API cmtrf_status cmtrf_model_options(const cmtrf_model* model,
                                           cmtrf_train_options* opts);
/* Objective after each outer iteration; entry 0 is the starting point. */
CMTRF_API cmtrf_status cmtrf_model_trace(const cmtrf_model* model, double* out,
                                         size_t capacity);
/* Transform k, top level first (descending latent values). */
CMTRF_API cmtrf_status cmtrf_model_transform(const cmtrf_model* model, size_t k,
                                             double* out, size_t capacity);
/* Transform index of every user, in model user order. */
CMTRF_API cmtrf_status cmtrf_model_route(const cmtrf_model* model, size_t* out,
                                         size_t capacity);
CMTRF_API const char* cmtrf_model_warning(const cmtrf_model* model, size_t k);

/* Prediction on the raw rating scale for raw user/item ids. */
CMTRF_API cmtrf_status cmtrf_model_predict(const cmtrf_model* model,
                                           const char* user, const char* item,
                                           double* out);

typedef struct cmtrf_metrics {
  double mse;
  double mae;
  size_t count;
  size_t skipped;
} cmtrf_metrics;

/* Scores every rating of data by raw id. With skip_unknown, rows with ids
 * the model has never seen are counted as skipped instead of failing. */
CMTRF_API cmtrf_status cmtrf_model_evaluate(const cmtrf_model* model,
                                            const cmtrf_dataset* data,
                                            int skip_unknown,
                                            cmtrf_metrics* out);

/* ---- hyperparameter search ---- */

typedef struct cmtrf_grid_cell {
  size_t clusters;
  double lambda_u;
  double lambda_v;
  size_t rank;
} cmtrf_grid_cell;

typedef struct cmtrf_cell_result {
  cmtrf_grid_cell cell;
  cmtrf_metrics validation;
  double objective;
  int iterations;
  int converged;
  double seconds;
} cmtrf_cell_result;

typedef void (*cmtrf_cell_callback)(size_t index, const cmtrf_cell_result* result,
                                    void* user_data);

/* Writes min(capacity, 9) entries and returns the full count. */
CMTRF_API size_t cmtrf_default_lambda_grid(double* out, size_t capacity);
CMTRF_API size_t cmtrf_default_cluster_grid(size_t* out, size_t capacity);

/* The validation dataset must outlive the grid handle. base supplies mode,
 * epsilon, seed and iteration limits; cells override K, lambdas and rank. */
CMTRF_API cmtrf_status cmtrf_grid_create(const cmtrf_dataset* train,
                                         const cmtrf_dataset* validation,
                                         const cmtrf_train_options* base,
                                         cmtrf_grid** out);
/* results must hold n entries, filled in cell order. The callback (may be
 * NULL) runs once per finished cell, never concurrently with itself. */
CMTRF_API cmtrf_status cmtrf_grid_evaluate(cmtrf_grid* grid,
                                           const cmtrf_grid_cell* cells, size_t n,
                                           unsigned threads,
                                           cmtrf_cell_callback callback,
                                           void* user_data,
                                           cmtrf_cell_result* results);
CMTRF_API void cmtrf_grid_free(cmtrf_grid* grid);

/* Lowest validation MSE; ties to smaller K, then smaller lambda_u. */
CMTRF_API cmtrf_status cmtrf_select_best(const cmtrf_cell_result* results,
                                         size_t n, size_t* best);
/* Retrains a cell on train followed by validation and scores test. */
CMTRF_API cmtrf_status cmtrf_retrain_and_test(const cmtrf_dataset* train,
                                              const cmtrf_dataset* validation,
                                              const cmtrf_dataset* test,
                                              const cmtrf_train_options* base,
                                              const cmtrf_grid_cell* cell,
                                              cmtrf_model** model,
                                              cmtrf_metrics* test_metrics);

#ifdef __cplusplus
}
#endif

#endif
