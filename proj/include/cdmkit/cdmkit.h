/* cdmkit C interface.
 *
 * Every call returns a cdm_status; CDM_OK is zero. On failure the message
 * for the calling thread is available from cdm_last_error() until the next
 * failing call on that thread. Objects are opaque handles released with
 * their matching *_free function; passing NULL to a *_free is a no-op.
 * Output handles are only written on success.
 */
#ifndef CDMKIT_H
#define CDMKIT_H

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#  if defined(CDMKIT_BUILDING)
#    define CDM_API __declspec(dllexport)
#  else
#    define CDM_API __declspec(dllimport)
#  endif
#else
#  define CDM_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum cdm_status {
  CDM_OK = 0,
  CDM_ERR_INVALID_ARGUMENT = 1,
  CDM_ERR_IO = 2,
  CDM_ERR_PARSE = 3,
  CDM_ERR_VALIDATION = 4,
  CDM_ERR_DIMENSION = 5,
  CDM_ERR_NUMERIC = 6,
  CDM_ERR_UNSUPPORTED = 7,
  CDM_ERR_INTERNAL = 8
} cdm_status;

CDM_API const char* cdm_version(void);
CDM_API const char* cdm_status_name(cdm_status status);
CDM_API const char* cdm_last_error(void);

/* Non-fatal warnings from any call are delivered here; the default handler
 * drops them. The handler is process-wide. */
typedef void (*cdm_warning_fn)(const char* message, void* user);
CDM_API void cdm_set_warning_handler(cdm_warning_fn fn, void* user);

/* ------------------------------------------------------------------ */
/* Labeled dense matrices (CSV exchange unit)                          */

typedef struct cdm_matrix cdm_matrix;

CDM_API cdm_status cdm_matrix_create(size_t rows, size_t cols, cdm_matrix** out);
CDM_API cdm_status cdm_matrix_load_csv(const char* path, cdm_matrix** out);
CDM_API cdm_status cdm_matrix_save_csv(const cdm_matrix* m, const char* path);
CDM_API size_t cdm_matrix_rows(const cdm_matrix* m);
CDM_API size_t cdm_matrix_cols(const cdm_matrix* m);
CDM_API double cdm_matrix_get(const cdm_matrix* m, size_t row, size_t col);
CDM_API cdm_status cdm_matrix_set(cdm_matrix* m, size_t row, size_t col, double value);
CDM_API const char* cdm_matrix_row_id(const cdm_matrix* m, size_t row);
CDM_API const char* cdm_matrix_col_id(const cdm_matrix* m, size_t col);
CDM_API cdm_status cdm_matrix_set_row_id(cdm_matrix* m, size_t row, const char* id);
CDM_API cdm_status cdm_matrix_set_col_id(cdm_matrix* m, size_t col, const char* id);
CDM_API void cdm_matrix_free(cdm_matrix* m);

/* ------------------------------------------------------------------ */
/* Item banks, grading, response aggregation                           */

typedef struct cdm_item_bank cdm_item_bank;

typedef enum cdm_bank_format { CDM_BANK_JSON = 0, CDM_BANK_CSV = 1 } cdm_bank_format;

/* For CDM_BANK_CSV the concept catalog is read from concepts.csv beside
 * `path`. Orphan concepts are reported as warnings. */
CDM_API cdm_status cdm_item_bank_load(const char* path, cdm_bank_format format, cdm_item_bank** out);
CDM_API cdm_status cdm_item_bank_save_json(const cdm_item_bank* bank, const char* path);
CDM_API size_t cdm_item_bank_items(const cdm_item_bank* bank);
CDM_API size_t cdm_item_bank_concepts(const cdm_item_bank* bank);
CDM_API cdm_status cdm_item_bank_qmatrix(const cdm_item_bank* bank, cdm_matrix** out);
CDM_API void cdm_item_bank_free(cdm_item_bank* bank);

typedef enum cdm_grading_rule { CDM_GRADE_CHOICE_LETTER = 0, CDM_GRADE_EXACT = 1 } cdm_grading_rule;

CDM_API cdm_status cdm_grade(const char* raw_output, const char* answer_key, cdm_grading_rule rule, int* score);

/* Reads JSONL response logs and aggregates them against the bank. Produces
 * X (scores) and W (weights), items as rows and models as columns. */
CDM_API cdm_status cdm_aggregate_logs(const cdm_item_bank* bank, const char* const* log_paths, size_t n_paths,
                                      cdm_grading_rule rule, int repeats, cdm_matrix** scores,
                                      cdm_matrix** weights);

/* ------------------------------------------------------------------ */
/* Generative simulator                                                */

typedef enum cdm_response_mode { CDM_RESPONSE_MEAN = 0, CDM_RESPONSE_BERNOULLI = 1 } cdm_response_mode;
typedef enum cdm_q_mode { CDM_Q_THRESHOLD = 0, CDM_Q_SAMPLED = 1 } cdm_q_mode;

typedef struct cdm_sim_config {
  int items, models, concepts, latent_dim;
  double e_shape, e_rate, u_shape, u_rate, v_shape, v_rate;
  uint64_t seed;
  double q_threshold;
  cdm_q_mode q_mode;
  cdm_response_mode response_mode;
  int repeats;
} cdm_sim_config;

CDM_API void cdm_sim_config_default(cdm_sim_config* cfg);

typedef struct cdm_sim_output cdm_sim_output;

typedef enum cdm_sim_matrix {
  CDM_SIM_X = 0,
  CDM_SIM_W = 1,
  CDM_SIM_Q = 2,
  CDM_SIM_P_RESPONSE = 3,
  CDM_SIM_P_MASTERY = 4,
  CDM_SIM_E = 5,
  CDM_SIM_U = 6,
  CDM_SIM_V = 7
} cdm_sim_matrix;

CDM_API cdm_status cdm_simulate(const cdm_sim_config* cfg, cdm_sim_output** out);
CDM_API cdm_status cdm_sim_output_matrix(const cdm_sim_output* sim, cdm_sim_matrix which, cdm_matrix** out);
/* Writes bank.json, X.csv, W.csv, Q.csv and truth.json into `dir`. */
CDM_API cdm_status cdm_sim_output_save(const cdm_sim_output* sim, const char* dir);
/* Loads a truth.json bundle; only the planted factors and probabilities
 * are restored. */
CDM_API cdm_status cdm_sim_truth_load(const char* path, cdm_sim_output** out);
CDM_API void cdm_sim_output_free(cdm_sim_output* sim);

/* ------------------------------------------------------------------ */
/* Co-factorization solver                                             */

typedef enum cdm_init_mode { CDM_INIT_GAMMA_PRIOR = 0, CDM_INIT_UNIFORM = 1 } cdm_init_mode;

typedef struct cdm_mcf_config {
  int latent_dim;
  double beta, lambda_e, lambda_u, lambda_v;
  int max_iters;
  double tol, epsilon;
  uint64_t seed;
  cdm_init_mode init;
  double e_shape, e_rate, u_shape, u_rate, v_shape, v_rate;
} cdm_mcf_config;

CDM_API void cdm_mcf_config_default(cdm_mcf_config* cfg);

typedef struct cdm_fit_result cdm_fit_result;

typedef enum cdm_factor { CDM_FACTOR_E = 0, CDM_FACTOR_U = 1, CDM_FACTOR_V = 2 } cdm_factor;

/* X and W are items x models, Q is items x concepts; row ids of the three
 * must agree. `starts` seeded fits (seed, seed+1, ...) keep the lowest
 * objective. */
CDM_API cdm_status cdm_fit(const cdm_matrix* X, const cdm_matrix* W, const cdm_matrix* Q, const cdm_mcf_config* cfg,
                           int starts, cdm_fit_result** out);
CDM_API int cdm_fit_iterations(const cdm_fit_result* r);
CDM_API int cdm_fit_converged(const cdm_fit_result* r);
CDM_API uint64_t cdm_fit_seed(const cdm_fit_result* r);
CDM_API size_t cdm_fit_trace_length(const cdm_fit_result* r);
CDM_API double cdm_fit_trace_value(const cdm_fit_result* r, size_t i);
CDM_API cdm_status cdm_fit_factor(const cdm_fit_result* r, cdm_factor which, cdm_matrix** out);
/* clip(EU, 0, 1) with item/model ids; `clipped` (optional) receives the
 * number of clipped cells. */
CDM_API cdm_status cdm_fit_predict(const cdm_fit_result* r, cdm_matrix** out, size_t* clipped);
/* E.csv, U.csv, V.csv, trace.csv, fit.json. */
CDM_API cdm_status cdm_fit_save(const cdm_fit_result* r, const char* dir);
CDM_API void cdm_fit_free(cdm_fit_result* r);

typedef enum cdm_normalization {
  CDM_NORM_CLIP = 0,
  CDM_NORM_MINMAX_GLOBAL = 1,
  CDM_NORM_MINMAX_PER_CONCEPT = 2
} cdm_normalization;

typedef struct cdm_mastery cdm_mastery;

CDM_API cdm_status cdm_fit_mastery(const cdm_fit_result* r, cdm_normalization mode, cdm_mastery** out);
CDM_API cdm_status cdm_mastery_load(const char* mastery_json, cdm_mastery** out);
/* mastery.json, F_raw.csv, F_prob.csv. */
CDM_API cdm_status cdm_mastery_save(const cdm_mastery* m, const char* dir);
CDM_API size_t cdm_mastery_models(const cdm_mastery* m);
CDM_API size_t cdm_mastery_concepts(const cdm_mastery* m);
CDM_API double cdm_mastery_raw(const cdm_mastery* m, size_t model, size_t concept_index);
CDM_API double cdm_mastery_prob(const cdm_mastery* m, size_t model, size_t concept_index);
CDM_API cdm_normalization cdm_mastery_normalization(const cdm_mastery* m);
CDM_API void cdm_mastery_free(cdm_mastery* m);

/* Mean per-model Spearman correlation of F_prob rows against the planted
 * mastery probabilities. */
CDM_API cdm_status cdm_recovery_score(const cdm_mastery* m, const cdm_sim_output* truth, double* overall);

/* ------------------------------------------------------------------ */
/* Metrics and reports                                                 */

typedef struct cdm_reconstruction_report {
  double accuracy;
  double auc; /* NaN when undefined */
  int auc_defined;
  double rmse;
  size_t n_cells;
  double binarize_threshold;
} cdm_reconstruction_report;

CDM_API cdm_status cdm_reconstruction_metrics(const cdm_matrix* x_hat, const cdm_matrix* X, const cdm_matrix* W,
                                              double binarize_threshold, cdm_reconstruction_report* out);
CDM_API cdm_status cdm_reconstruction_report_save(const cdm_reconstruction_report* r, const char* path);

typedef struct cdm_concept_report cdm_concept_report;

/* X/W are optional (NULL) response matrices used for the observed-score
 * columns. */
CDM_API cdm_status cdm_concept_counts(const cdm_mastery* m, double threshold, const cdm_matrix* X,
                                      const cdm_matrix* W, cdm_concept_report** out);
CDM_API size_t cdm_concept_report_rows(const cdm_concept_report* r);
CDM_API const char* cdm_concept_report_model(const cdm_concept_report* r, size_t row);
CDM_API int cdm_concept_report_mastered(const cdm_concept_report* r, size_t row);
/* concept_counts.json, concept_counts.csv and concept_counts.txt. */
CDM_API cdm_status cdm_concept_report_save(const cdm_concept_report* r, const char* dir);
CDM_API void cdm_concept_report_free(cdm_concept_report* r);

typedef struct cdm_clustering cdm_clustering;

CDM_API cdm_status cdm_cluster_models(const cdm_mastery* m, int n_clusters, cdm_clustering** out);
CDM_API int cdm_clustering_assignment(const cdm_clustering* c, size_t model);
CDM_API cdm_status cdm_clustering_save(const cdm_clustering* c, const char* path);
CDM_API void cdm_clustering_free(cdm_clustering* c);

/* heatmap.svg and heatmap.csv (F_prob) into `dir`. */
CDM_API cdm_status cdm_heatmap_write(const cdm_mastery* m, const char* dir);

typedef enum cdm_agreement_distance { CDM_AGREEMENT_NOMINAL = 0, CDM_AGREEMENT_JACCARD = 1 } cdm_agreement_distance;

typedef struct cdm_agreement_report {
  double alpha;
  size_t n_units;
  size_t n_coders;
  size_t n_pairable;
} cdm_agreement_report;

CDM_API cdm_status cdm_krippendorff_csv(const char* path, cdm_agreement_distance distance,
                                        cdm_agreement_report* out);
CDM_API cdm_status cdm_agreement_report_save(const cdm_agreement_report* r, cdm_agreement_distance distance,
                                             const char* path);

/* ------------------------------------------------------------------ */
/* DINA oracle                                                         */

typedef struct cdm_dina_result cdm_dina_result;

/* X is binarized at 0.5 (ties to 1) before fitting. */
CDM_API cdm_status cdm_dina_fit(const cdm_matrix* X, const cdm_matrix* Q, int max_iters, double tol,
                                cdm_dina_result** out);
CDM_API double cdm_dina_slip(const cdm_dina_result* r, size_t item);
CDM_API double cdm_dina_guess(const cdm_dina_result* r, size_t item);
CDM_API int cdm_dina_mastered(const cdm_dina_result* r, size_t model, size_t concept_index);
CDM_API cdm_status cdm_dina_save(const cdm_dina_result* r, const char* path);
CDM_API void cdm_dina_free(cdm_dina_result* r);

/* ------------------------------------------------------------------ */
/* Run manifests                                                       */

typedef struct cdm_manifest cdm_manifest;

CDM_API cdm_status cdm_manifest_create(const char* command, cdm_manifest** out);
CDM_API cdm_status cdm_manifest_set(cdm_manifest* m, const char* key, const char* value);
/* Records the path and the SHA-256 of its current content. */
CDM_API cdm_status cdm_manifest_add_input(cdm_manifest* m, const char* path);
CDM_API void cdm_manifest_set_seed(cdm_manifest* m, uint64_t seed);
CDM_API cdm_status cdm_manifest_write(const cdm_manifest* m, const char* dir);
CDM_API void cdm_manifest_free(cdm_manifest* m);

#ifdef __cplusplus
}
#endif

#endif /* CDMKIT_H */
