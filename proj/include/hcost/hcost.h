/* C API for the hcost grounding library.
 *
 * All functions return HCOST_OK on success; on failure they return a status
 * code and leave a human-readable message in hcost_last_error() (thread
 * local). Handles are opaque and must be released with the matching _close
 * function. Strings returned through char** are heap-allocated and must be
 * released with hcost_string_free().
 */
#ifndef HCOST_H
#define HCOST_H

#ifdef __cplusplus
extern "C" {
#endif

typedef enum hcost_status {
    HCOST_OK = 0,
    HCOST_ERR_CONFIG = 2,  /* bad configuration or flags */
    HCOST_ERR_DATA = 3,    /* unreadable/inconsistent data or files */
    HCOST_ERR_NUMERIC = 4  /* numeric failure (NaN guard, gradcheck failure) */
} hcost_status;

typedef struct hcost_dataset hcost_dataset;
typedef struct hcost_model hcost_model;

const char* hcost_status_name(hcost_status status);
const char* hcost_last_error(void);
void hcost_string_free(char* s);

/* ---- datasets ---------------------------------------------------------- */

/* config_json: generation parameters (see README for the schema); pass NULL
 * for defaults. Writes the line-delimited scene file plus its header. */
hcost_status hcost_generate_dataset(const char* config_json,
                                    unsigned long long seed,
                                    const char* out_path);

hcost_status hcost_dataset_open(const char* path, hcost_dataset** out);
void hcost_dataset_close(hcost_dataset* ds);

/* Scene/query/subset counts as a JSON object. */
hcost_status hcost_dataset_summary_json(const hcost_dataset* ds, char** out_json);

/* ---- models ------------------------------------------------------------ */

hcost_status hcost_model_open(const char* checkpoint_path, hcost_model** out);
void hcost_model_close(hcost_model* model);
hcost_status hcost_model_meta_json(const hcost_model* model, char** out_json);

/* ---- training ---------------------------------------------------------- */

/* config_json keys: phase ("aux"|"inf"), epochs, batch_size, lr, seed,
 * alpha, beta, margin, deltas, threshold. aux_model is required for phase
 * "inf" and ignored for phase "aux". Writes a checkpoint and, when log_path
 * is non-NULL, one JSON record per epoch. */
hcost_status hcost_train(const hcost_dataset* ds, const char* config_json,
                         const hcost_model* aux_model, const char* out_checkpoint,
                         const char* log_path);

/* ---- evaluation -------------------------------------------------------- */

/* Writes the per-subset F1@0.5 CSV to csv_out (when non-NULL) and stores the
 * overall score in all_f1_out (when non-NULL). With oracle_gt nonzero the
 * model may be NULL: exact targets with unjittered boxes are scored. */
hcost_status hcost_evaluate(const hcost_dataset* ds, const hcost_model* model,
                            double threshold, int oracle_gt, const char* csv_out,
                            double* all_f1_out);

/* ---- gradient checking ------------------------------------------------- */

/* Runs the finite-difference suite over every primitive, loss, and the full
 * phase-2 objective. Writes the per-op report to report_path when non-NULL;
 * sets *all_passed. Returns HCOST_ERR_NUMERIC when any check fails. */
hcost_status hcost_gradcheck(unsigned long long seed, int points_per_op,
                             const char* report_path, int* all_passed);

#ifdef __cplusplus
} /* extern "C" */
#endif

#endif /* HCOST_H */
