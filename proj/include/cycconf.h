/* C API for the cycconf library: synthetic benchmark generation, detector
 * training with auxiliary self-supervised tasks, evaluation, and matching
 * diagnostics. All functions return ccf_code; on failure a human-readable
 * message is available from ccf_last_error() until the next failing call on
 * the same thread. Handles are opaque and must be released with the matching
 * *_destroy / *_close call. */

#ifndef CYCCONF_H
#define CYCCONF_H

#include <stddef.h>
#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

#define CCF_API_VERSION 1

typedef enum ccf_code {
  CCF_OK = 0,
  CCF_ERROR = 1,        /* runtime failure (I/O, malformed data, numerics) */
  CCF_EINVAL = 2,       /* invalid argument or contract violation */
  CCF_ENOTFOUND = 3     /* missing file or directory */
} ccf_code;

typedef struct ccf_config ccf_config;    /* flat key=value configuration */
typedef struct ccf_dataset ccf_dataset;  /* validated benchmark directory */
typedef struct ccf_model ccf_model;      /* detector + auxiliary heads */

const char* ccf_version(void);
const char* ccf_last_error(void);

/* ---- configuration ---- */

ccf_code ccf_config_create(ccf_config** out);
ccf_code ccf_config_load_file(ccf_config* cfg, const char* path);
ccf_code ccf_config_set(ccf_config* cfg, const char* key, const char* value);
/* Returns NULL when the key is unset; pointer valid until the next mutation. */
const char* ccf_config_get(const ccf_config* cfg, const char* key);
void ccf_config_destroy(ccf_config* cfg);

/* ---- synthetic benchmark ---- */

/* spec may be NULL for the built-in default benchmark. */
ccf_code ccf_generate_benchmark(const ccf_config* spec, const char* out_dir,
                                uint64_t seed, int force);

ccf_code ccf_dataset_open(const char* dir, ccf_dataset** out);
size_t ccf_dataset_num_sequences(const ccf_dataset* ds);
size_t ccf_dataset_num_frames(const ccf_dataset* ds);
/* e.g. attribute "domain", value "night". */
ccf_code ccf_dataset_split(const ccf_dataset* ds, const char* attribute,
                           const char* value, ccf_dataset** out);
/* FNV-1a hash of the dataset's manifest bytes, as written to manifests. */
uint64_t ccf_dataset_manifest_hash(const ccf_dataset* ds);
void ccf_dataset_close(ccf_dataset* ds);

/* ---- models ---- */

/* cfg may be NULL for defaults; "model."-prefixed keys configure shapes. */
ccf_code ccf_model_create(const ccf_config* cfg, uint64_t seed, ccf_model** out);
ccf_code ccf_model_load(const char* checkpoint_path, ccf_model** out);
ccf_code ccf_model_save(const ccf_model* m, const char* checkpoint_path);
int ccf_model_embedding_dim(const ccf_model* m);
/* Returns the value stored under `key` in the checkpoint's extra metadata
 * (e.g. "trained_task"); NULL when absent. */
const char* ccf_model_meta(const ccf_model* m, const char* key);
void ccf_model_destroy(ccf_model* m);

/* ---- training ---- */

/* Joint training on `source`; when `target` is non-NULL the loop runs in
 * unsupervised-domain-adaptation mode (detection + auxiliary task on source,
 * auxiliary task only on target; target annotations are never read).
 * Writes experiment.json, trace.csv and checkpoint.ckpt under out_dir. */
ccf_code ccf_train(ccf_model* m, const ccf_dataset* source,
                   const ccf_dataset* target, const ccf_config* cfg,
                   const char* out_dir);

/* ---- evaluation ---- */

/* Writes the metric report as JSON; either path may be NULL to skip it. */
ccf_code ccf_evaluate(const ccf_model* m, const ccf_dataset* ds,
                      const char* json_out_path, const char* table_out_path);
/* In-domain vs out-of-domain reports with deltas: report.json, report.txt
 * and per_class.csv under out_dir. */
ccf_code ccf_ood_report(const ccf_model* m, const ccf_dataset* train_domain,
                        const ccf_dataset* test_domain, const char* out_dir);

/* ---- matching diagnostics ---- */

/* mode: "cycconf" or "cycle_consistency" (NULL uses the task recorded in the
 * checkpoint, falling back to cycconf). Writes per-pair match-weight CSVs,
 * matching_summary.csv and embeddings.csv under out_dir. mean_entropy_out may
 * be NULL. */
ccf_code ccf_inspect_matching(const ccf_model* m, const ccf_dataset* ds,
                              int pairs, uint64_t seed, const char* mode,
                              const char* out_dir, double* mean_entropy_out);

#ifdef __cplusplus
} /* extern "C" */
#endif

#endif /* CYCCONF_H */
