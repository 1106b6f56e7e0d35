/* C interface to the spatio-temporal graph classification toolkit.
 *
 * Usage pattern:
 *   stn_spec* spec = stn_spec_create();
 *   stn_spec_set(spec, "output_dir", "runs/demo");
 *   char* summary = NULL;
 *   if (stn_run_synth(spec, &summary) != STN_OK)
 *       fprintf(stderr, "%s\n", stn_last_error());
 *   stn_free(summary);
 *   stn_spec_free(spec);
 *
 * All functions returning stn_status set the thread-local message readable
 * via stn_last_error() on failure. Strings returned through out-parameters
 * are heap-allocated JSON documents owned by the caller; release them with
 * stn_free().
 */
#ifndef STNAGNN_H
#define STNAGNN_H

#ifdef __cplusplus
extern "C" {
#endif

typedef enum stn_status {
  STN_OK = 0,
  STN_CONFIG_ERROR = 2,
  STN_DATA_ERROR = 3,
  STN_NUMERIC_ERROR = 4,
  STN_INTERNAL_ERROR = 5
} stn_status;

/* Opaque experiment configuration handle. */
typedef struct stn_spec stn_spec;

/* Message for the most recent failure on this thread; empty string if none. */
const char* stn_last_error(void);

/* Fresh spec holding every default. Free with stn_spec_free. */
stn_spec* stn_spec_create(void);
void stn_spec_free(stn_spec* spec);

/* Merge a JSON spec document (file or text) into the handle. Unknown keys
 * are rejected. Later calls and stn_spec_set override earlier values. */
stn_status stn_spec_parse_file(stn_spec* spec, const char* path);
stn_status stn_spec_parse_json(stn_spec* spec, const char* json_text);

/* Dotted-path override, e.g. ("model.pe_mode", "st2d") or ("seed", "7"). */
stn_status stn_spec_set(stn_spec* spec, const char* dotted_key, const char* value);

/* Resolved spec (defaults filled) as JSON; caller frees with stn_free. */
char* stn_spec_resolved_json(const stn_spec* spec);

/* Release a string returned by this library. NULL is a no-op. */
void stn_free(char* s);

/* Commands. Each writes its artifacts under the spec's output_dir and, on
 * success, stores a JSON run summary in *summary_json (may be NULL if the
 * caller does not want it). */
stn_status stn_run_synth(const stn_spec* spec, char** summary_json);
stn_status stn_run_build(const stn_spec* spec, char** summary_json);
stn_status stn_run_train(const stn_spec* spec, char** summary_json);
/* checkpoint: path to a fold checkpoint, or NULL for output_dir/fold0. */
stn_status stn_run_explain(const stn_spec* spec, const char* checkpoint, char** summary_json);
/* checkpoint: parameters to visualize, or NULL for seeded random ones. */
stn_status stn_run_attnviz(const stn_spec* spec, const char* checkpoint, char** summary_json);
/* grid: "pe", "graph", or "aggregator". */
stn_status stn_run_ablate(const stn_spec* spec, const char* grid, char** summary_json);

#ifdef __cplusplus
}
#endif

#endif /* STNAGNN_H */
