/* Public C API of the AT/DT experiment library.
 *
 * Usage pattern: create or load a config, optionally override fields, then
 * run one of the commands against it. All functions return atdt_status;
 * on failure atdt_last_error() carries a message for the calling thread.
 */
#ifndef ATDT_H_
#define ATDT_H_

#include <stddef.h>

#ifdef __cplusplus
extern "C" {
#endif

typedef enum atdt_status {
  ATDT_OK = 0,
  ATDT_ERR_RUN = 1,    /* a sub-run failed; partial results were kept */
  ATDT_ERR_CONFIG = 2, /* invalid configuration or arguments */
  ATDT_ERR_IO = 3      /* filesystem or serialization failure */
} atdt_status;

/* Opaque handle over a fully-resolved experiment configuration. */
typedef struct atdt_config atdt_config;

const char* atdt_version(void);

/* Message for the last failing call on this thread; never NULL. */
const char* atdt_last_error(void);

/* Configuration ---------------------------------------------------------- */

/* Built-in defaults (64x64 toy benchmark, 5 derived seeds). */
atdt_status atdt_config_default(atdt_config** out);

/* Parses a JSON config file or a run manifest. Unknown keys are errors. */
atdt_status atdt_config_load(const char* path, atdt_config** out);

/* Parses a JSON document from memory. */
atdt_status atdt_config_parse(const char* json_text, atdt_config** out);

/* Applies a JSON-pointer-free override: dotted path ("plan.split_level",
 * "dataset.n_train") and a JSON value ("4", "[1,2]", "\"dep2sem\""). */
atdt_status atdt_config_set(atdt_config* config, const char* dotted_key, const char* json_value);

/* Serializes the resolved config; free the result with atdt_string_free. */
atdt_status atdt_config_dump(const atdt_config* config, char** out_json);

void atdt_config_destroy(atdt_config* config);

/* Commands ---------------------------------------------------------------- */

/* Renders the configured datasets under out_dir (images, depth, labels,
 * masks, manifest.json). Deterministic and idempotent per config. */
atdt_status atdt_gen_data(const atdt_config* config, const char* out_dir);

/* Runs the configured methods for every seed; writes per-seed run
 * directories under <out_root>/<name>/. Returns ATDT_ERR_RUN if any method
 * recorded a failure (partial results are preserved on disk). */
atdt_status atdt_run(const atdt_config* config, const char* out_root);

/* Collates run directories into comparison tables and qualitative strips.
 * Missing directories are skipped with a warning (still ATDT_OK). */
atdt_status atdt_report(const char* const* run_dirs, size_t n_dirs, const char* out_dir);

/* Gradient, metric and generator self-checks. Prints one line per check to
 * stdout when verbose is nonzero. Returns ATDT_ERR_RUN on any failure. */
atdt_status atdt_selftest(int verbose);

/* Memory ------------------------------------------------------------------ */

void atdt_string_free(char* s);

#ifdef __cplusplus
} /* extern "C" */
#endif

#endif /* ATDT_H_ */
