/* Public C API of the CAIBA bus simulator.
 *
 * The library wraps the C++ core behind opaque handles and status codes so
 * that any language with a C FFI can drive it.  All functions are
 * thread-compatible: distinct handles may be used from distinct threads
 * concurrently, but one handle must not be shared without synchronisation.
 *
 * Every failing call records a human-readable description retrievable with
 * caiba_last_error() on the same thread.
 */
#ifndef CAIBA_H
#define CAIBA_H

#include <stddef.h>
#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

typedef enum caiba_status {
    CAIBA_OK = 0,
    CAIBA_ERR_CONFIG = 1,   /* scenario rejected; last_error names the field */
    CAIBA_ERR_RUNTIME = 2,  /* the simulation could not run to completion */
    CAIBA_ERR_IO = 3,       /* file could not be read or written */
    CAIBA_ERR_ARGUMENT = 4  /* null pointer, bad enum value, wrong call order */
} caiba_status;

/* Library version, e.g. "1.0.0". Static storage; do not free. */
const char* caiba_version(void);

/* Description of this thread's most recent failure ("" if none).
 * Valid until the next failing call on the same thread. */
const char* caiba_last_error(void);

/* Frees any string an out-parameter of this API allocated. */
void caiba_string_free(char* s);

/* ------------------------------------------------------------------------
 * Simulation runs
 */

typedef struct caiba_sim caiba_sim;

/* Parse and validate a scenario; on success *out owns the handle. */
caiba_status caiba_sim_create_from_file(const char* path, caiba_sim** out);
caiba_status caiba_sim_create_from_json(const char* json_text, caiba_sim** out);
void caiba_sim_destroy(caiba_sim* sim);

/* Scenario name (the handle owns the storage). */
caiba_status caiba_sim_name(const caiba_sim* sim, const char** out);

/* Overrides applied before the run; rejected once the run has started. */
caiba_status caiba_sim_set_seed(caiba_sim* sim, uint64_t seed);
caiba_status caiba_sim_set_tag_width(caiba_sim* sim, unsigned tag_width /* 8, 16, 24 */);
caiba_status caiba_sim_enable_trace(caiba_sim* sim, int record_drivers);

/* Runs the scenario to completion. Idempotent. */
caiba_status caiba_sim_run(caiba_sim* sim);

/* Deterministic metrics JSON for a finished run; free with caiba_string_free. */
caiba_status caiba_sim_metrics_json(const caiba_sim* sim, char** out);

/* Evaluates the scenario's "expect" block against the finished run.
 * *out_count receives the number of unmet expectations; if out_text is not
 * NULL it receives a newline-joined description (free with caiba_string_free;
 * NULL when everything was met). */
caiba_status caiba_sim_unmet_expectations(const caiba_sim* sim, char** out_text,
                                          size_t* out_count);

/* Writes metrics.json and verdicts.csv (plus wire_trace.csv when tracing was
 * enabled) into out_dir, creating the directory if needed. */
caiba_status caiba_sim_write_outputs(const caiba_sim* sim, const char* out_dir);

/* ------------------------------------------------------------------------
 * Stateless helpers
 */

/* Feasibility of the in-flight tag overwrite for a given bus design. */
typedef struct caiba_timing_budget {
    double quantum_ns;
    double propagation_ns; /* one full bus length */
    double processing_ns;  /* read + decide + drive */
    double transceiver_ns; /* RX + TX path */
    double worst_case_ns;  /* sum of the three components */
    double deadline_ns;    /* latest sample point across the bus */
    int feasible;          /* 1 if worst_case_ns < deadline_ns */
} caiba_timing_budget;

caiba_status caiba_timing_budget_eval(double bitrate_bps, unsigned quanta_per_bit,
                                      double bus_length_m, double transceiver_ns,
                                      caiba_timing_budget* out);

/* Regenerates the golden vector files (crc15_vectors.json, cmac_vectors.json,
 * bpmac_vectors.json) into out_dir. Byte-identical on every call. */
caiba_status caiba_vectors_write(const char* out_dir);

/* Monte-carlo forgery experiment: `trials` uniformly random tag guesses
 * against fresh messages under a w-bit MAC. */
typedef struct caiba_forgery_report {
    unsigned tag_width;
    uint64_t trials;
    uint64_t successes;
    double expected_mean; /* trials / 2^w */
    double std_dev;       /* binomial standard deviation */
} caiba_forgery_report;

caiba_status caiba_forgery_monte_carlo(unsigned tag_width, uint64_t trials, uint64_t seed,
                                       caiba_forgery_report* out);

#ifdef __cplusplus
}
#endif

#endif /* CAIBA_H */
