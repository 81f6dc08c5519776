#ifndef GFLOQUET_H
#define GFLOQUET_H

/* C interface of libgfloquet. Every call returns a gfq_status; the message of
 * the last failure on the calling thread is available from gfq_last_error(). */

#include <stddef.h>

#if defined(GFQ_BUILDING_LIBRARY)
#define GFQ_API __attribute__((visibility("default")))
#else
#define GFQ_API
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum gfq_status {
  GFQ_OK = 0,
  GFQ_INVALID_ARGUMENT = 1,
  GFQ_INVALID_SYSTEM = 2,
  GFQ_RESOLUTION = 3,
  GFQ_CONVERGENCE = 4,
  GFQ_NOT_TRUNCATABLE = 5,
  GFQ_EIGENSOLVER = 6,
  GFQ_IO = 7,
  GFQ_INTERNAL = 8
} gfq_status;

typedef struct gfq_system gfq_system;
typedef struct gfq_spectrum gfq_spectrum;

typedef struct gfq_run_options {
  const char* config_path;
  const char* out_dir;
  int grid;   /* samples per period; 0 keeps the config value */
  double tol; /* <= 0 keeps the config value */
  int jobs;   /* worker threads; 0 uses every core */
} gfq_run_options;

GFQ_API const char* gfq_version(void);
GFQ_API const char* gfq_last_error(void);
GFQ_API const char* gfq_status_name(gfq_status status);

/* File-driven commands. *exit_code receives 0 (ok), 2 (invalid input) or
 * 3 (convergence failure); the returned status carries the error class. */
GFQ_API gfq_status gfq_run_analyze(const gfq_run_options* options, int* exit_code);
GFQ_API gfq_status gfq_run_stability(const gfq_run_options* options, int* exit_code);
GFQ_API gfq_status gfq_run_bands(const gfq_run_options* options, int* exit_code);

/* Summary line and warnings (newline separated) of the last gfq_run_* call on this thread. */
GFQ_API const char* gfq_last_message(void);
GFQ_API const char* gfq_last_warnings(void);

/* A linear memory system (with its grid and spectrum settings) from the JSON text of an analyze config. */
GFQ_API gfq_status gfq_system_from_json(const char* json, gfq_system** out);
GFQ_API void gfq_system_destroy(gfq_system* system);
GFQ_API gfq_status gfq_system_dimension(const gfq_system* system, int* dimension);

/* samples_per_period <= 0 keeps the config grid. */
GFQ_API gfq_status gfq_spectrum_compute(const gfq_system* system, int samples_per_period, int jobs,
                                        gfq_spectrum** out);
GFQ_API void gfq_spectrum_destroy(gfq_spectrum* spectrum);
/* Number of converged (retained) multipliers. */
GFQ_API gfq_status gfq_spectrum_count(const gfq_spectrum* spectrum, size_t* count);
GFQ_API gfq_status gfq_spectrum_multiplier(const gfq_spectrum* spectrum, size_t index, double* re, double* im);
GFQ_API gfq_status gfq_spectrum_exponent(const gfq_spectrum* spectrum, size_t index, double* re, double* im);

#ifdef __cplusplus
}
#endif

#endif
