/* C interface to the starflow library.
 *
 * All objects are opaque handles created and released by the library. Every
 * fallible call returns an sf_status; on failure sf_last_error() describes the
 * problem for the calling thread until its next library call.
 */
#ifndef STARFLOW_H
#define STARFLOW_H

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#  if defined(STARFLOW_BUILDING_DLL)
#    define SF_API __declspec(dllexport)
#  else
#    define SF_API __declspec(dllimport)
#  endif
#else
#  define SF_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum sf_status {
  SF_OK = 0,
  SF_ERR_INVALID_ARGUMENT = 1,
  SF_ERR_DIMENSION = 2,
  SF_ERR_NUMERICAL = 3,
  SF_ERR_IO = 4,
  SF_ERR_FORMAT = 5,
  SF_ERR_UNSUPPORTED = 6,
  SF_ERR_INTERNAL = 7
} sf_status;

typedef struct sf_matrix sf_matrix;
typedef struct sf_model sf_model;
typedef struct sf_ram_batch sf_ram_batch;
typedef struct sf_check_report sf_check_report;

SF_API const char* sf_version(void);
SF_API const char* sf_last_error(void);
SF_API const char* sf_status_name(sf_status status);

/* Row-major dense matrices. */
SF_API sf_status sf_matrix_create(size_t rows, size_t cols, const double* data, sf_matrix** out);
SF_API void sf_matrix_free(sf_matrix* m);
SF_API size_t sf_matrix_rows(const sf_matrix* m);
SF_API size_t sf_matrix_cols(const sf_matrix* m);
SF_API const double* sf_matrix_data(const sf_matrix* m);
/* ".csv" paths are text, anything else the binary SFAM layout. */
SF_API sf_status sf_matrix_load(const char* path, sf_matrix** out);
SF_API sf_status sf_matrix_save(const sf_matrix* m, const char* path);

/* Fitting from a JSON config. Null/zero overrides keep the config values. */
typedef struct sf_fit_overrides {
  const char* out_dir;
  const char* mode; /* "unlabeled" or "labeled" */
  int k;
  int has_seed;
  uint64_t seed;
} sf_fit_overrides;

typedef struct sf_fit_summary {
  double initial_nll;
  double final_nll;
  int epochs;
  int archetypes;
  int dim;
  size_t points;
} sf_fit_summary;

SF_API sf_status sf_fit(const char* config_path, const sf_fit_overrides* overrides, sf_fit_summary* summary);

/* Models. */
SF_API sf_status sf_model_load(const char* path, sf_model** out);
SF_API void sf_model_free(sf_model* model);
SF_API int sf_model_dim(const sf_model* model);
SF_API int sf_model_archetype_count(const sf_model* model);
/* K x d archetypes as rows. */
SF_API sf_status sf_model_archetypes(const sf_model* model, sf_matrix** out);
SF_API sf_status sf_model_log_density(const sf_model* model, const double* x, int normalized, double* out);
/* phi = nu o S_rho o phi_A and its inverse. */
SF_API sf_status sf_model_forward(const sf_model* model, const double* x, double* out);
SF_API sf_status sf_model_inverse(const sf_model* model, const double* y, double* out);

SF_API sf_status sf_geodesic(const sf_model* model, const double* x, const double* y, int frames, int iso,
                             sf_matrix** out);
/* grid text "lo:hi:n" or "xlo:xhi:nx,ylo:yhi:ny"; rows x, y, log p. */
SF_API sf_status sf_density_grid(const sf_model* model, const char* grid, sf_matrix** out);
SF_API sf_status sf_sample(const sf_model* model, int n, uint64_t seed, sf_matrix** out);

/* RAM over the rows of points; threads <= 0 uses STARFLOW_THREADS or the hardware count. */
SF_API sf_status sf_ram(const sf_model* model, const sf_matrix* points, int threads, sf_ram_batch** out);
SF_API void sf_ram_batch_free(sf_ram_batch* batch);
SF_API size_t sf_ram_batch_size(const sf_ram_batch* batch);
SF_API double sf_ram_batch_mean_error(const sf_ram_batch* batch);
SF_API sf_status sf_ram_batch_weights(const sf_ram_batch* batch, int iso, sf_matrix** out);
SF_API sf_status sf_ram_batch_projected(const sf_ram_batch* batch, sf_matrix** out);
SF_API sf_status sf_ram_batch_write_csv(const sf_ram_batch* batch, const char* path);
SF_API sf_status sf_ram_batch_write_classes(const sf_ram_batch* batch, const char* path);

/* Invariant suite over a model file. */
SF_API sf_status sf_check(const char* model_path, uint64_t seed, sf_check_report** out);
SF_API void sf_check_report_free(sf_check_report* report);
SF_API size_t sf_check_report_count(const sf_check_report* report);
SF_API const char* sf_check_report_name(const sf_check_report* report, size_t i);
SF_API const char* sf_check_report_detail(const sf_check_report* report, size_t i);
SF_API int sf_check_report_item_passed(const sf_check_report* report, size_t i);
SF_API int sf_check_report_passed(const sf_check_report* report);

#ifdef __cplusplus
}
#endif

#endif /* STARFLOW_H */
