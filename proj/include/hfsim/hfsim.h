/* C interface to the hfsim scenario runner. All handles are opaque; every
 * fallible call returns an hfsim_status and leaves a message retrievable
 * with hfsim_last_error() on the calling thread. Strings returned through
 * `char**` out-parameters are owned by the caller and released with
 * hfsim_string_free(). */
#ifndef HFSIM_H
#define HFSIM_H

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#define HFSIM_API __declspec(dllexport)
#else
#define HFSIM_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum hfsim_status {
  HFSIM_OK = 0,
  HFSIM_ERR_USAGE = 1,   /* null pointer or invalid argument */
  HFSIM_ERR_CONFIG = 2,  /* config text/file invalid, or reports not comparable */
  HFSIM_ERR_RUN = 3,     /* simulation or output failure */
  HFSIM_ERR_IO = 4
} hfsim_status;

typedef struct hfsim_config hfsim_config;
typedef struct hfsim_report hfsim_report;

HFSIM_API const char* hfsim_version(void);
HFSIM_API const char* hfsim_last_error(void);
HFSIM_API void hfsim_string_free(char* s);

/* FNV-1a 64-bit over a byte buffer (the digest used for integrity baselines). */
HFSIM_API uint64_t hfsim_digest(const void* data, size_t len);

HFSIM_API hfsim_status hfsim_config_load(const char* path, hfsim_config** out);
/* base_dir resolves include lines; may be NULL. */
HFSIM_API hfsim_status hfsim_config_parse(const char* text, const char* base_dir, hfsim_config** out);
HFSIM_API void hfsim_config_free(hfsim_config* cfg);
HFSIM_API hfsim_status hfsim_config_set_repeats(hfsim_config* cfg, uint32_t repeats);
HFSIM_API hfsim_status hfsim_config_set_seed(hfsim_config* cfg, uint64_t seed);
HFSIM_API hfsim_status hfsim_config_serialize(const hfsim_config* cfg, char** out_text);
HFSIM_API hfsim_status hfsim_config_digest(const hfsim_config* cfg, char** out_hex);

/* trace_dir may be NULL; otherwise one JSON-lines event trace per run is written there. */
HFSIM_API hfsim_status hfsim_run(const hfsim_config* cfg, const char* trace_dir, hfsim_report** out);
HFSIM_API void hfsim_report_free(hfsim_report* report);
HFSIM_API hfsim_status hfsim_report_json(const hfsim_report* report, char** out_json);
HFSIM_API hfsim_status hfsim_report_table(const hfsim_report* report, char** out_text);
HFSIM_API hfsim_status hfsim_report_write(const hfsim_report* report, const char* out_dir);

/* Compares two report.json documents. *flagged is set to 1 when any metric
 * regressed beyond tol_pct. */
HFSIM_API hfsim_status hfsim_diff(const char* report_a_json, const char* report_b_json, double tol_pct,
                                  char** out_text, int* flagged);

#ifdef __cplusplus
}
#endif

#endif /* HFSIM_H */
