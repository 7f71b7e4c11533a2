/* C interface to the counterfactual explanation engine. All results are
 * returned as JSON strings owned by the caller (free with cfrec_string_free).
 * On failure the functions return a non-zero status and cfrec_last_error()
 * describes what went wrong on the calling thread. */
#ifndef CFREC_H
#define CFREC_H

#ifdef __cplusplus
extern "C" {
#endif

#if defined(_WIN32)
#define CFREC_API __declspec(dllexport)
#else
#define CFREC_API __attribute__((visibility("default")))
#endif

typedef enum cfrec_status {
  CFREC_OK = 0,
  CFREC_ERR_INVALID_ARGUMENT = 1,
  CFREC_ERR_CONFIG = 2,
  CFREC_ERR_DATA = 3,
  CFREC_ERR_IO = 4,
  CFREC_ERR_NUMERIC = 5,
  CFREC_ERR_INTERNAL = 6
} cfrec_status;

typedef struct cfrec_config cfrec_config;

CFREC_API const char* cfrec_version(void);
/* Message of the last failed call on this thread; "" if none. */
CFREC_API const char* cfrec_last_error(void);
CFREC_API void cfrec_string_free(char* s);

CFREC_API cfrec_status cfrec_config_load(const char* path, cfrec_config** out);
/* base_dir resolves relative paths; NULL means the working directory. */
CFREC_API cfrec_status cfrec_config_parse(const char* json, const char* base_dir,
                                          cfrec_config** out);
/* JSON merge patch over the current document, e.g. {"query":{"k":10}}. */
CFREC_API cfrec_status cfrec_config_patch(cfrec_config* config, const char* json_patch);
CFREC_API cfrec_status cfrec_config_to_json(const cfrec_config* config, char** out);
CFREC_API cfrec_status cfrec_config_output_dir(const cfrec_config* config, char** out);
CFREC_API void cfrec_config_free(cfrec_config* config);

CFREC_API cfrec_status cfrec_train(const cfrec_config* config, char** summary_json);
CFREC_API cfrec_status cfrec_explain(const cfrec_config* config, const char* user_id,
                                     const char* item_id, char** result_json);
/* Runs the protocol and writes metrics_<hash>.{csv,json} to the output dir. */
CFREC_API cfrec_status cfrec_benchmark(const cfrec_config* config, char** report_json);
/* path may be NULL: the file goes to the output dir. */
CFREC_API cfrec_status cfrec_export_mps(const cfrec_config* config, const char* user_id,
                                        const char* item_id, const char* path,
                                        char** written_path);
CFREC_API cfrec_status cfrec_verify(const cfrec_config* config, const char* explain_json,
                                    char** verdict_json);

#ifdef __cplusplus
}
#endif

#endif
