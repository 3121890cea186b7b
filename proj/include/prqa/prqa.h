#ifndef PRQA_PRQA_H
#define PRQA_PRQA_H

/*
 * C interface to the review-answer classifier.
 *
 * Every call returns a prqa_status. On failure the message is available from
 * prqa_last_error() on the calling thread until the next failing call there.
 * Strings returned through char** out-parameters are owned by the caller and
 * released with prqa_string_free().
 */

#include <stddef.h>
#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

#if defined(_WIN32)
#define PRQA_API __declspec(dllexport)
#else
#define PRQA_API __attribute__((visibility("default")))
#endif

typedef enum prqa_status {
  PRQA_OK = 0,
  PRQA_ERR_INTERNAL = 1,
  PRQA_ERR_INPUT = 2,   /* bad config, unreadable or malformed input */
  PRQA_ERR_NUMERIC = 3, /* training diverged */
  PRQA_ERR_USAGE = 4    /* null handle, empty text, out-of-contract call */
} prqa_status;

typedef enum prqa_eval_set {
  PRQA_EVAL_SOURCE = 0, /* labeled pair file, the QA test split by default */
  PRQA_EVAL_TARGET = 1  /* gold question-review file */
} prqa_eval_set;

typedef enum prqa_adaptation {
  PRQA_ADAPT_CONFIG = -1,
  PRQA_ADAPT_OFF = 0,
  PRQA_ADAPT_ON = 1
} prqa_adaptation;

typedef struct prqa_config prqa_config;
typedef struct prqa_model prqa_model;

typedef struct prqa_eval_report {
  char dataset[16];
  uint64_t n;
  uint64_t tp, fp, tn, fn;
  double accuracy;
  double precision;
  double recall;
  double f1;
} prqa_eval_report;

PRQA_API const char* prqa_version(void);
PRQA_API const char* prqa_last_error(void);
PRQA_API void prqa_string_free(char* s);

/* Loads and fully validates a JSON run config. */
PRQA_API prqa_status prqa_config_load(const char* path, prqa_config** out);
PRQA_API void prqa_config_free(prqa_config* config);
PRQA_API prqa_status prqa_config_output_dir(const prqa_config* config, char** out);

/* Writes pair files and stats.json into the output directory. stats_json
 * receives the stats report and warnings one warning per line; either may be
 * NULL. */
PRQA_API prqa_status prqa_ingest(const prqa_config* config, char** stats_json,
                                 char** warnings);

/* Trains on ingested data; summary_json lists checkpoint, log and best epoch. */
PRQA_API prqa_status prqa_train(const prqa_config* config, prqa_adaptation adaptation,
                                char** summary_json);

/* Trains both arms and returns the four-row accuracy table. */
PRQA_API prqa_status prqa_ablation(const prqa_config* config, char** table);

PRQA_API prqa_status prqa_model_load(const char* checkpoint_path, prqa_model** out);
PRQA_API void prqa_model_free(prqa_model* model);

PRQA_API prqa_status prqa_predict(const prqa_model* model, const char* question,
                                  const char* candidate, int* label, double* confidence);

/* path may be NULL to use the config's default for the set (config then
 * required). workers > 1 shards prediction across threads. */
PRQA_API prqa_status prqa_evaluate(const prqa_model* model, const prqa_config* config,
                                   const char* path, prqa_eval_set set, unsigned workers,
                                   prqa_eval_report* out);
PRQA_API prqa_status prqa_report_to_json(const prqa_eval_report* report, char** json);

/* Rewrites a single-quoted upstream dump as strict JSON lines. */
PRQA_API prqa_status prqa_normalize_file(const char* input_path, const char* output_path,
                                         size_t* records);

#ifdef __cplusplus
}
#endif

#endif /* PRQA_PRQA_H */
