/* C interface to the ebjdat library.
 *
 * Every call returns an ebjd_status. On failure ebjd_last_error() describes
 * the error for the calling thread until its next call. Strings returned
 * through char** are owned by the caller and released with ebjd_free_string.
 */
#ifndef EBJDAT_EBJDAT_H_
#define EBJDAT_EBJDAT_H_

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#define EBJD_API __declspec(dllexport)
#else
#define EBJD_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum ebjd_status {
  EBJD_OK = 0,
  EBJD_ERROR = 1,            /* I/O, invalid argument, internal */
  EBJD_CONFIG_ERROR = 2,     /* bad config, flags or input data */
  EBJD_DIVERGED = 3,         /* training aborted after repeated divergence */
  EBJD_CHECKPOINT_ERROR = 4  /* unreadable or incompatible checkpoint */
} ebjd_status;

EBJD_API const char* ebjd_last_error(void);
EBJD_API const char* ebjd_version(void);
EBJD_API void ebjd_free_string(char* s);

/* Optional numeric arguments use a has_* flag. */

typedef struct ebjd_train_args {
  const char* config_path;
  const char* resume; /* NULL for a fresh run */
  int has_seed;
  uint64_t seed;
  const char* output_dir; /* NULL keeps the config's output_dir */
} ebjd_train_args;

/* summary_json: {"mode", "epochs_completed", "checkpoint", "output_dir",
 * "aborted_epoch"}. Returns EBJD_DIVERGED when training was aborted; the
 * summary is still produced and aborted_epoch holds the epoch. */
EBJD_API ebjd_status ebjd_train(const ebjd_train_args* args, char** summary_json);

typedef struct ebjd_attack_args {
  const char* checkpoint;
  const char* data; /* "train", "test" or a CSV path */
  int has_eps;
  double eps;
  int has_steps;
  int steps;
  int has_seed;
  uint64_t seed;
} ebjd_attack_args;

/* metrics_json: the text written to <output_dir>/eval.json. */
EBJD_API ebjd_status ebjd_eval(const ebjd_attack_args* args, const char* output_dir,
                               char** metrics_json);

/* Writes adversarial points to out_csv. */
EBJD_API ebjd_status ebjd_attack(const ebjd_attack_args* args, const char* out_csv);

typedef struct ebjd_sample_args {
  const char* checkpoint;
  size_t n;
  const char* init; /* "uniform", "informative" or "buffer" */
  int has_steps;
  int steps;
  int has_sigma;
  double sigma;
  int has_seed;
  uint64_t seed;
  const char* out_csv;
} ebjd_sample_args;

EBJD_API ebjd_status ebjd_sample(const ebjd_sample_args* args);

typedef struct ebjd_report_args {
  ebjd_attack_args attack;
  int bins;
  size_t n_gen; /* 0: same as the clean population */
  const char* gen_init;
  int has_gen_steps;
  int gen_steps;
  const char* output_dir;
} ebjd_report_args;

/* report_json: the text written to <output_dir>/report.json. */
EBJD_API ebjd_status ebjd_report(const ebjd_report_args* args, char** report_json);

/* Checkpoint handles. */
typedef struct ebjd_checkpoint ebjd_checkpoint;

EBJD_API ebjd_status ebjd_checkpoint_load(const char* path, ebjd_checkpoint** out);
EBJD_API ebjd_status ebjd_checkpoint_save(const ebjd_checkpoint* ck, const char* path);
EBJD_API void ebjd_checkpoint_free(ebjd_checkpoint* ck);
EBJD_API size_t ebjd_checkpoint_input_dim(const ebjd_checkpoint* ck);
EBJD_API size_t ebjd_checkpoint_num_classes(const ebjd_checkpoint* ck);
EBJD_API size_t ebjd_checkpoint_epochs(const ebjd_checkpoint* ck);
/* x is n rows of input_dim model-space values. */
EBJD_API ebjd_status ebjd_checkpoint_predict(const ebjd_checkpoint* ck, const double* x, size_t n,
                                             int* labels);
EBJD_API ebjd_status ebjd_checkpoint_energy(const ebjd_checkpoint* ck, const double* x, size_t n,
                                            double* energies);

#ifdef __cplusplus
}
#endif

#endif /* EBJDAT_EBJDAT_H_ */
