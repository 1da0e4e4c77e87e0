/*
 * C interface to the erasure analysis library.
 *
 * All objects are opaque handles owned by the caller and released with the
 * matching *_free function. Every call returns an ers_status; on failure a
 * description is available from ers_last_error() until the next call on the
 * same thread. Strings returned through char** are released with
 * ers_string_free.
 */
#ifndef ERASURE_ERASURE_H_
#define ERASURE_ERASURE_H_

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#define ERS_API __declspec(dllexport)
#else
#define ERS_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

/* Values double as CLI exit codes. */
typedef enum ers_status {
  ERS_OK = 0,
  ERS_ERR_USAGE = 2,
  ERS_ERR_DATA = 3,
  ERS_ERR_NUMERIC = 4,
  ERS_ERR_INTERNAL = 5
} ers_status;

typedef struct ers_model ers_model;
typedef struct ers_corpus ers_corpus;
typedef struct ers_vocab ers_vocab;
typedef struct ers_cache ers_cache;

ERS_API const char* ers_last_error(void);
ERS_API const char* ers_version(void);
ERS_API void ers_string_free(char* s);

/* Models. */
ERS_API ers_status ers_model_load(const char* path, ers_model** out);
ERS_API ers_status ers_model_save(const ers_model* model, const char* path);
ERS_API void ers_model_free(ers_model* model);
/* JSON object with the model name and config. */
ERS_API ers_status ers_model_info(const ers_model* model, char** out_json);

/* Token corpora (JSON lines). model may be NULL to skip the id range check. */
ERS_API ers_status ers_corpus_load(const char* path, const ers_model* model, ers_corpus** out);
ERS_API ers_status ers_corpus_size(const ers_corpus* corpus, size_t* out_documents);
ERS_API void ers_corpus_free(ers_corpus* corpus);
/* Writes one tokenized document per non-empty line of a text file. */
ERS_API ers_status ers_corpus_from_text(const ers_vocab* vocab, const char* text_path,
                                        const char* out_path);

/* Vocabulary bundles and tokenization. */
ERS_API ers_status ers_vocab_load(const char* path, ers_vocab** out);
ERS_API void ers_vocab_free(ers_vocab* vocab);
/* Writes up to cap ids; *out_len receives the full count. */
ERS_API ers_status ers_tokenize(const ers_vocab* vocab, const char* text, int32_t* out,
                                size_t cap, size_t* out_len);
ERS_API ers_status ers_decode(const ers_vocab* vocab, const int32_t* ids, size_t n,
                              char** out_text);

/* Forward passes. plan_json may be NULL (clean run). */
ERS_API ers_status ers_forward(const ers_model* model, const int32_t* tokens, size_t n,
                               const char* plan_json, ers_cache** out);
ERS_API void ers_cache_free(ers_cache* cache);
ERS_API ers_status ers_cache_seq_len(const ers_cache* cache, size_t* out);

/*
 * Copies a seq x d_model (or seq x d_vocab for logits) row-major tensor into
 * out. *rows/*cols receive the shape; nothing is written when cap is too
 * small and ERS_ERR_USAGE is returned.
 *   checkpoint: "resid_pre_<n>", "resid_mid_<n>", "resid_post_<n>"
 *   component:  "L<l>H<h>", "MLP<l>", "BIAS<l>", "EMB", "POS"
 */
ERS_API ers_status ers_cache_resid(const ers_cache* cache, const char* checkpoint, float* out,
                                   size_t cap, size_t* rows, size_t* cols);
ERS_API ers_status ers_cache_component(const ers_cache* cache, const char* component,
                                       float* out, size_t cap, size_t* rows, size_t* cols);
ERS_API ers_status ers_cache_logits(const ers_cache* cache, float* out, size_t cap,
                                    size_t* rows, size_t* cols);

/* Analysis primitives. */
ERS_API ers_status ers_projection_ratio(const float* a, const float* b, size_t n, double* out);
ERS_API ers_status ers_top2(const ers_cache* cache, size_t pos, int32_t* token_a,
                            int32_t* token_b);
ERS_API ers_status ers_logit_diff(const ers_model* model, const ers_cache* cache,
                                  const char* component, size_t pos, int32_t token_a,
                                  int32_t token_b, double* out);

/*
 * Runs an experiment and returns its JSON report.
 *   command: "trace-writer", "scan-erasers", "patch-vcomp", "dla-correlate",
 *            "adversarial", "verify-reference"
 *   options_json: experiment options object (may be NULL for defaults); for
 *            verify-reference, {"fixtures_path": ..., "tolerance": ...}
 * corpus is required by all commands except verify-reference; vocab only by
 * adversarial.
 */
ERS_API ers_status ers_run(const char* command, const ers_model* model, const ers_corpus* corpus,
                           const ers_vocab* vocab, const char* options_json,
                           char** out_report_json);

#ifdef __cplusplus
}
#endif

#endif /* ERASURE_ERASURE_H_ */
