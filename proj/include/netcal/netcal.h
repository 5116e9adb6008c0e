/*
 * netcal public C API.
 *
 * Every function that can fail returns a status code and leaves a
 * human-readable message in netcal_last_error() (thread local). Objects are
 * opaque handles created by netcal_*_load / _new / _fit functions and
 * released with the matching netcal_*_free; freeing NULL is a no-op.
 */
#ifndef NETCAL_H
#define NETCAL_H

#include <stddef.h>
#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

#define NETCAL_OK 0
#define NETCAL_ERR_VALIDATION 1 /* bad input, malformed file, contract violation */
#define NETCAL_ERR_RUNTIME 2    /* I/O or internal failure */

#define NETCAL_KIND_PACKET 0
#define NETCAL_KIND_SYSCALL 1

#define NETCAL_MODE_RAW 0     /* isolation forest on raw encoder embeddings */
#define NETCAL_MODE_PAIRCOS 1 /* pairwise cosine features against a benign reference set */

#define NETCAL_NEG_RANDOM 0 /* negative = random future window */
#define NETCAL_NEG_HARD 1   /* negative = hardest of 50 sampled candidates */

const char* netcal_last_error(void);
const char* netcal_version(void);

typedef struct netcal_trace netcal_trace;
typedef struct netcal_rules netcal_rules;
typedef struct netcal_sysmap netcal_sysmap;
typedef struct netcal_tokens netcal_tokens;
typedef struct netcal_vocab netcal_vocab;
typedef struct netcal_embeddings netcal_embeddings;
typedef struct netcal_triplets netcal_triplets;
typedef struct netcal_encoder netcal_encoder;
typedef struct netcal_scorer netcal_scorer;
typedef struct netcal_stream netcal_stream;

/* ---- traces ---------------------------------------------------------- */

/* strict=0 skips malformed lines and counts them into *malformed_out. */
int netcal_trace_load(const char* path, int kind, int strict, netcal_trace** out,
                      size_t* malformed_out);
int netcal_trace_save(const netcal_trace* trace, const char* path);
int netcal_trace_filter_pids(const netcal_trace* trace, const uint32_t* pids, size_t count,
                             netcal_trace** out);
size_t netcal_trace_len(const netcal_trace* trace);
int netcal_trace_kind(const netcal_trace* trace);
void netcal_trace_free(netcal_trace* trace);

/* ---- abstraction rules and syscall category table -------------------- */

int netcal_rules_default(netcal_rules** out);
int netcal_rules_load(const char* path, netcal_rules** out);
void netcal_rules_free(netcal_rules* rules);

int netcal_sysmap_empty(netcal_sysmap** out);
int netcal_sysmap_load(const char* path, netcal_sysmap** out);
void netcal_sysmap_free(netcal_sysmap* map);

/* ---- token streams ---------------------------------------------------- */

int netcal_tokenize(const netcal_trace* trace, const netcal_rules* rules,
                    const netcal_sysmap* sysmap, netcal_tokens** out);
int netcal_tokens_load(const char* path, netcal_tokens** out);
int netcal_tokens_save(const netcal_tokens* tokens, const char* path);
/* Appends src to dst, e.g. to build one vocabulary across several captures. */
int netcal_tokens_concat(netcal_tokens* dst, const netcal_tokens* src);
size_t netcal_tokens_len(const netcal_tokens* tokens);
const char* netcal_tokens_get(const netcal_tokens* tokens, size_t index);
void netcal_tokens_free(netcal_tokens* tokens);

/* ---- vocabulary -------------------------------------------------------- */

int netcal_vocab_build(const netcal_tokens* tokens, netcal_vocab** out);
int netcal_vocab_load(const char* path, netcal_vocab** out);
int netcal_vocab_save(const netcal_vocab* vocab, const char* path);
int netcal_vocab_size(const netcal_vocab* vocab);
/* Total lookup: unseen text resolves to the reserved UNK id (== size). */
int netcal_vocab_id(const netcal_vocab* vocab, const char* text);
void netcal_vocab_free(netcal_vocab* vocab);

/* ---- token embeddings -------------------------------------------------- */

typedef struct {
  int window_radius;       /* default 5 */
  int negatives;           /* default 5 */
  int epochs;              /* default 5 */
  double learning_rate;    /* default 0.025 */
  uint64_t seed;
} netcal_skipgram_config;

int netcal_embeddings_train(const netcal_tokens* tokens, const netcal_vocab* vocab,
                            const netcal_skipgram_config* cfg, int dim, netcal_embeddings** out);
int netcal_embeddings_fixed_random(const netcal_vocab* vocab, int dim, uint64_t seed,
                                   netcal_embeddings** out);
int netcal_embeddings_save(const netcal_embeddings* table, const netcal_vocab* vocab,
                           const char* path);
/* expected_vocab may be NULL to skip the consistency check. */
int netcal_embeddings_load(const char* path, const netcal_vocab* expected_vocab,
                           netcal_embeddings** out);
int netcal_embeddings_dim(const netcal_embeddings* table);
void netcal_embeddings_free(netcal_embeddings* table);

/* ---- triplet construction ---------------------------------------------- */

typedef struct {
  double mutation_rate; /* fraction of negative tokens replaced */
  int strategy;         /* NETCAL_NEG_RANDOM or NETCAL_NEG_HARD */
  int candidates;       /* hard mining pool, default 50 */
  uint64_t seed;
} netcal_augment_config;

/* Hard mining ranks candidates with the supplied encoder over the supplied
 * embeddings; both may be NULL for the random strategy. */
int netcal_triplets_make(const netcal_tokens* tokens, const netcal_vocab* vocab,
                         size_t window_length, const netcal_augment_config* cfg,
                         const netcal_embeddings* embeddings, const netcal_encoder* encoder,
                         netcal_triplets** out);
int netcal_triplets_save(const netcal_triplets* triplets, const char* path);
int netcal_triplets_load(const char* path, const netcal_tokens* tokens, const netcal_vocab* vocab,
                         size_t window_length, netcal_triplets** out);
size_t netcal_triplets_len(const netcal_triplets* triplets);
void netcal_triplets_free(netcal_triplets* triplets);

/* ---- transformer encoder ------------------------------------------------ */

typedef struct {
  int input_dim;     /* must match the embedding dim */
  int model_dim;
  int layers;
  int heads;
  int ff_dim;        /* 0 means 4 * model_dim */
  int max_positions; /* >= window length */
  double dropout;
  uint64_t seed;
} netcal_encoder_config;

typedef struct {
  double margin;        /* default 0.1 */
  int batch_size;       /* default 32 */
  double learning_rate; /* reference value 1e-6 */
  double weight_decay;  /* default 0.1 */
  int epochs;
  uint64_t seed;
} netcal_train_config;

int netcal_encoder_new(const netcal_encoder_config* cfg, netcal_encoder** out);
/* Reports the mean of the first and last five batch losses when the output
 * pointers are non-NULL. */
int netcal_encoder_train(netcal_encoder* encoder, const netcal_triplets* triplets,
                         const netcal_embeddings* embeddings, const netcal_train_config* cfg,
                         double* initial_loss_out, double* final_loss_out);
int netcal_encoder_save(const netcal_encoder* encoder, const char* path);
int netcal_encoder_load(const char* path, netcal_encoder** out);
int netcal_encoder_dim(const netcal_encoder* encoder);
void netcal_encoder_free(netcal_encoder* encoder);

/* Encodes every complete window of the token stream. *rows_out receives a
 * row-major (n x dim) buffer owned by the caller; free with
 * netcal_buffer_free. */
int netcal_embed_windows(const netcal_tokens* tokens, const netcal_vocab* vocab,
                         const netcal_embeddings* embeddings, const netcal_encoder* encoder,
                         size_t window_length, double** rows_out, size_t* n_out, size_t* dim_out);
void netcal_buffer_free(double* buffer);

/* ---- isolation-forest scorer -------------------------------------------- */

typedef struct {
  double contamination; /* in (0, 0.5) */
  int mode;             /* NETCAL_MODE_RAW or NETCAL_MODE_PAIRCOS */
  int reference_count;  /* pairwise-cosine reference set size, default 64 */
  int trees;            /* default 100 */
  int subsample;        /* default 256 */
  uint64_t seed;
} netcal_scoring_config;

int netcal_scorer_fit(const double* rows, size_t n, size_t dim, const netcal_scoring_config* cfg,
                      netcal_scorer** out);
/* scores_out and flags_out must hold n entries; either may be NULL. */
int netcal_scorer_score(const netcal_scorer* scorer, const double* rows, size_t n, size_t dim,
                        double* scores_out, int* flags_out);
double netcal_scorer_threshold(const netcal_scorer* scorer);
double netcal_scorer_contamination(const netcal_scorer* scorer);
int netcal_scorer_save(const netcal_scorer* scorer, const char* path);
int netcal_scorer_load(const char* path, netcal_scorer** out);
void netcal_scorer_free(netcal_scorer* scorer);

/* ---- model bundles and online detection --------------------------------- */

/* Collects previously saved artifacts into a model directory that
 * netcal_stream_open and netcal_calibrate_alpha consume. rules_path and
 * sysmap_path may be NULL. */
int netcal_bundle_assemble(const char* dir, int kind, size_t window_length,
                           const char* rules_path, const char* sysmap_path,
                           const char* vocab_path, const char* embeddings_path,
                           const char* encoder_path, const char* scorer_path);

typedef struct {
  size_t window_index;
  double ts;
  double smoothed;
  double raw;
} netcal_alert;

/* threshold_override: pass NaN to use the scorer's fit-time threshold. */
int netcal_stream_open(const char* model_dir, double alpha, double threshold_override,
                       netcal_stream** out);
/* Feeds one trace-format line. *fired_out is set to 1 and *alert_out filled
 * when the completed window alerts. Malformed lines return
 * NETCAL_ERR_VALIDATION and leave the stream usable. */
int netcal_stream_push_line(netcal_stream* stream, const char* line, netcal_alert* alert_out,
                            int* fired_out);
size_t netcal_stream_windows_seen(const netcal_stream* stream);
size_t netcal_stream_alert_count(const netcal_stream* stream);
void netcal_stream_free(netcal_stream* stream);

/* Runs benign and anomalous calibration traces through the bundled pipeline,
 * grid-searches the smoothing weight and derives the matching threshold. */
int netcal_calibrate_alpha(const char* model_dir, const char* benign_trace_path,
                           const char* anomaly_trace_path, double contamination,
                           double* alpha_out, double* threshold_out);

/* ---- synthetic scenarios and the experiment runner ----------------------- */

/* seed_override 0 keeps the seed from the scenario file. */
int netcal_simulate(const char* scenario_path, int kind, uint64_t seed_override,
                    const char* out_trace_path);

/* Runs the full evaluation protocol from a JSON config. When report_text_out
 * is non-NULL it receives the rendered table; free with netcal_string_free. */
int netcal_experiment_run(const char* config_path, char** report_text_out);
void netcal_string_free(char* text);

#ifdef __cplusplus
}
#endif

#endif /* NETCAL_H */
