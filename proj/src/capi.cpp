#include "netcal/netcal.h"

#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <set>

#include "netcal/pipeline.hpp"

namespace {

thread_local std::string g_last_error;

void set_error(const std::string& msg) { g_last_error = msg; }

template <typename F>
int guarded(F&& fn) {
  try {
    fn();
    return NETCAL_OK;
  } catch (const netcal::Error& e) {
    set_error(e.what());
    return e.kind() == netcal::Error::Kind::Validation ? NETCAL_ERR_VALIDATION : NETCAL_ERR_RUNTIME;
  } catch (const std::exception& e) {
    set_error(e.what());
    return NETCAL_ERR_RUNTIME;
  }
}

netcal::TraceKind kind_of(int kind) {
  if (kind != NETCAL_KIND_PACKET && kind != NETCAL_KIND_SYSCALL) {
    netcal::fail_validation("unknown trace kind " + std::to_string(kind));
  }
  return kind == NETCAL_KIND_PACKET ? netcal::TraceKind::Packet : netcal::TraceKind::Syscall;
}

void require(const void* handle, const char* what) {
  if (!handle) netcal::fail_validation(std::string("null ") + what + " handle");
}

}  // namespace

struct netcal_trace {
  netcal::Trace value;
};
struct netcal_rules {
  netcal::AbstractionRules value;
};
struct netcal_sysmap {
  netcal::SyscallTable value;
};
struct netcal_tokens {
  std::vector<std::string> value;
};
struct netcal_vocab {
  netcal::Vocabulary value;
};
struct netcal_embeddings {
  netcal::EmbeddingTable value;
};
struct netcal_triplets {
  std::vector<netcal::Triplet> value;
};
struct netcal_encoder {
  netcal::EncoderModel value;
};
struct netcal_scorer {
  netcal::ScorerModel value;
};
struct netcal_stream {
  netcal::DetectorBundle bundle;
  netcal::OnlineDetector detector;
  std::size_t alerts = 0;

  netcal_stream(netcal::DetectorBundle b, const netcal::OnlineConfig& cfg)
      : bundle(std::move(b)), detector(bundle, cfg) {}
};

extern "C" {

const char* netcal_last_error(void) { return g_last_error.c_str(); }

const char* netcal_version(void) { return "netcal 1.0.0"; }

/* ---- traces ---------------------------------------------------------- */

int netcal_trace_load(const char* path, int kind, int strict, netcal_trace** out,
                      size_t* malformed_out) {
  return guarded([&] {
    require(path, "path");
    require(out, "output");
    auto result = netcal::load_trace(path, kind_of(kind), strict != 0);
    if (malformed_out) *malformed_out = result.malformed_lines;
    *out = new netcal_trace{std::move(result.trace)};
  });
}

int netcal_trace_save(const netcal_trace* trace, const char* path) {
  return guarded([&] {
    require(trace, "trace");
    require(path, "path");
    netcal::write_trace(path, trace->value);
  });
}

int netcal_trace_filter_pids(const netcal_trace* trace, const uint32_t* pids, size_t count,
                             netcal_trace** out) {
  return guarded([&] {
    require(trace, "trace");
    require(out, "output");
    std::set<std::uint32_t> set;
    for (size_t i = 0; i < count; ++i) set.insert(pids[i]);
    *out = new netcal_trace{netcal::filter_by_pids(trace->value, set)};
  });
}

size_t netcal_trace_len(const netcal_trace* trace) { return trace ? trace->value.size() : 0; }

int netcal_trace_kind(const netcal_trace* trace) {
  return trace && trace->value.kind == netcal::TraceKind::Syscall ? NETCAL_KIND_SYSCALL
                                                                  : NETCAL_KIND_PACKET;
}

void netcal_trace_free(netcal_trace* trace) { delete trace; }

/* ---- rules and sysmap ------------------------------------------------- */

int netcal_rules_default(netcal_rules** out) {
  return guarded([&] {
    require(out, "output");
    *out = new netcal_rules{netcal::AbstractionRules::defaults()};
  });
}

int netcal_rules_load(const char* path, netcal_rules** out) {
  return guarded([&] {
    require(path, "path");
    require(out, "output");
    *out = new netcal_rules{netcal::load_rules(path)};
  });
}

void netcal_rules_free(netcal_rules* rules) { delete rules; }

int netcal_sysmap_empty(netcal_sysmap** out) {
  return guarded([&] {
    require(out, "output");
    *out = new netcal_sysmap{};
  });
}

int netcal_sysmap_load(const char* path, netcal_sysmap** out) {
  return guarded([&] {
    require(path, "path");
    require(out, "output");
    *out = new netcal_sysmap{netcal::load_syscall_table(path)};
  });
}

void netcal_sysmap_free(netcal_sysmap* map) { delete map; }

/* ---- tokens ------------------------------------------------------------ */

int netcal_tokenize(const netcal_trace* trace, const netcal_rules* rules,
                    const netcal_sysmap* sysmap, netcal_tokens** out) {
  return guarded([&] {
    require(trace, "trace");
    require(out, "output");
    netcal::AbstractionRules default_rules;
    const netcal::AbstractionRules& r =
        rules ? rules->value : (default_rules = netcal::AbstractionRules::defaults());
    netcal::SyscallTable empty;
    const netcal::SyscallTable& t = sysmap ? sysmap->value : empty;
    *out = new netcal_tokens{netcal::tokenize_trace(trace->value, r, t)};
  });
}

int netcal_tokens_load(const char* path, netcal_tokens** out) {
  return guarded([&] {
    require(path, "path");
    require(out, "output");
    std::ifstream in(path);
    if (!in) netcal::fail_runtime(std::string("cannot open token file '") + path + "'");
    auto tokens = std::make_unique<netcal_tokens>();
    std::string line;
    while (std::getline(in, line)) {
      if (!line.empty()) tokens->value.push_back(line);
    }
    *out = tokens.release();
  });
}

int netcal_tokens_save(const netcal_tokens* tokens, const char* path) {
  return guarded([&] {
    require(tokens, "tokens");
    require(path, "path");
    std::ofstream out(path);
    if (!out) netcal::fail_runtime(std::string("cannot open '") + path + "' for writing");
    for (const auto& t : tokens->value) out << t << '\n';
    if (!out) netcal::fail_runtime("I/O error writing token file");
  });
}

int netcal_tokens_concat(netcal_tokens* dst, const netcal_tokens* src) {
  return guarded([&] {
    require(dst, "tokens");
    require(src, "tokens");
    dst->value.insert(dst->value.end(), src->value.begin(), src->value.end());
  });
}

size_t netcal_tokens_len(const netcal_tokens* tokens) { return tokens ? tokens->value.size() : 0; }

const char* netcal_tokens_get(const netcal_tokens* tokens, size_t index) {
  if (!tokens || index >= tokens->value.size()) return nullptr;
  return tokens->value[index].c_str();
}

void netcal_tokens_free(netcal_tokens* tokens) { delete tokens; }

/* ---- vocabulary --------------------------------------------------------- */

int netcal_vocab_build(const netcal_tokens* tokens, netcal_vocab** out) {
  return guarded([&] {
    require(tokens, "tokens");
    require(out, "output");
    *out = new netcal_vocab{netcal::Vocabulary::build(tokens->value)};
  });
}

int netcal_vocab_load(const char* path, netcal_vocab** out) {
  return guarded([&] {
    require(path, "path");
    require(out, "output");
    *out = new netcal_vocab{netcal::Vocabulary::load(path)};
  });
}

int netcal_vocab_save(const netcal_vocab* vocab, const char* path) {
  return guarded([&] {
    require(vocab, "vocabulary");
    require(path, "path");
    vocab->value.save(path);
  });
}

int netcal_vocab_size(const netcal_vocab* vocab) { return vocab ? vocab->value.size() : 0; }

int netcal_vocab_id(const netcal_vocab* vocab, const char* text) {
  if (!vocab || !text) return -1;
  return vocab->value.id_of(text);
}

void netcal_vocab_free(netcal_vocab* vocab) { delete vocab; }

/* ---- embeddings ---------------------------------------------------------- */

namespace {

netcal::SkipGramConfig convert(const netcal_skipgram_config* cfg) {
  netcal::SkipGramConfig out;
  if (cfg) {
    out.window_radius = cfg->window_radius;
    out.negatives_per_positive = cfg->negatives;
    out.epochs = cfg->epochs;
    out.learning_rate = cfg->learning_rate;
    out.seed = cfg->seed;
  }
  return out;
}

std::vector<std::int32_t> ids_for(const netcal_tokens* tokens, const netcal_vocab* vocab) {
  return netcal::ids_of(tokens->value, vocab->value);
}

}  // namespace

int netcal_embeddings_train(const netcal_tokens* tokens, const netcal_vocab* vocab,
                            const netcal_skipgram_config* cfg, int dim, netcal_embeddings** out) {
  return guarded([&] {
    require(tokens, "tokens");
    require(vocab, "vocabulary");
    require(out, "output");
    auto ids = ids_for(tokens, vocab);
    for (auto id : ids) {
      if (id >= vocab->value.size()) {
        netcal::fail_validation("token stream contains text outside the vocabulary");
      }
    }
    auto result = netcal::train_embeddings(ids, vocab->value, convert(cfg), dim);
    *out = new netcal_embeddings{std::move(result.table)};
  });
}

int netcal_embeddings_fixed_random(const netcal_vocab* vocab, int dim, uint64_t seed,
                                   netcal_embeddings** out) {
  return guarded([&] {
    require(vocab, "vocabulary");
    require(out, "output");
    *out = new netcal_embeddings{netcal::fixed_random_embeddings(vocab->value, dim, seed)};
  });
}

int netcal_embeddings_save(const netcal_embeddings* table, const netcal_vocab* vocab,
                           const char* path) {
  return guarded([&] {
    require(table, "embeddings");
    require(vocab, "vocabulary");
    require(path, "path");
    netcal::save_embeddings(path, table->value, vocab->value);
  });
}

int netcal_embeddings_load(const char* path, const netcal_vocab* expected_vocab,
                           netcal_embeddings** out) {
  return guarded([&] {
    require(path, "path");
    require(out, "output");
    *out = new netcal_embeddings{
        netcal::load_embeddings(path, expected_vocab ? &expected_vocab->value : nullptr)};
  });
}

int netcal_embeddings_dim(const netcal_embeddings* table) { return table ? table->value.dim : 0; }

void netcal_embeddings_free(netcal_embeddings* table) { delete table; }

/* ---- triplets -------------------------------------------------------------- */

int netcal_triplets_make(const netcal_tokens* tokens, const netcal_vocab* vocab,
                         size_t window_length, const netcal_augment_config* cfg,
                         const netcal_embeddings* embeddings, const netcal_encoder* encoder,
                         netcal_triplets** out) {
  return guarded([&] {
    require(tokens, "tokens");
    require(vocab, "vocabulary");
    require(out, "output");
    netcal::AugmentationConfig aug;
    if (cfg) {
      aug.mutation_rate = cfg->mutation_rate;
      aug.strategy = cfg->strategy == NETCAL_NEG_HARD ? netcal::NegativeStrategy::HardMined
                                                      : netcal::NegativeStrategy::RandomFuture;
      aug.candidates = cfg->candidates;
      aug.seed = cfg->seed;
    }
    auto ids = ids_for(tokens, vocab);
    auto windows = netcal::segment(ids, window_length);

    netcal::EncodeFn encode;
    const netcal::EncodeFn* encode_ptr = nullptr;
    if (aug.strategy == netcal::NegativeStrategy::HardMined) {
      require(embeddings, "embeddings");
      require(encoder, "encoder");
      encode = [embeddings, encoder](const netcal::Window& w) {
        return encoder->value.encode_ids(w.ids, embeddings->value);
      };
      encode_ptr = &encode;
    }
    *out = new netcal_triplets{netcal::make_triplets(windows, aug, vocab->value, encode_ptr)};
  });
}

int netcal_triplets_save(const netcal_triplets* triplets, const char* path) {
  return guarded([&] {
    require(triplets, "triplets");
    require(path, "path");
    netcal::save_triplets(path, triplets->value);
  });
}

int netcal_triplets_load(const char* path, const netcal_tokens* tokens, const netcal_vocab* vocab,
                         size_t window_length, netcal_triplets** out) {
  return guarded([&] {
    require(path, "path");
    require(tokens, "tokens");
    require(vocab, "vocabulary");
    require(out, "output");
    auto ids = ids_for(tokens, vocab);
    *out = new netcal_triplets{netcal::load_triplets(path, ids, window_length)};
  });
}

size_t netcal_triplets_len(const netcal_triplets* triplets) {
  return triplets ? triplets->value.size() : 0;
}

void netcal_triplets_free(netcal_triplets* triplets) { delete triplets; }

/* ---- encoder ---------------------------------------------------------------- */

int netcal_encoder_new(const netcal_encoder_config* cfg, netcal_encoder** out) {
  return guarded([&] {
    require(cfg, "config");
    require(out, "output");
    netcal::EncoderConfig c;
    c.input_dim = cfg->input_dim;
    c.model_dim = cfg->model_dim;
    c.layers = cfg->layers;
    c.heads = cfg->heads;
    c.ff_dim = cfg->ff_dim;
    c.max_positions = cfg->max_positions;
    c.dropout = cfg->dropout;
    c.seed = cfg->seed;
    *out = new netcal_encoder{netcal::EncoderModel(c)};
  });
}

int netcal_encoder_train(netcal_encoder* encoder, const netcal_triplets* triplets,
                         const netcal_embeddings* embeddings, const netcal_train_config* cfg,
                         double* initial_loss_out, double* final_loss_out) {
  return guarded([&] {
    require(encoder, "encoder");
    require(triplets, "triplets");
    require(embeddings, "embeddings");
    require(cfg, "config");
    netcal::TrainConfig tc;
    tc.margin = cfg->margin;
    tc.batch_size = cfg->batch_size;
    tc.learning_rate = cfg->learning_rate;
    tc.weight_decay = cfg->weight_decay;
    tc.epochs = cfg->epochs;
    tc.seed = cfg->seed;
    auto losses = encoder->value.train(triplets->value, embeddings->value, tc);
    auto mean_of = [&](std::size_t begin, std::size_t end) {
      double sum = 0.0;
      for (std::size_t i = begin; i < end; ++i) sum += losses[i];
      return sum / static_cast<double>(end - begin);
    };
    std::size_t k = std::min<std::size_t>(5, losses.size());
    if (initial_loss_out) *initial_loss_out = mean_of(0, k);
    if (final_loss_out) *final_loss_out = mean_of(losses.size() - k, losses.size());
  });
}

int netcal_encoder_save(const netcal_encoder* encoder, const char* path) {
  return guarded([&] {
    require(encoder, "encoder");
    require(path, "path");
    encoder->value.save(path);
  });
}

int netcal_encoder_load(const char* path, netcal_encoder** out) {
  return guarded([&] {
    require(path, "path");
    require(out, "output");
    *out = new netcal_encoder{netcal::EncoderModel::load(path)};
  });
}

int netcal_encoder_dim(const netcal_encoder* encoder) {
  return encoder ? encoder->value.config().model_dim : 0;
}

void netcal_encoder_free(netcal_encoder* encoder) { delete encoder; }

int netcal_embed_windows(const netcal_tokens* tokens, const netcal_vocab* vocab,
                         const netcal_embeddings* embeddings, const netcal_encoder* encoder,
                         size_t window_length, double** rows_out, size_t* n_out, size_t* dim_out) {
  return guarded([&] {
    require(tokens, "tokens");
    require(vocab, "vocabulary");
    require(embeddings, "embeddings");
    require(encoder, "encoder");
    require(rows_out, "output");
    require(n_out, "output size");
    require(dim_out, "output dim");
    auto ids = ids_for(tokens, vocab);
    Eigen::MatrixXd embs =
        netcal::embed_windows(ids, window_length, embeddings->value, encoder->value);
    auto n = static_cast<size_t>(embs.rows());
    auto dim = static_cast<size_t>(embs.cols());
    auto* buffer = new double[n * dim];
    for (size_t r = 0; r < n; ++r) {
      for (size_t c = 0; c < dim; ++c) {
        buffer[r * dim + c] = embs(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c));
      }
    }
    *rows_out = buffer;
    *n_out = n;
    *dim_out = dim;
  });
}

void netcal_buffer_free(double* buffer) { delete[] buffer; }

/* ---- scorer ------------------------------------------------------------------ */

int netcal_scorer_fit(const double* rows, size_t n, size_t dim, const netcal_scoring_config* cfg,
                      netcal_scorer** out) {
  return guarded([&] {
    require(rows, "feature rows");
    require(cfg, "config");
    require(out, "output");
    Eigen::MatrixXd m(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(dim));
    for (size_t r = 0; r < n; ++r) {
      for (size_t c = 0; c < dim; ++c) {
        m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = rows[r * dim + c];
      }
    }
    netcal::ScoringConfig sc;
    sc.contamination = cfg->contamination;
    sc.mode = cfg->mode == NETCAL_MODE_PAIRCOS ? netcal::FeatureMode::PairwiseCosine
                                               : netcal::FeatureMode::RawEmbedding;
    sc.reference_count = cfg->reference_count;
    sc.forest.tree_count = cfg->trees;
    sc.forest.subsample = cfg->subsample;
    sc.seed = cfg->seed;
    *out = new netcal_scorer{netcal::ScorerModel::fit(m, sc)};
  });
}

int netcal_scorer_score(const netcal_scorer* scorer, const double* rows, size_t n, size_t dim,
                        double* scores_out, int* flags_out) {
  return guarded([&] {
    require(scorer, "scorer");
    require(rows, "feature rows");
    for (size_t r = 0; r < n; ++r) {
      Eigen::VectorXd v(static_cast<Eigen::Index>(dim));
      for (size_t c = 0; c < dim; ++c) v(static_cast<Eigen::Index>(c)) = rows[r * dim + c];
      double s = scorer->value.anomaly_score(v);
      if (scores_out) scores_out[r] = s;
      if (flags_out) flags_out[r] = s > scorer->value.threshold() ? 1 : 0;
    }
  });
}

double netcal_scorer_threshold(const netcal_scorer* scorer) {
  return scorer ? scorer->value.threshold() : 0.0;
}

double netcal_scorer_contamination(const netcal_scorer* scorer) {
  return scorer ? scorer->value.contamination() : 0.0;
}

int netcal_scorer_save(const netcal_scorer* scorer, const char* path) {
  return guarded([&] {
    require(scorer, "scorer");
    require(path, "path");
    scorer->value.save(path);
  });
}

int netcal_scorer_load(const char* path, netcal_scorer** out) {
  return guarded([&] {
    require(path, "path");
    require(out, "output");
    *out = new netcal_scorer{netcal::ScorerModel::load(path)};
  });
}

void netcal_scorer_free(netcal_scorer* scorer) { delete scorer; }

/* ---- bundles and streaming ------------------------------------------------------ */

int netcal_bundle_assemble(const char* dir, int kind, size_t window_length,
                           const char* rules_path, const char* sysmap_path,
                           const char* vocab_path, const char* embeddings_path,
                           const char* encoder_path, const char* scorer_path) {
  return guarded([&] {
    require(dir, "directory");
    require(vocab_path, "vocabulary path");
    require(embeddings_path, "embeddings path");
    require(encoder_path, "encoder path");
    require(scorer_path, "scorer path");
    netcal::Vocabulary vocab = netcal::Vocabulary::load(vocab_path);
    netcal::DetectorBundle bundle{
        .kind = kind_of(kind),
        .window_length = window_length,
        .rules = rules_path ? netcal::load_rules(rules_path) : netcal::AbstractionRules::defaults(),
        .syscall_table = sysmap_path ? netcal::load_syscall_table(sysmap_path) : netcal::SyscallTable{},
        .vocab = vocab,
        .embeddings = netcal::load_embeddings(embeddings_path, &vocab),
        .encoder = netcal::EncoderModel::load(encoder_path),
        .scorer = netcal::ScorerModel::load(scorer_path),
    };
    netcal::save_bundle(dir, bundle);
  });
}

int netcal_stream_open(const char* model_dir, double alpha, double threshold_override,
                       netcal_stream** out) {
  return guarded([&] {
    require(model_dir, "model directory");
    require(out, "output");
    netcal::DetectorBundle bundle = netcal::load_bundle(model_dir);
    netcal::OnlineConfig cfg;
    cfg.alpha = alpha;
    cfg.threshold =
        std::isnan(threshold_override) ? bundle.scorer.threshold() : threshold_override;
    *out = new netcal_stream(std::move(bundle), cfg);
  });
}

int netcal_stream_push_line(netcal_stream* stream, const char* line, netcal_alert* alert_out,
                            int* fired_out) {
  if (fired_out) *fired_out = 0;
  return guarded([&] {
    require(stream, "stream");
    require(line, "line");
    std::optional<netcal::Alert> alert;
    if (stream->bundle.kind == netcal::TraceKind::Packet) {
      alert = stream->detector.push_record(netcal::parse_packet_line(line, 0));
    } else {
      alert = stream->detector.push_record(netcal::parse_syscall_line(line, 0));
    }
    if (alert) {
      ++stream->alerts;
      if (fired_out) *fired_out = 1;
      if (alert_out) {
        alert_out->window_index = alert->window_index;
        alert_out->ts = alert->ts;
        alert_out->smoothed = alert->smoothed;
        alert_out->raw = alert->raw;
      }
    }
  });
}

size_t netcal_stream_windows_seen(const netcal_stream* stream) {
  return stream ? stream->detector.windows_seen() : 0;
}

size_t netcal_stream_alert_count(const netcal_stream* stream) { return stream ? stream->alerts : 0; }

void netcal_stream_free(netcal_stream* stream) { delete stream; }

int netcal_calibrate_alpha(const char* model_dir, const char* benign_trace_path,
                           const char* anomaly_trace_path, double contamination,
                           double* alpha_out, double* threshold_out) {
  return guarded([&] {
    require(model_dir, "model directory");
    require(benign_trace_path, "benign trace path");
    require(anomaly_trace_path, "anomaly trace path");
    require(alpha_out, "alpha output");
    netcal::DetectorBundle bundle = netcal::load_bundle(model_dir);

    auto raw_scores_of = [&](const char* path) {
      netcal::Trace trace = netcal::load_trace(path, bundle.kind).trace;
      netcal::OnlineConfig probe{1.0, std::numeric_limits<double>::infinity()};
      return netcal::stream_detect(trace, bundle, probe).raw_scores;
    };
    auto benign = raw_scores_of(benign_trace_path);
    auto anomaly = raw_scores_of(anomaly_trace_path);

    auto grid = netcal::default_alpha_grid();
    double alpha = netcal::calibrate_alpha({benign}, {anomaly}, grid, contamination);
    *alpha_out = alpha;
    if (threshold_out) {
      auto smoothed = netcal::smooth_scores(benign, alpha);
      *threshold_out = netcal::quantile_threshold(smoothed, contamination);
    }
  });
}

/* ---- synth and experiment ---------------------------------------------------------- */

int netcal_simulate(const char* scenario_path, int kind, uint64_t seed_override,
                    const char* out_trace_path) {
  return guarded([&] {
    require(scenario_path, "scenario path");
    require(out_trace_path, "output path");
    netcal::Scenario scenario = netcal::load_scenario(scenario_path);
    if (seed_override != 0) scenario.seed = seed_override;
    netcal::Trace trace = netcal::generate(scenario, kind_of(kind));
    netcal::write_trace(out_trace_path, trace);
  });
}

int netcal_experiment_run(const char* config_path, char** report_text_out) {
  return guarded([&] {
    require(config_path, "config path");
    auto cfg = netcal::load_experiment_config(config_path);
    auto result = netcal::run_experiment(cfg);
    if (report_text_out) {
      std::string text = result.table.render_text();
      auto* buffer = new char[text.size() + 1];
      std::memcpy(buffer, text.c_str(), text.size() + 1);
      *report_text_out = buffer;
    }
  });
}

void netcal_string_free(char* text) { delete[] text; }

}  // extern "C"
