// netcal command line: drives the detection pipeline through the public C API.
//
// Exit codes: 0 success, 1 validation error, 2 runtime error. The stream
// subcommand additionally exits 3 when it completed cleanly but alerts fired.
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "netcal/netcal.h"

namespace {

struct CliError {
  int code;
  std::string message;
};

[[noreturn]] void fail(int code, const std::string& message) { throw CliError{code, message}; }

void check(int rc) {
  if (rc != NETCAL_OK) fail(rc, netcal_last_error());
}

int parse_kind(const std::string& kind) {
  if (kind == "packet") return NETCAL_KIND_PACKET;
  if (kind == "syscall") return NETCAL_KIND_SYSCALL;
  fail(NETCAL_ERR_VALIDATION, "kind must be 'packet' or 'syscall'");
}

// RAII wrappers for the opaque handles.
template <typename T, void (*Free)(T*)>
struct Handle {
  T* ptr = nullptr;
  Handle() = default;
  ~Handle() { Free(ptr); }
  Handle(const Handle&) = delete;
  Handle& operator=(const Handle&) = delete;
  T** out() { return &ptr; }
  T* get() const { return ptr; }
};

using TraceHandle = Handle<netcal_trace, netcal_trace_free>;
using RulesHandle = Handle<netcal_rules, netcal_rules_free>;
using SysmapHandle = Handle<netcal_sysmap, netcal_sysmap_free>;
using TokensHandle = Handle<netcal_tokens, netcal_tokens_free>;
using VocabHandle = Handle<netcal_vocab, netcal_vocab_free>;
using EmbeddingsHandle = Handle<netcal_embeddings, netcal_embeddings_free>;
using TripletsHandle = Handle<netcal_triplets, netcal_triplets_free>;
using EncoderHandle = Handle<netcal_encoder, netcal_encoder_free>;
using ScorerHandle = Handle<netcal_scorer, netcal_scorer_free>;
using StreamHandle = Handle<netcal_stream, netcal_stream_free>;

struct EmbedArtifacts {
  TokensHandle tokens;
  VocabHandle vocab;
  EmbeddingsHandle embeddings;
  EncoderHandle encoder;
};

void load_tokens_vocab(const std::string& tokens_path, const std::string& vocab_path,
                       EmbedArtifacts& art) {
  check(netcal_tokens_load(tokens_path.c_str(), art.tokens.out()));
  check(netcal_vocab_load(vocab_path.c_str(), art.vocab.out()));
}

nlohmann::json read_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(NETCAL_ERR_RUNTIME, "cannot open config file '" + path + "'");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    fail(NETCAL_ERR_VALIDATION, "config file '" + path + "': " + e.what());
  }
  return j;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"behavioral anomaly detection for router event streams"};
  app.require_subcommand(1);
  app.fallthrough();  // lets --seed/--config appear after the subcommand name

  std::uint64_t global_seed = 1;
  std::string global_config;
  app.add_option("--seed", global_seed, "default seed for all randomized stages");
  app.add_option("--config", global_config, "config file for subcommands that accept one");

  // ---- ingest ----
  auto* ingest = app.add_subcommand("ingest", "load, validate and optionally PID-filter a trace");
  std::string in_path, out_path, kind_str = "packet", pids_str;
  bool lenient = false;
  ingest->add_option("--kind", kind_str, "packet or syscall")->required();
  ingest->add_option("--in", in_path, "input trace file")->required();
  ingest->add_option("--out", out_path, "output trace file")->required();
  ingest->add_option("--pids", pids_str, "comma-separated PID allowlist");
  ingest->add_flag("--lenient", lenient, "skip malformed lines instead of failing");

  // ---- tokenize ----
  auto* tokenize = app.add_subcommand("tokenize", "abstract a trace into one token per event");
  std::string tok_rules, tok_sysmap;
  tokenize->add_option("--kind", kind_str, "packet or syscall")->required();
  tokenize->add_option("--in", in_path, "input trace file")->required();
  tokenize->add_option("--out", out_path, "output token file, one token per line")->required();
  tokenize->add_option("--rules", tok_rules, "abstraction rules JSON (defaults built in)");
  tokenize->add_option("--syscalls", tok_sysmap, "syscall name<TAB>category table");

  // ---- build-vocab ----
  auto* build_vocab = app.add_subcommand("build-vocab", "collect distinct tokens in first-seen order");
  std::vector<std::string> vocab_inputs;
  build_vocab->add_option("--tokens", vocab_inputs, "token files, in order")->required();
  build_vocab->add_option("--out", out_path, "vocabulary file")->required();

  // ---- train-embeddings ----
  auto* train_emb = app.add_subcommand("train-embeddings", "fit 64-d token embeddings");
  std::string emb_tokens, emb_vocab, ablation;
  int emb_dim = 64, emb_radius = 5, emb_negatives = 5, emb_epochs = 5;
  double emb_lr = 0.025;
  train_emb->add_option("--tokens", emb_tokens, "training token file")->required();
  train_emb->add_option("--vocab", emb_vocab, "vocabulary file")->required();
  train_emb->add_option("--out", out_path, "embedding file")->required();
  train_emb->add_option("--dim", emb_dim, "embedding dimension");
  train_emb->add_option("--ablation", ablation, "'fixed-random' replaces training with random vectors");
  train_emb->add_option("--radius", emb_radius, "context window radius");
  train_emb->add_option("--negatives", emb_negatives, "negative samples per positive");
  train_emb->add_option("--epochs", emb_epochs, "training epochs");
  train_emb->add_option("--lr", emb_lr, "learning rate");

  // ---- make-triplets ----
  auto* make_triplets = app.add_subcommand("make-triplets", "build contrastive training triplets");
  std::string tri_tokens, tri_vocab, tri_embeddings, tri_encoder, strategy = "random";
  std::size_t window_length = 100;
  double mutation = 0.1;
  int candidates = 50;
  make_triplets->add_option("--tokens", tri_tokens, "token file")->required();
  make_triplets->add_option("--vocab", tri_vocab, "vocabulary file")->required();
  make_triplets->add_option("--window", window_length, "window length (500 syscalls, 100 packets)");
  make_triplets->add_option("--mutation", mutation, "negative mutation rate in [0,1]");
  make_triplets->add_option("--strategy", strategy, "'random' or 'hard'");
  make_triplets->add_option("--candidates", candidates, "hard-mining candidate pool");
  make_triplets->add_option("--embeddings", tri_embeddings, "embedding file (hard mining)");
  make_triplets->add_option("--encoder", tri_encoder, "encoder model (hard mining)");
  make_triplets->add_option("--out", out_path, "triplet dump file")->required();

  // ---- train-encoder ----
  auto* train_encoder = app.add_subcommand("train-encoder", "contrastive transformer training");
  std::string enc_config, enc_triplets;
  train_encoder->add_option("--config", enc_config, "JSON with data paths and hyperparameters");
  train_encoder->add_option("--triplets", enc_triplets, "triplet dump file")->required();
  train_encoder->add_option("--out", out_path, "encoder model file")->required();

  // ---- fit-scorer ----
  auto* fit_scorer = app.add_subcommand("fit-scorer", "fit the isolation forest on benign windows");
  std::string sc_tokens, sc_vocab, sc_embeddings, sc_encoder, sc_mode = "raw", sc_bundle;
  std::string sc_rules, sc_sysmap;
  double contamination = 0.015;
  int sc_reference = 64, sc_trees = 100, sc_subsample = 256;
  fit_scorer->add_option("--tokens", sc_tokens, "benign token file")->required();
  fit_scorer->add_option("--vocab", sc_vocab, "vocabulary file")->required();
  fit_scorer->add_option("--embeddings", sc_embeddings, "embedding file")->required();
  fit_scorer->add_option("--encoder", sc_encoder, "encoder model file")->required();
  fit_scorer->add_option("--window", window_length, "window length");
  fit_scorer->add_option("--contamination", contamination, "expected anomaly fraction");
  fit_scorer->add_option("--mode", sc_mode, "'raw' or 'paircos'");
  fit_scorer->add_option("--reference-count", sc_reference, "pairwise-cosine reference set size");
  fit_scorer->add_option("--trees", sc_trees, "isolation trees");
  fit_scorer->add_option("--subsample", sc_subsample, "per-tree subsample");
  fit_scorer->add_option("--out", out_path, "scorer file")->required();
  fit_scorer->add_option("--bundle", sc_bundle, "also assemble a model directory here");
  fit_scorer->add_option("--kind", kind_str, "trace kind recorded in the bundle");
  fit_scorer->add_option("--rules", sc_rules, "rules JSON recorded in the bundle");
  fit_scorer->add_option("--syscalls", sc_sysmap, "syscall table recorded in the bundle");

  // ---- score ----
  auto* score = app.add_subcommand("score", "offline per-window scores and flags for a trace");
  std::string score_in, score_vocab, score_embeddings, score_encoder, score_scorer, score_rules,
      score_sysmap, score_out;
  score->add_option("--kind", kind_str, "packet or syscall")->required();
  score->add_option("--in", score_in, "trace file to score")->required();
  score->add_option("--vocab", score_vocab)->required();
  score->add_option("--embeddings", score_embeddings)->required();
  score->add_option("--encoder", score_encoder)->required();
  score->add_option("--scorer", score_scorer)->required();
  score->add_option("--window", window_length, "window length");
  score->add_option("--rules", score_rules, "abstraction rules JSON");
  score->add_option("--syscalls", score_sysmap, "syscall table");
  score->add_option("--out", score_out, "write the report here instead of stdout");

  // ---- stream ----
  auto* stream = app.add_subcommand("stream", "online detection over stdin event lines");
  std::string model_dir, calib_benign, calib_anomaly;
  double alpha = 1.0;
  bool calibrate = false;
  stream->add_option("--model-dir", model_dir, "bundle directory from fit-scorer --bundle")->required();
  stream->add_option("--alpha", alpha, "EMA smoothing weight in (0,1]");
  stream->add_flag("--calibrate", calibrate, "grid-search alpha on calibration traces");
  stream->add_option("--calib-benign", calib_benign, "benign calibration trace (with --calibrate)");
  stream->add_option("--calib-anomaly", calib_anomaly, "anomalous calibration trace (with --calibrate)");
  double stream_contamination = std::nan("");
  stream->add_option("--contamination", stream_contamination,
                     "recompute the threshold at this rate (with --calibrate)");

  // ---- simulate ----
  auto* simulate = app.add_subcommand("simulate", "generate a synthetic trace from a scenario");
  std::string scenario_path;
  std::uint64_t sim_seed = 0;
  simulate->add_option("--scenario", scenario_path, "scenario JSON")->required();
  simulate->add_option("--kind", kind_str, "packet or syscall")->required();
  simulate->add_option("--out", out_path, "output trace file")->required();
  simulate->add_option("--sim-seed", sim_seed, "override the scenario seed (0 keeps it)");

  // ---- experiment ----
  auto* experiment = app.add_subcommand("experiment", "train and evaluate the full protocol");
  std::string exp_config, exp_report;
  std::size_t max_events = 0;
  experiment->add_option("--config", exp_config, "experiment JSON config");
  experiment->add_option("--out-report", exp_report, "also write the rendered table here");
  experiment->add_option("--max-events", max_events, "truncate the training trace to this many events");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*ingest) {
      TraceHandle trace;
      size_t malformed = 0;
      check(netcal_trace_load(in_path.c_str(), parse_kind(kind_str), lenient ? 0 : 1, trace.out(),
                              &malformed));
      if (malformed > 0) {
        std::cerr << "warning: skipped " << malformed << " malformed lines\n";
      }
      if (!pids_str.empty()) {
        std::vector<uint32_t> pids;
        std::stringstream ss(pids_str);
        std::string part;
        while (std::getline(ss, part, ',')) {
          if (!part.empty()) pids.push_back(static_cast<uint32_t>(std::stoul(part)));
        }
        TraceHandle filtered;
        check(netcal_trace_filter_pids(trace.get(), pids.data(), pids.size(), filtered.out()));
        check(netcal_trace_save(filtered.get(), out_path.c_str()));
        std::cout << "kept " << netcal_trace_len(filtered.get()) << " of "
                  << netcal_trace_len(trace.get()) << " records\n";
      } else {
        check(netcal_trace_save(trace.get(), out_path.c_str()));
        std::cout << "wrote " << netcal_trace_len(trace.get()) << " records\n";
      }
    } else if (*tokenize) {
      TraceHandle trace;
      check(netcal_trace_load(in_path.c_str(), parse_kind(kind_str), 1, trace.out(), nullptr));
      RulesHandle rules;
      if (!tok_rules.empty()) check(netcal_rules_load(tok_rules.c_str(), rules.out()));
      SysmapHandle sysmap;
      if (!tok_sysmap.empty()) check(netcal_sysmap_load(tok_sysmap.c_str(), sysmap.out()));
      TokensHandle tokens;
      check(netcal_tokenize(trace.get(), rules.get(), sysmap.get(), tokens.out()));
      check(netcal_tokens_save(tokens.get(), out_path.c_str()));
      std::cout << "wrote " << netcal_tokens_len(tokens.get()) << " tokens\n";
    } else if (*build_vocab) {
      TokensHandle merged;
      for (const auto& path : vocab_inputs) {
        TokensHandle part;
        check(netcal_tokens_load(path.c_str(), part.out()));
        if (!merged.get()) {
          std::swap(merged.ptr, part.ptr);
        } else {
          check(netcal_tokens_concat(merged.get(), part.get()));
        }
      }
      VocabHandle vocab;
      check(netcal_vocab_build(merged.get(), vocab.out()));
      check(netcal_vocab_save(vocab.get(), out_path.c_str()));
      std::cout << "vocabulary size " << netcal_vocab_size(vocab.get()) << "\n";
    } else if (*train_emb) {
      EmbedArtifacts art;
      load_tokens_vocab(emb_tokens, emb_vocab, art);
      EmbeddingsHandle table;
      if (ablation == "fixed-random") {
        check(netcal_embeddings_fixed_random(art.vocab.get(), emb_dim, global_seed, table.out()));
      } else if (ablation.empty()) {
        netcal_skipgram_config cfg{emb_radius, emb_negatives, emb_epochs, emb_lr, global_seed};
        check(netcal_embeddings_train(art.tokens.get(), art.vocab.get(), &cfg, emb_dim, table.out()));
      } else {
        fail(NETCAL_ERR_VALIDATION, "unknown ablation '" + ablation + "'");
      }
      check(netcal_embeddings_save(table.get(), art.vocab.get(), out_path.c_str()));
      std::cout << "wrote " << (netcal_vocab_size(art.vocab.get()) + 1) << " vectors of dim "
                << emb_dim << "\n";
    } else if (*make_triplets) {
      EmbedArtifacts art;
      load_tokens_vocab(tri_tokens, tri_vocab, art);
      int strat = strategy == "hard" ? NETCAL_NEG_HARD : NETCAL_NEG_RANDOM;
      if (strategy != "hard" && strategy != "random") {
        fail(NETCAL_ERR_VALIDATION, "strategy must be 'random' or 'hard'");
      }
      if (strat == NETCAL_NEG_HARD) {
        if (tri_embeddings.empty() || tri_encoder.empty()) {
          fail(NETCAL_ERR_VALIDATION, "hard mining needs --embeddings and --encoder");
        }
        check(netcal_embeddings_load(tri_embeddings.c_str(), art.vocab.get(), art.embeddings.out()));
        check(netcal_encoder_load(tri_encoder.c_str(), art.encoder.out()));
      }
      netcal_augment_config cfg{mutation, strat, candidates, global_seed};
      TripletsHandle triplets;
      check(netcal_triplets_make(art.tokens.get(), art.vocab.get(), window_length, &cfg,
                                 art.embeddings.get(), art.encoder.get(), triplets.out()));
      check(netcal_triplets_save(triplets.get(), out_path.c_str()));
      std::cout << "wrote " << netcal_triplets_len(triplets.get()) << " triplets\n";
    } else if (*train_encoder) {
      std::string cfg_path = !enc_config.empty() ? enc_config : global_config;
      if (cfg_path.empty()) fail(NETCAL_ERR_VALIDATION, "train-encoder needs --config");
      auto j = read_json(cfg_path);
      EmbedArtifacts art;
      load_tokens_vocab(j.at("tokens").get<std::string>(), j.at("vocab").get<std::string>(), art);
      check(netcal_embeddings_load(j.at("embeddings").get<std::string>().c_str(), art.vocab.get(),
                                   art.embeddings.out()));
      auto window = j.value("window_length", std::size_t{100});
      TripletsHandle triplets;
      check(netcal_triplets_load(enc_triplets.c_str(), art.tokens.get(), art.vocab.get(), window,
                                 triplets.out()));

      auto ej = j.value("encoder", nlohmann::json::object());
      netcal_encoder_config ec{};
      ec.input_dim = netcal_embeddings_dim(art.embeddings.get());
      ec.model_dim = ej.value("model_dim", 128);
      ec.layers = ej.value("layers", 2);
      ec.heads = ej.value("heads", 2);
      ec.ff_dim = ej.value("ff_dim", 0);
      ec.max_positions = std::max<int>(ej.value("max_positions", 512), static_cast<int>(window));
      ec.dropout = ej.value("dropout", 0.1);
      ec.seed = ej.value("seed", global_seed);

      auto tj = j.value("train", nlohmann::json::object());
      netcal_train_config tc{};
      tc.margin = tj.value("margin", 0.1);
      tc.batch_size = tj.value("batch_size", 32);
      tc.learning_rate = tj.value("learning_rate", 1e-6);
      tc.weight_decay = tj.value("weight_decay", 0.1);
      tc.epochs = tj.value("epochs", 1);
      tc.seed = tj.value("seed", global_seed);

      EncoderHandle encoder;
      check(netcal_encoder_new(&ec, encoder.out()));
      double first = 0.0, last = 0.0;
      check(netcal_encoder_train(encoder.get(), triplets.get(), art.embeddings.get(), &tc, &first,
                                 &last));
      check(netcal_encoder_save(encoder.get(), out_path.c_str()));
      std::printf("trained on %zu triplets, batch loss %.6f -> %.6f\n",
                  netcal_triplets_len(triplets.get()), first, last);
    } else if (*fit_scorer) {
      EmbedArtifacts art;
      load_tokens_vocab(sc_tokens, sc_vocab, art);
      check(netcal_embeddings_load(sc_embeddings.c_str(), art.vocab.get(), art.embeddings.out()));
      check(netcal_encoder_load(sc_encoder.c_str(), art.encoder.out()));

      double* rows = nullptr;
      size_t n = 0, dim = 0;
      check(netcal_embed_windows(art.tokens.get(), art.vocab.get(), art.embeddings.get(),
                                 art.encoder.get(), window_length, &rows, &n, &dim));
      std::unique_ptr<double[], void (*)(double*)> rows_guard(rows, netcal_buffer_free);

      if (sc_mode != "raw" && sc_mode != "paircos") {
        fail(NETCAL_ERR_VALIDATION, "mode must be 'raw' or 'paircos'");
      }
      netcal_scoring_config cfg{contamination,
                                sc_mode == "paircos" ? NETCAL_MODE_PAIRCOS : NETCAL_MODE_RAW,
                                sc_reference, sc_trees, sc_subsample, global_seed};
      ScorerHandle scorer;
      check(netcal_scorer_fit(rows, n, dim, &cfg, scorer.out()));
      check(netcal_scorer_save(scorer.get(), out_path.c_str()));
      std::printf("fit on %zu benign windows, threshold %.6f\n", n,
                  netcal_scorer_threshold(scorer.get()));

      if (!sc_bundle.empty()) {
        check(netcal_bundle_assemble(sc_bundle.c_str(), parse_kind(kind_str), window_length,
                                     sc_rules.empty() ? nullptr : sc_rules.c_str(),
                                     sc_sysmap.empty() ? nullptr : sc_sysmap.c_str(),
                                     sc_vocab.c_str(), sc_embeddings.c_str(), sc_encoder.c_str(),
                                     out_path.c_str()));
        std::cout << "assembled model directory " << sc_bundle << "\n";
      }
    } else if (*score) {
      TraceHandle trace;
      check(netcal_trace_load(score_in.c_str(), parse_kind(kind_str), 1, trace.out(), nullptr));
      RulesHandle rules;
      if (!score_rules.empty()) check(netcal_rules_load(score_rules.c_str(), rules.out()));
      SysmapHandle sysmap;
      if (!score_sysmap.empty()) check(netcal_sysmap_load(score_sysmap.c_str(), sysmap.out()));
      TokensHandle tokens;
      check(netcal_tokenize(trace.get(), rules.get(), sysmap.get(), tokens.out()));

      EmbedArtifacts art;
      check(netcal_vocab_load(score_vocab.c_str(), art.vocab.out()));
      check(netcal_embeddings_load(score_embeddings.c_str(), art.vocab.get(), art.embeddings.out()));
      check(netcal_encoder_load(score_encoder.c_str(), art.encoder.out()));
      ScorerHandle scorer;
      check(netcal_scorer_load(score_scorer.c_str(), scorer.out()));

      double* rows = nullptr;
      size_t n = 0, dim = 0;
      check(netcal_embed_windows(tokens.get(), art.vocab.get(), art.embeddings.get(),
                                 art.encoder.get(), window_length, &rows, &n, &dim));
      std::unique_ptr<double[], void (*)(double*)> rows_guard(rows, netcal_buffer_free);

      std::vector<double> scores(n);
      std::vector<int> flags(n);
      check(netcal_scorer_score(scorer.get(), rows, n, dim, scores.data(), flags.data()));

      std::ostream* out = &std::cout;
      std::ofstream file;
      if (!score_out.empty()) {
        file.open(score_out);
        if (!file) fail(NETCAL_ERR_RUNTIME, "cannot open '" + score_out + "' for writing");
        out = &file;
      }
      size_t flagged = 0;
      char line[96];
      for (size_t i = 0; i < n; ++i) {
        flagged += static_cast<size_t>(flags[i]);
        std::snprintf(line, sizeof(line), "window=%zu score=%.6f flag=%d", i, scores[i], flags[i]);
        *out << line << "\n";
      }
      std::snprintf(line, sizeof(line), "flagged %zu/%zu windows (%.4f)", flagged, n,
                    n ? static_cast<double>(flagged) / static_cast<double>(n) : 0.0);
      *out << line << "\n";
    } else if (*stream) {
      double threshold = std::nan("");
      if (calibrate) {
        if (calib_benign.empty() || calib_anomaly.empty()) {
          fail(NETCAL_ERR_VALIDATION, "--calibrate needs --calib-benign and --calib-anomaly");
        }
        double c = std::isnan(stream_contamination) ? 0.015 : stream_contamination;
        check(netcal_calibrate_alpha(model_dir.c_str(), calib_benign.c_str(),
                                     calib_anomaly.c_str(), c, &alpha, &threshold));
        std::fprintf(stderr, "calibrated alpha=%.2f threshold=%.6f\n", alpha, threshold);
      }
      StreamHandle stream_handle;
      check(netcal_stream_open(model_dir.c_str(), alpha, threshold, stream_handle.out()));

      std::string line;
      size_t malformed = 0;
      char buf[128];
      while (std::getline(std::cin, line)) {
        if (line.empty()) continue;
        netcal_alert alert;
        int fired = 0;
        int rc = netcal_stream_push_line(stream_handle.get(), line.c_str(), &alert, &fired);
        if (rc == NETCAL_ERR_VALIDATION) {
          ++malformed;
          continue;
        }
        check(rc);
        if (fired) {
          std::snprintf(buf, sizeof(buf), "ALERT ts=%.6f window=%zu score=%.6f", alert.ts,
                        alert.window_index, alert.smoothed);
          std::cout << buf << std::endl;
        }
      }
      if (malformed > 0) std::fprintf(stderr, "warning: %zu malformed lines\n", malformed);
      std::fprintf(stderr, "processed %zu windows, %zu alerts\n",
                   netcal_stream_windows_seen(stream_handle.get()),
                   netcal_stream_alert_count(stream_handle.get()));
      return netcal_stream_alert_count(stream_handle.get()) > 0 ? 3 : 0;
    } else if (*simulate) {
      check(netcal_simulate(scenario_path.c_str(), parse_kind(kind_str),
                            sim_seed != 0 ? sim_seed : 0, out_path.c_str()));
      std::cout << "wrote " << out_path << "\n";
    } else if (*experiment) {
      std::string cfg_path = !exp_config.empty() ? exp_config : global_config;
      if (cfg_path.empty()) fail(NETCAL_ERR_VALIDATION, "experiment needs --config");
      if (max_events > 0) {
        // Rewrite the config with the truncation applied.
        auto j = read_json(cfg_path);
        j["max_events"] = max_events;
        cfg_path += ".effective";
        std::ofstream out(cfg_path);
        if (!out) fail(NETCAL_ERR_RUNTIME, "cannot write '" + cfg_path + "'");
        out << j.dump(2);
      }
      char* report = nullptr;
      check(netcal_experiment_run(cfg_path.c_str(), &report));
      std::unique_ptr<char[], void (*)(char*)> guard(report, netcal_string_free);
      std::cout << report;
      if (!exp_report.empty()) {
        std::ofstream out(exp_report);
        if (!out) fail(NETCAL_ERR_RUNTIME, "cannot open '" + exp_report + "' for writing");
        out << report;
      }
    }
  } catch (const CliError& e) {
    std::cerr << "error: " << e.message << "\n";
    return e.code == NETCAL_ERR_VALIDATION ? 1 : 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
