#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "netcal/online.hpp"

namespace netcal {

// Bundle persistence under a directory: vocab.txt, embeddings.txt,
// encoder.bin, scorer.bin, rules.json is optional (defaults apply),
// syscalls.tsv is optional, meta.json carries kind and window length.
void save_bundle(const std::string& dir, const DetectorBundle& bundle);
DetectorBundle load_bundle(const std::string& dir);

// Tokenizes a trace under the bundle-independent rules/table.
std::vector<std::string> tokenize_trace(const Trace& trace, const AbstractionRules& rules,
                                        const SyscallTable& table);

std::vector<std::int32_t> ids_of(const std::vector<std::string>& texts, const Vocabulary& vocab);

// Encodes every window of a token-id stream. Rows are encoder embeddings.
Eigen::MatrixXd embed_windows(std::span<const std::int32_t> ids, std::size_t window_length,
                              const EmbeddingTable& table, const EncoderModel& encoder);

struct VariantConfig {
  double mutation_rate = 0.1;
  NegativeStrategy strategy = NegativeStrategy::RandomFuture;
};

struct ExperimentConfig {
  TraceKind kind = TraceKind::Packet;
  std::size_t window_length = 100;
  std::string train_trace;
  std::vector<std::string> eval_benign;   // evaluation captures, flagged fraction reported
  std::vector<std::string> eval_anomaly;  // detection rate reported
  std::vector<VariantConfig> variants;
  std::vector<double> contaminations;
  FeatureMode feature_mode = FeatureMode::RawEmbedding;
  std::optional<std::size_t> max_events;  // training-trace truncation
  std::string rules_path;                 // empty for defaults
  std::string syscall_table_path;
  std::string out_dir;                    // artifact directory, empty to skip saving

  int embedding_dim = 64;
  bool fixed_random_embeddings = false;
  SkipGramConfig skipgram;
  EncoderConfig encoder;
  TrainConfig train;
  ScoringConfig scoring;
  std::uint64_t seed = 1;

  void validate() const;
};

ExperimentConfig load_experiment_config(const std::string& path);

struct ReportCell {
  std::string dataset;
  double contamination = 0.0;
  std::string variant;
  double rate_percent = 0.0;  // detection rate or flagged fraction, in percent
  bool is_benign = false;
  std::size_t windows = 0;
};

struct ReportTable {
  std::vector<ReportCell> cells;

  std::string render_text() const;
  void write_tsv(const std::string& path) const;
  static std::string format_contamination(double c);
};

struct ExperimentResult {
  ReportTable table;
  // Bundles per variant at the first contamination, retained for reuse.
  std::vector<DetectorBundle> bundles;
  std::vector<std::string> variant_names;
};

// Trains the pipeline per variant (vocabulary over all configured traces,
// embeddings and encoder on the benign training trace only) and evaluates
// every (dataset x contamination x variant) cell.
ExperimentResult run_experiment(const ExperimentConfig& cfg);

}  // namespace netcal
