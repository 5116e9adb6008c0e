#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "netcal/lang.hpp"

namespace netcal {

struct SkipGramConfig {
  int window_radius = 5;
  int negatives_per_positive = 5;
  int epochs = 5;
  double learning_rate = 0.025;
  std::uint64_t seed = 1;

  void validate() const;
};

// Per-token vectors, one row per vocabulary id plus a trailing UNK row.
struct EmbeddingTable {
  enum class Source { Learned, FixedRandom };

  int dim = 64;
  Eigen::MatrixXd vectors;  // (vocab_size + 1) x dim
  Source source = Source::Learned;
  std::uint64_t seed = 0;

  int count() const { return static_cast<int>(vectors.rows()); }

  Eigen::VectorXd lookup(int id) const;

  // T x dim matrix for a window of token ids.
  Eigen::MatrixXd lookup_window(std::span<const std::int32_t> ids) const;
};

struct SkipGramResult {
  EmbeddingTable table;      // input vectors, the embeddings proper
  Eigen::MatrixXd context;   // output vectors, kept for diagnostics
  std::vector<double> epoch_losses;  // exact expected objective after each epoch

  // Mean negative-sampling log loss of predicting context b from center a.
  double pair_score(int a, int b) const;
};

// The deterministic initial state skip-gram training starts from.
EmbeddingTable skipgram_init_table(const Vocabulary& vocab, int dim, std::uint64_t seed);

// Skip-gram with negative sampling over a token-id stream. Deterministic for
// a fixed seed; runs single threaded.
SkipGramResult train_embeddings(std::span<const std::int32_t> ids, const Vocabulary& vocab,
                                const SkipGramConfig& cfg, int dim = 64);

// Ablation table: i.i.d. N(0, 1/dim) entries, reproducible from the seed.
EmbeddingTable fixed_random_embeddings(const Vocabulary& vocab, int dim, std::uint64_t seed);

// Text format: header "dim=<d> count=<n>", then "<token text> <d floats>" per
// row. Floats are printed round-trip exact.
void save_embeddings(const std::string& path, const EmbeddingTable& table,
                     const Vocabulary& vocab);
EmbeddingTable load_embeddings(const std::string& path, const Vocabulary* expected_vocab = nullptr);

}  // namespace netcal
