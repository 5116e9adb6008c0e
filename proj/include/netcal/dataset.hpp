#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "netcal/lang.hpp"

namespace netcal {

struct Window {
  std::vector<std::int32_t> ids;
  std::size_t stream_offset = 0;
};

// Non-overlapping consecutive windows; the trailing remainder is dropped.
std::vector<Window> segment(std::span<const std::int32_t> stream, std::size_t window_length);

enum class NegativeStrategy { RandomFuture, HardMined };

struct AugmentationConfig {
  double mutation_rate = 0.1;  // fraction of negative-window tokens replaced
  NegativeStrategy strategy = NegativeStrategy::RandomFuture;
  int candidates = 50;  // hard mining candidate pool per anchor
  std::uint64_t seed = 1;

  void validate() const;
};

struct Triplet {
  Window anchor;
  Window positive;   // always the next sequential window
  Window negative;   // a later window, possibly mutated
  std::vector<std::size_t> mutated_positions;              // sorted
  std::vector<std::int32_t> mutated_replacements;          // parallel to positions
  std::size_t negative_source_offset = 0;                  // pre-mutation offset
};

// Replaces exactly round(m * len) distinct positions with a uniformly drawn
// vocabulary id different from the original (requires vocab size >= 2 for the
// replacement to differ).
Window mutate_window(const Window& w, double m, const Vocabulary& vocab, std::uint64_t seed,
                     std::vector<std::size_t>* positions_out = nullptr,
                     std::vector<std::int32_t>* replacements_out = nullptr);

using EncodeFn = std::function<Eigen::VectorXd(const Window&)>;

// One triplet per anchor index i that has both a positive (i+1) and at least
// one strictly later window to draw the negative from. Randomness for each
// anchor derives from (seed, anchor index), so construction order does not
// matter. HardMined needs `encode` to rank candidates by cosine distance.
std::vector<Triplet> make_triplets(const std::vector<Window>& windows,
                                   const AugmentationConfig& cfg, const Vocabulary& vocab,
                                   const EncodeFn* encode = nullptr);

// Debug dump: one line per triplet with offsets and mutation edits, enough to
// rebuild the triplets against the originating token stream.
void save_triplets(const std::string& path, const std::vector<Triplet>& triplets);
std::vector<Triplet> load_triplets(const std::string& path, std::span<const std::int32_t> stream,
                                   std::size_t window_length);

}  // namespace netcal
