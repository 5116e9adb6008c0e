#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "netcal/trace.hpp"

namespace netcal {

// A token-emitting event source. Tokens index into the owning Scenario's
// alphabet. Events arrive as a Poisson process at `rate`; an optional duty
// cycle gates emission into active/sleep phases.
struct SourceModel {
  enum class Kind { Markov, IID };

  Kind kind = Kind::IID;
  Eigen::MatrixXd transition;  // Markov: rows sum to 1
  Eigen::VectorXd initial;     // Markov start distribution (uniform if empty)
  Eigen::VectorXd probs;       // IID category distribution
  double rate = 1.0;           // events per second
  std::uint32_t pid = 0;
  std::uint64_t seed = 1;
  double active_secs = 0.0;    // 0 disables the duty cycle
  double sleep_secs = 0.0;

  void validate(std::size_t alphabet_size) const;
};

// Wraps `base` so it emits only during active phases, phase-aligned to the
// source start time.
SourceModel duty_cycle_source(double active_secs, double sleep_secs, SourceModel base);

struct Scenario {
  std::vector<std::string> alphabet;  // token texts (packet grammar or syscall names)
  std::vector<SourceModel> benign_sources;
  std::optional<SourceModel> anomaly_source;
  double injection_time = 0.0;  // anomaly start, seconds
  double duration = 0.0;        // seconds
  std::uint64_t seed = 1;

  void validate() const;
};

Scenario load_scenario(const std::string& path);

// Interleaves all sources by timestamp into one trace with ground-truth PIDs.
// Deterministic for a fixed scenario seed; per-source randomness derives from
// (scenario seed, source seed).
Trace generate(const Scenario& scenario, TraceKind kind);

// Canonical enumeration of the valid packet-token cross product.
std::vector<std::string> enumerate_packet_tokens();

// n well-spread texts from the canonical enumeration, for synthetic alphabets.
std::vector<std::string> packet_alphabet(std::size_t n);

// A representative record whose tokenization under default rules reproduces
// the given token text exactly.
PacketRecord packet_for_token(const std::string& token_text, double ts, std::uint32_t pid);

}  // namespace netcal
