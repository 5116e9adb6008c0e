#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "netcal/encoder.hpp"
#include "netcal/score.hpp"
#include "netcal/synth.hpp"

namespace netcal {

// Everything a deployed detector needs to turn raw events into decisions.
struct DetectorBundle {
  TraceKind kind = TraceKind::Packet;
  std::size_t window_length = 100;
  AbstractionRules rules;
  SyscallTable syscall_table;
  Vocabulary vocab;
  EmbeddingTable embeddings;
  EncoderModel encoder;
  ScorerModel scorer;

  std::string tokenize_packet_record(const PacketRecord& rec) const;
  std::string tokenize_syscall_record(const SyscallRecord& rec) const;
};

// v_t = alpha * c_t + (1 - alpha) * v_{t-1}
double ema_update(double v_prev, double c_t, double alpha);

// Streaming EMA; the first observation initializes v directly so there is no
// cold-start transient toward an arbitrary zero.
struct EmaState {
  double alpha = 1.0;
  bool started = false;
  double v = 0.0;

  double update(double c);
};

struct OnlineConfig {
  double alpha = 1.0;
  double threshold = 0.0;
};

struct Alert {
  std::size_t window_index = 0;
  double ts = 0.0;       // event timestamp at window completion
  double smoothed = 0.0;
  double raw = 0.0;
};

// Sequential windowing over a mixed event stream: push token ids one at a
// time; each completed window is encoded, scored, EMA-smoothed and compared
// against the threshold. State updates are strictly sequential per stream.
class OnlineDetector {
 public:
  OnlineDetector(const DetectorBundle& bundle, const OnlineConfig& cfg);

  std::optional<Alert> push(std::int32_t token_id, double ts);
  std::optional<Alert> push_record(const PacketRecord& rec);
  std::optional<Alert> push_record(const SyscallRecord& rec);

  std::size_t windows_seen() const { return windows_seen_; }
  const std::optional<Alert>& first_alert() const { return first_alert_; }
  const std::vector<double>& raw_scores() const { return raw_scores_; }
  const std::vector<double>& smoothed_scores() const { return smoothed_scores_; }

 private:
  const DetectorBundle* bundle_;
  OnlineConfig cfg_;
  EmaState ema_;
  std::vector<std::int32_t> buffer_;
  std::size_t windows_seen_ = 0;
  std::optional<Alert> first_alert_;
  std::vector<double> raw_scores_;
  std::vector<double> smoothed_scores_;
};

struct StreamResult {
  std::vector<Alert> alerts;
  std::vector<double> raw_scores;
  std::vector<double> smoothed_scores;
  std::vector<double> window_end_ts;
};

// Runs the online detector over a full trace without PID filtering.
StreamResult stream_detect(const Trace& trace, const DetectorBundle& bundle,
                           const OnlineConfig& cfg);

// Smooths a raw score sequence with the EMA recurrence.
std::vector<double> smooth_scores(std::span<const double> raw, double alpha);

// Grid-searches alpha to maximize (detection rate - false alert rate), where
// the threshold for each alpha is the benign smoothed-score quantile at the
// given contamination. Ties break toward larger alpha.
double calibrate_alpha(const std::vector<std::vector<double>>& benign_score_traces,
                       const std::vector<std::vector<double>>& anomaly_score_traces,
                       std::span<const double> grid, double contamination);

std::vector<double> default_alpha_grid();  // 0.05, 0.10, ..., 1.00

struct TTDRun {
  bool detected = false;
  double ttd = 0.0;                   // seconds from injection to first alert
  std::size_t alert_window = 0;
  std::size_t injection_window = 0;   // first window completing at/after injection
};

struct TTDReport {
  std::vector<TTDRun> runs;
  int detected_count = 0;
  double mean_ttd = 0.0;  // over detected runs
  double std_ttd = 0.0;
  double injection_time = 0.0;
};

// Repeats the injection scenario with fresh per-run seeds and measures time
// from injection to the first alert at or after it.
TTDReport measure_ttd(const Scenario& scenario, TraceKind kind, const DetectorBundle& bundle,
                      const OnlineConfig& cfg, int runs);

}  // namespace netcal
