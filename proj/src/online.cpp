#include "netcal/online.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace netcal {

std::string DetectorBundle::tokenize_packet_record(const PacketRecord& rec) const {
  return tokenize_packet(rec, rules);
}

std::string DetectorBundle::tokenize_syscall_record(const SyscallRecord& rec) const {
  return tokenize_syscall(rec, syscall_table);
}

double ema_update(double v_prev, double c_t, double alpha) {
  if (!(alpha > 0.0) || alpha > 1.0) fail_validation("alpha must be in (0, 1]");
  if (!std::isfinite(c_t)) fail_validation("non-finite score in EMA update");
  return alpha * c_t + (1.0 - alpha) * v_prev;
}

double EmaState::update(double c) {
  if (!std::isfinite(c)) fail_validation("non-finite score in EMA update");
  if (!started) {
    started = true;
    v = c;
  } else {
    v = ema_update(v, c, alpha);
  }
  return v;
}

OnlineDetector::OnlineDetector(const DetectorBundle& bundle, const OnlineConfig& cfg)
    : bundle_(&bundle), cfg_(cfg) {
  if (!(cfg.alpha > 0.0) || cfg.alpha > 1.0) fail_validation("alpha must be in (0, 1]");
  ema_.alpha = cfg.alpha;
  buffer_.reserve(bundle.window_length);
}

std::optional<Alert> OnlineDetector::push(std::int32_t token_id, double ts) {
  buffer_.push_back(token_id);
  if (buffer_.size() < bundle_->window_length) return std::nullopt;

  Eigen::VectorXd embedding = bundle_->encoder.encode_ids(buffer_, bundle_->embeddings);
  buffer_.clear();
  double raw = bundle_->scorer.anomaly_score(embedding);
  double smoothed = ema_.update(raw);
  std::size_t index = windows_seen_++;
  raw_scores_.push_back(raw);
  smoothed_scores_.push_back(smoothed);

  if (smoothed > cfg_.threshold) {
    Alert alert{index, ts, smoothed, raw};
    if (!first_alert_) first_alert_ = alert;
    return alert;
  }
  return std::nullopt;
}

std::optional<Alert> OnlineDetector::push_record(const PacketRecord& rec) {
  int id = bundle_->vocab.id_of(bundle_->tokenize_packet_record(rec));
  return push(static_cast<std::int32_t>(id), rec.ts);
}

std::optional<Alert> OnlineDetector::push_record(const SyscallRecord& rec) {
  int id = bundle_->vocab.id_of(bundle_->tokenize_syscall_record(rec));
  return push(static_cast<std::int32_t>(id), rec.ts);
}

StreamResult stream_detect(const Trace& trace, const DetectorBundle& bundle,
                           const OnlineConfig& cfg) {
  if (trace.kind != bundle.kind) fail_validation("trace kind does not match the detector bundle");
  OnlineDetector detector(bundle, cfg);
  StreamResult result;
  auto feed = [&](auto const& records) {
    for (const auto& rec : records) {
      std::size_t before = detector.windows_seen();
      auto alert = detector.push_record(rec);
      if (detector.windows_seen() > before) result.window_end_ts.push_back(rec.ts);
      if (alert) result.alerts.push_back(*alert);
    }
  };
  if (trace.kind == TraceKind::Packet) {
    feed(trace.packets);
  } else {
    feed(trace.syscalls);
  }
  result.raw_scores = detector.raw_scores();
  result.smoothed_scores = detector.smoothed_scores();
  return result;
}

std::vector<double> smooth_scores(std::span<const double> raw, double alpha) {
  EmaState state;
  state.alpha = alpha;
  if (!(alpha > 0.0) || alpha > 1.0) fail_validation("alpha must be in (0, 1]");
  std::vector<double> out;
  out.reserve(raw.size());
  for (double c : raw) out.push_back(state.update(c));
  return out;
}

std::vector<double> default_alpha_grid() {
  std::vector<double> grid;
  for (int i = 1; i <= 20; ++i) grid.push_back(0.05 * i);
  return grid;
}

double calibrate_alpha(const std::vector<std::vector<double>>& benign_score_traces,
                       const std::vector<std::vector<double>>& anomaly_score_traces,
                       std::span<const double> grid, double contamination) {
  if (grid.empty()) fail_validation("alpha grid is empty");
  if (benign_score_traces.empty() || anomaly_score_traces.empty()) {
    fail_validation("calibration needs at least one benign and one anomalous score trace");
  }

  std::vector<double> ordered(grid.begin(), grid.end());
  std::sort(ordered.begin(), ordered.end());

  double best_alpha = 0.0;
  double best_objective = -std::numeric_limits<double>::infinity();
  for (double alpha : ordered) {
    std::vector<double> benign_smoothed;
    for (const auto& trace : benign_score_traces) {
      auto s = smooth_scores(trace, alpha);
      benign_smoothed.insert(benign_smoothed.end(), s.begin(), s.end());
    }
    if (benign_smoothed.empty()) fail_validation("benign calibration trace is empty");
    double threshold = quantile_threshold(benign_smoothed, contamination);

    std::size_t benign_above = 0;
    for (double v : benign_smoothed) benign_above += v > threshold ? 1 : 0;
    double false_rate = static_cast<double>(benign_above) / static_cast<double>(benign_smoothed.size());

    std::size_t anomaly_total = 0, anomaly_above = 0;
    for (const auto& trace : anomaly_score_traces) {
      for (double v : smooth_scores(trace, alpha)) {
        ++anomaly_total;
        anomaly_above += v > threshold ? 1 : 0;
      }
    }
    if (anomaly_total == 0) fail_validation("anomalous calibration trace is empty");
    double detection_rate = static_cast<double>(anomaly_above) / static_cast<double>(anomaly_total);

    double objective = detection_rate - false_rate;
    // Grid is ascending, so >= breaks ties toward larger alpha.
    if (objective >= best_objective) {
      best_objective = objective;
      best_alpha = alpha;
    }
  }
  return best_alpha;
}

TTDReport measure_ttd(const Scenario& scenario, TraceKind kind, const DetectorBundle& bundle,
                      const OnlineConfig& cfg, int runs) {
  if (runs < 1) fail_validation("runs must be at least 1");
  TTDReport report;
  report.injection_time = scenario.injection_time;

  for (int r = 0; r < runs; ++r) {
    Scenario run_scenario = scenario;
    run_scenario.seed = mix_seed(scenario.seed, static_cast<std::uint64_t>(r));
    Trace trace = generate(run_scenario, kind);
    StreamResult stream = stream_detect(trace, bundle, cfg);

    TTDRun run;
    run.injection_window = stream.window_end_ts.size();
    for (std::size_t w = 0; w < stream.window_end_ts.size(); ++w) {
      if (stream.window_end_ts[w] >= scenario.injection_time) {
        run.injection_window = w;
        break;
      }
    }
    for (const Alert& alert : stream.alerts) {
      if (alert.ts >= scenario.injection_time) {
        run.detected = true;
        run.ttd = alert.ts - scenario.injection_time;
        run.alert_window = alert.window_index;
        break;
      }
    }
    report.runs.push_back(run);
  }

  std::vector<double> ttds;
  for (const auto& run : report.runs) {
    if (run.detected) ttds.push_back(run.ttd);
  }
  report.detected_count = static_cast<int>(ttds.size());
  if (!ttds.empty()) {
    double sum = 0.0;
    for (double v : ttds) sum += v;
    report.mean_ttd = sum / static_cast<double>(ttds.size());
    double sq = 0.0;
    for (double v : ttds) sq += (v - report.mean_ttd) * (v - report.mean_ttd);
    report.std_ttd = std::sqrt(sq / static_cast<double>(ttds.size()));
  }
  return report;
}

}  // namespace netcal
