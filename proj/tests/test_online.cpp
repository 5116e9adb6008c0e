#include "netcal/online.hpp"

#include <random>

#include "doctest.h"
#include "fixture.hpp"

using namespace netcal;

TEST_CASE("ema recurrence basics") {
  CHECK(ema_update(0.0, 1.0, 1.0) == 1.0);
  CHECK(ema_update(0.5, 1.0, 1.0) == 1.0);  // alpha 1 tracks the raw score

  SUBCASE("half weighting from an explicit zero start") {
    double v = 0.0;
    std::vector<double> observed;
    for (double c : {1.0, 0.0, 0.0}) {
      v = ema_update(v, c, 0.5);
      observed.push_back(v);
    }
    CHECK(observed[0] == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(observed[1] == doctest::Approx(0.25).epsilon(1e-12));
    CHECK(observed[2] == doctest::Approx(0.125).epsilon(1e-12));
  }

  SUBCASE("constant input is a fixed point") {
    EmaState state;
    state.alpha = 0.3;
    double v = 0.0;
    for (int i = 0; i < 200; ++i) v = state.update(0.7);
    CHECK(v == doctest::Approx(0.7).epsilon(1e-12));
  }

  SUBCASE("non-finite scores are rejected") {
    CHECK_THROWS_AS(ema_update(0.0, std::numeric_limits<double>::infinity(), 0.5), Error);
    CHECK_THROWS_AS(ema_update(0.0, 1.0, 0.0), Error);
    CHECK_THROWS_AS(ema_update(0.0, 1.0, 1.5), Error);
  }
}

TEST_CASE("streamed ema matches the closed form") {
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::vector<double> raw(100);
  for (auto& c : raw) c = unif(rng);

  for (double alpha : {0.05, 0.3, 0.7, 1.0}) {
    auto smoothed = smooth_scores(raw, alpha);
    REQUIRE(smoothed.size() == raw.size());
    // v_t = alpha * sum_k (1-alpha)^k c_{t-k} + (1-alpha)^t v_0 with v_0 = c_0
    for (std::size_t t = 0; t < raw.size(); ++t) {
      double closed = std::pow(1.0 - alpha, static_cast<double>(t)) * raw[0];
      for (std::size_t k = 0; k < t; ++k) {
        closed += alpha * std::pow(1.0 - alpha, static_cast<double>(k)) * raw[t - k];
      }
      CHECK(smoothed[t] == doctest::Approx(closed).epsilon(1e-9));
    }
    if (alpha == 1.0) {
      for (std::size_t t = 0; t < raw.size(); ++t) CHECK(smoothed[t] == raw[t]);
    }
  }
}

TEST_CASE("monotone latency in alpha for an upward step") {
  // Step response: raw scores jump from 0 to 1 at index 50. A larger alpha
  // crosses any fixed threshold no later than a smaller one.
  std::vector<double> raw(50, 0.0);
  raw.resize(100, 1.0);
  const double threshold = 0.6;
  std::vector<double> alphas = {1.0, 0.8, 0.4, 0.2, 0.1};  // descending
  std::size_t prev_first = 0;
  bool first_alpha = true;
  for (double alpha : alphas) {
    auto smoothed = smooth_scores(raw, alpha);
    std::size_t first = smoothed.size();
    for (std::size_t t = 0; t < smoothed.size(); ++t) {
      if (smoothed[t] > threshold) {
        first = t;
        break;
      }
    }
    if (!first_alpha) CHECK(first >= prev_first);  // smaller alpha is never earlier
    prev_first = first;
    first_alpha = false;
  }
}

TEST_CASE("alpha calibration") {
  auto grid = default_alpha_grid();
  REQUIRE(grid.size() == 20);
  CHECK(grid.front() == doctest::Approx(0.05));
  CHECK(grid.back() == doctest::Approx(1.0));

  SUBCASE("separable scores pick alpha 1 by the tie rule") {
    std::vector<std::vector<double>> benign = {{0.1, 0.2, 0.15, 0.12, 0.18, 0.2, 0.1, 0.16}};
    std::vector<std::vector<double>> anomaly = {{0.9, 0.95, 0.97, 0.92}};
    CHECK(calibrate_alpha(benign, anomaly, grid, 0.25) == doctest::Approx(1.0));
  }

  SUBCASE("identical distributions tie at objective zero and fall back to the largest alpha") {
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    std::vector<double> a(400);
    for (auto& v : a) v = unif(rng);
    double alpha = calibrate_alpha({a}, {a}, grid, 0.1);
    CHECK(alpha == doctest::Approx(1.0));
  }

  SUBCASE("bursty benign spikes favor smoothing") {
    // Benign sits at 0.3 with 4% one-window spikes to 0.95; the anomaly holds
    // 0.7. Unsmoothed, the benign quantile at c=0.025 lands in the spikes
    // above the anomaly level; smoothing suppresses the spikes.
    std::mt19937_64 rng(17);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    std::vector<double> benign(2000);
    for (auto& v : benign) v = unif(rng) < 0.04 ? 0.95 : 0.3 + 0.02 * unif(rng);
    std::vector<double> anomaly(400, 0.7);
    double alpha = calibrate_alpha({benign}, {anomaly}, grid, 0.025);
    CHECK(alpha < 1.0);
  }

  SUBCASE("empty grid is an error") {
    CHECK_THROWS_AS(calibrate_alpha({{0.1}}, {{0.2}}, std::vector<double>{}, 0.1), Error);
  }
}

TEST_CASE("stream detection over a synthetic pipeline") {
  auto fx = fixture::make_pipeline();
  OnlineConfig cfg;
  cfg.alpha = 1.0;
  cfg.threshold = fx.bundle.scorer.threshold();

  SUBCASE("stream shorter than one window never alerts") {
    Scenario tiny = fx.scenario;
    tiny.duration = 0.05;  // ~10 events at rate 200, window is 25
    Trace t = generate(tiny, TraceKind::Packet);
    REQUIRE(t.size() < fx.bundle.window_length);
    auto result = stream_detect(t, fx.bundle, cfg);
    CHECK(result.alerts.empty());
    CHECK(result.raw_scores.empty());
  }

  SUBCASE("online with alpha 1 agrees with offline detection window for window") {
    Scenario eval = fx.scenario;
    eval.seed = 999;
    eval.duration = 30.0;
    Trace t = generate(eval, TraceKind::Packet);
    auto stream = stream_detect(t, fx.bundle, cfg);

    auto texts = tokenize_trace(t, fx.bundle.rules, fx.bundle.syscall_table);
    auto ids = ids_of(texts, fx.bundle.vocab);
    auto embs = embed_windows(ids, fx.bundle.window_length, fx.bundle.embeddings, fx.bundle.encoder);
    auto offline = fx.bundle.scorer.detect(embs);

    REQUIRE(stream.raw_scores.size() == offline.scores.size());
    std::vector<bool> online_flags(stream.raw_scores.size(), false);
    for (const auto& alert : stream.alerts) online_flags[alert.window_index] = true;
    for (std::size_t w = 0; w < offline.flags.size(); ++w) {
      CHECK(stream.raw_scores[w] == offline.scores[w]);
      CHECK(online_flags[w] == offline.flags[w]);
    }
  }

  SUBCASE("an injected shifted source is caught") {
    Scenario attack = fixture::make_scenario(8, 6, 200.0, 30.0, 15.0, 300.0, 2027);
    Trace t = generate(attack, TraceKind::Packet);
    auto result = stream_detect(t, fx.bundle, cfg);
    REQUIRE(!result.alerts.empty());
    bool after_injection = false;
    for (const auto& alert : result.alerts) {
      if (alert.ts >= attack.injection_time) after_injection = true;
    }
    CHECK(after_injection);
  }

  SUBCASE("kind mismatch is rejected") {
    Trace t;
    t.kind = TraceKind::Syscall;
    CHECK_THROWS_AS(stream_detect(t, fx.bundle, cfg), Error);
  }
}

TEST_CASE("ttd measurement") {
  auto fx = fixture::make_pipeline();
  OnlineConfig cfg;
  cfg.alpha = 1.0;
  cfg.threshold = fx.bundle.scorer.threshold();

  SUBCASE("strongly shifted anomaly is detected in every run") {
    Scenario attack = fixture::make_scenario(8, 6, 200.0, 20.0, 10.0, 400.0, 501);
    auto report = measure_ttd(attack, TraceKind::Packet, fx.bundle, cfg, 5);
    CHECK(report.detected_count == 5);
    for (const auto& run : report.runs) {
      CHECK(run.detected);
      CHECK(run.ttd >= 0.0);
    }
    CHECK(report.mean_ttd < 5.0);
  }

  SUBCASE("an indistinguishable anomaly is detected at roughly the false-positive rate") {
    // The "anomaly" draws from the same benign Markov chain, so post-injection
    // alerts happen at about the benign flagged rate per window.
    Scenario same = fx.scenario;
    same.duration = 20.0;
    same.injection_time = 10.0;
    SourceModel anomaly = fx.scenario.benign_sources[0];
    anomaly.pid = 666;
    anomaly.seed = 77;
    same.anomaly_source = anomaly;
    auto report = measure_ttd(same, TraceKind::Packet, fx.bundle, cfg, 6);
    // ~80 post-injection windows per run at c=0.05 leave each run likely to
    // alert eventually, but early detection cannot be systematic.
    for (const auto& run : report.runs) {
      if (run.detected) CHECK(run.alert_window >= run.injection_window);
    }
  }

  CHECK_THROWS_AS(measure_ttd(fx.scenario, TraceKind::Packet, fx.bundle, cfg, 0), Error);
}
