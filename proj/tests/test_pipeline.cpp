#include "netcal/pipeline.hpp"

#include "doctest.h"
#include "fixture.hpp"
#include "test_util.hpp"

using namespace netcal;

TEST_CASE("bundle persistence preserves behavior") {
  testutil::TempDir tmp;
  auto fx = fixture::make_pipeline();
  auto dir = tmp.file("model");
  save_bundle(dir, fx.bundle);
  auto loaded = load_bundle(dir);

  CHECK(loaded.kind == fx.bundle.kind);
  CHECK(loaded.window_length == fx.bundle.window_length);
  CHECK(loaded.vocab.size() == fx.bundle.vocab.size());
  CHECK(loaded.scorer.threshold() == fx.bundle.scorer.threshold());

  // Same scores on a fixture capture end to end.
  Scenario eval = fx.scenario;
  eval.seed = 321;
  eval.duration = 10.0;
  Trace t = generate(eval, TraceKind::Packet);
  OnlineConfig cfg{1.0, fx.bundle.scorer.threshold()};
  auto before = stream_detect(t, fx.bundle, cfg);
  auto after = stream_detect(t, loaded, cfg);
  REQUIRE(before.raw_scores.size() == after.raw_scores.size());
  for (std::size_t i = 0; i < before.raw_scores.size(); ++i) {
    CHECK(before.raw_scores[i] == after.raw_scores[i]);
  }

  SUBCASE("missing directory fails cleanly") {
    CHECK_THROWS_AS(load_bundle(tmp.file("nothing")), Error);
  }
}

TEST_CASE("experiment runner produces a complete, deterministic table") {
  testutil::TempDir tmp;

  // Synthesize the captures the config will reference.
  auto train_sc = fixture::make_scenario(8, 6, 200.0, 30.0, 0.0, 0.0, 100);
  write_trace(tmp.file("train.trace"), generate(train_sc, TraceKind::Packet));
  for (int i = 0; i < 2; ++i) {
    auto sc = fixture::make_scenario(8, 6, 200.0, 15.0, 0.0, 0.0, 200 + static_cast<std::uint64_t>(i));
    write_trace(tmp.file("benign" + std::to_string(i) + ".trace"), generate(sc, TraceKind::Packet));
  }
  auto attack_sc = fixture::make_scenario(8, 6, 30.0, 15.0, 0.0, 300.0, 300);
  attack_sc.injection_time = 0.0;
  write_trace(tmp.file("attack.trace"), generate(attack_sc, TraceKind::Packet));

  ExperimentConfig cfg;
  cfg.kind = TraceKind::Packet;
  cfg.window_length = 25;
  cfg.train_trace = tmp.file("train.trace");
  cfg.eval_benign = {tmp.file("benign0.trace"), tmp.file("benign1.trace")};
  cfg.eval_anomaly = {tmp.file("attack.trace")};
  cfg.variants = {{0.0, NegativeStrategy::RandomFuture}, {0.1, NegativeStrategy::RandomFuture}};
  cfg.contaminations = {0.015, 0.05};
  cfg.embedding_dim = 16;
  cfg.skipgram.epochs = 1;
  cfg.encoder.model_dim = 16;
  cfg.encoder.layers = 1;
  cfg.encoder.heads = 2;
  cfg.encoder.max_positions = 25;
  cfg.train.batch_size = 16;
  cfg.train.learning_rate = 1e-3;
  cfg.train.epochs = 1;
  cfg.scoring.forest.tree_count = 50;
  cfg.seed = 31;
  cfg.out_dir = tmp.file("out");

  auto result = run_experiment(cfg);

  // 3 datasets x 2 contaminations x 2 variants
  CHECK(result.table.cells.size() == 12);
  for (const auto& cell : result.table.cells) {
    CHECK(cell.rate_percent >= 0.0);
    CHECK(cell.rate_percent <= 100.0);
    CHECK(cell.windows > 0);
  }
  CHECK(result.bundles.size() == 2);

  // The anomalous source lives on disjoint tokens, so even this tiny setup
  // should separate it from benign turf.
  double anomaly_rate = 0.0, benign_rate = 0.0;
  int anomaly_cells = 0, benign_cells = 0;
  for (const auto& cell : result.table.cells) {
    if (cell.is_benign) {
      benign_rate += cell.rate_percent;
      ++benign_cells;
    } else {
      anomaly_rate += cell.rate_percent;
      ++anomaly_cells;
    }
  }
  CHECK(anomaly_rate / anomaly_cells > 50.0);
  CHECK(benign_rate / benign_cells < 20.0);

  SUBCASE("rerun with the same seed reproduces every cell") {
    ExperimentConfig again = cfg;
    again.out_dir.clear();
    auto result2 = run_experiment(again);
    REQUIRE(result2.table.cells.size() == result.table.cells.size());
    for (std::size_t i = 0; i < result.table.cells.size(); ++i) {
      CHECK(result2.table.cells[i].rate_percent == result.table.cells[i].rate_percent);
      CHECK(result2.table.cells[i].dataset == result.table.cells[i].dataset);
    }
  }

  SUBCASE("artifacts land in the output directory") {
    CHECK(std::filesystem::exists(tmp.file("out/report.tsv")));
    CHECK(std::filesystem::exists(tmp.file("out/m=0.1/encoder.bin")));
    auto text = testutil::slurp(tmp.file("out/report.txt"));
    CHECK(text.find("attack") != std::string::npos);
  }

  SUBCASE("text rendering covers every configured cell") {
    auto text = result.table.render_text();
    CHECK(text.find("benign0") != std::string::npos);
    CHECK(text.find("m=0.1") != std::string::npos);
    CHECK(text.find('-') == std::string::npos);  // no silent skips
  }
}

TEST_CASE("experiment config validation") {
  testutil::TempDir tmp;
  ExperimentConfig cfg;
  CHECK_THROWS_AS(cfg.validate(), Error);  // no train trace

  cfg.train_trace = "x.trace";
  cfg.eval_benign = {"b.trace"};
  cfg.variants = {{0.1, NegativeStrategy::RandomFuture}};
  cfg.contaminations = {};
  CHECK_THROWS_AS(cfg.validate(), Error);  // empty contamination list

  cfg.contaminations = {0.7};
  CHECK_THROWS_AS(cfg.validate(), Error);  // out of range

  SUBCASE("json config loads with defaults") {
    auto path = tmp.write("exp.json", R"({
      "kind": "packet",
      "train_trace": "train.trace",
      "eval_benign": ["a.trace"],
      "eval_anomaly": ["m.trace"],
      "seed": 9
    })");
    auto loaded = load_experiment_config(path);
    CHECK(loaded.window_length == 100);
    CHECK(loaded.contaminations == std::vector<double>{0.005, 0.015, 0.025});
    CHECK(loaded.variants.size() == 3);
    CHECK(loaded.train.learning_rate == 1e-6);
    CHECK(loaded.train.weight_decay == 0.1);
    CHECK(loaded.train.batch_size == 32);
    CHECK(loaded.encoder.dropout == 0.1);
    CHECK(loaded.seed == 9);
  }
}
