// Exercises the public C ABI the way an embedding application would: only
// netcal/netcal.h, opaque handles and status codes.
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <string>
#include <vector>

#include "doctest.h"
#include "netcal/netcal.h"
#include "test_util.hpp"

namespace {

// Two benign Markov-ish sources over ICMP tokens plus a distinct anomaly
// token, enough to drive the whole pipeline through the C API.
const char* kScenarioJson = R"({
  "alphabet": [
    "ICMP|SrcPrivate|PortNone|DstPrivate|PortNone|SizeSmall|DirOutbound",
    "ICMP|SrcPrivate|PortNone|DstPublic|PortNone|SizeSmall|DirOutbound",
    "ICMP|SrcPublic|PortNone|DstPrivate|PortNone|SizeSmall|DirInbound",
    "TCP|SrcPublic|SrcPortDynamic|DstPrivate|DstPortWellKnown|SizeLarge|DirInbound"
  ],
  "benign_sources": [
    {"kind": "markov",
     "transition": [[0.6, 0.3, 0.1, 0.0], [0.2, 0.6, 0.2, 0.0], [0.3, 0.2, 0.5, 0.0], [1.0, 0.0, 0.0, 0.0]],
     "initial": [0.4, 0.3, 0.3, 0.0],
     "rate": 400.0, "pid": 10}
  ],
  "anomaly_source": {"kind": "iid", "probs": [0.0, 0.0, 0.0, 1.0], "rate": 600.0, "pid": 66},
  "injection_time": 30.0,
  "duration": 60.0,
  "seed": 99
})";

struct Artifacts {
  std::string train_trace;
  std::string vocab;
  std::string embeddings;
  std::string encoder;
  std::string scorer;
  std::string bundle_dir;
  size_t window = 20;
};

Artifacts build_artifacts(const testutil::TempDir& tmp) {
  Artifacts a;
  auto scenario = tmp.write("scenario.json", kScenarioJson);
  auto benign_scenario = tmp.write("benign.json", [] {
    std::string s = kScenarioJson;
    auto pos = s.find("\"anomaly_source\"");
    auto end = s.find("\"injection_time\"");
    s.erase(pos, end - pos);
    return s;
  }());

  a.train_trace = tmp.file("train.trace");
  REQUIRE(netcal_simulate(benign_scenario.c_str(), NETCAL_KIND_PACKET, 7, a.train_trace.c_str()) ==
          NETCAL_OK);

  netcal_trace* trace = nullptr;
  REQUIRE(netcal_trace_load(a.train_trace.c_str(), NETCAL_KIND_PACKET, 1, &trace, nullptr) ==
          NETCAL_OK);
  REQUIRE(netcal_trace_len(trace) > 1000);

  netcal_tokens* tokens = nullptr;
  REQUIRE(netcal_tokenize(trace, nullptr, nullptr, &tokens) == NETCAL_OK);
  netcal_vocab* vocab = nullptr;
  REQUIRE(netcal_vocab_build(tokens, &vocab) == NETCAL_OK);
  CHECK(netcal_vocab_size(vocab) == 3);  // anomaly token never appears in benign data

  a.vocab = tmp.file("vocab.txt");
  REQUIRE(netcal_vocab_save(vocab, a.vocab.c_str()) == NETCAL_OK);

  netcal_skipgram_config sg{2, 3, 1, 0.025, 5};
  netcal_embeddings* emb = nullptr;
  REQUIRE(netcal_embeddings_train(tokens, vocab, &sg, 16, &emb) == NETCAL_OK);
  CHECK(netcal_embeddings_dim(emb) == 16);
  a.embeddings = tmp.file("embeddings.txt");
  REQUIRE(netcal_embeddings_save(emb, vocab, a.embeddings.c_str()) == NETCAL_OK);

  netcal_augment_config aug{0.1, NETCAL_NEG_RANDOM, 50, 3};
  netcal_triplets* triplets = nullptr;
  REQUIRE(netcal_triplets_make(tokens, vocab, a.window, &aug, nullptr, nullptr, &triplets) ==
          NETCAL_OK);
  REQUIRE(netcal_triplets_len(triplets) > 100);

  netcal_encoder_config ec{16, 16, 1, 2, 0, 32, 0.1, 11};
  netcal_encoder* encoder = nullptr;
  REQUIRE(netcal_encoder_new(&ec, &encoder) == NETCAL_OK);
  netcal_train_config tc{0.1, 16, 1e-3, 0.1, 1, 21};
  double first_loss = 0.0, last_loss = 0.0;
  REQUIRE(netcal_encoder_train(encoder, triplets, emb, &tc, &first_loss, &last_loss) == NETCAL_OK);
  CHECK(first_loss >= 0.0);
  a.encoder = tmp.file("encoder.bin");
  REQUIRE(netcal_encoder_save(encoder, a.encoder.c_str()) == NETCAL_OK);

  double* rows = nullptr;
  size_t n = 0, dim = 0;
  REQUIRE(netcal_embed_windows(tokens, vocab, emb, encoder, a.window, &rows, &n, &dim) ==
          NETCAL_OK);
  REQUIRE(n > 50);
  REQUIRE(dim == 16);

  netcal_scoring_config scfg{0.05, NETCAL_MODE_RAW, 64, 100, 256, 31};
  netcal_scorer* scorer = nullptr;
  REQUIRE(netcal_scorer_fit(rows, n, dim, &scfg, &scorer) == NETCAL_OK);
  a.scorer = tmp.file("scorer.bin");
  REQUIRE(netcal_scorer_save(scorer, a.scorer.c_str()) == NETCAL_OK);

  std::vector<double> scores(n);
  std::vector<int> flags(n);
  REQUIRE(netcal_scorer_score(scorer, rows, n, dim, scores.data(), flags.data()) == NETCAL_OK);
  size_t flagged = 0;
  for (int f : flags) flagged += static_cast<size_t>(f);
  CHECK(static_cast<double>(flagged) / static_cast<double>(n) <= 0.05 + 1e-9);

  a.bundle_dir = tmp.file("model");
  REQUIRE(netcal_bundle_assemble(a.bundle_dir.c_str(), NETCAL_KIND_PACKET, a.window, nullptr,
                                 nullptr, a.vocab.c_str(), a.embeddings.c_str(), a.encoder.c_str(),
                                 a.scorer.c_str()) == NETCAL_OK);

  netcal_buffer_free(rows);
  netcal_scorer_free(scorer);
  netcal_encoder_free(encoder);
  netcal_triplets_free(triplets);
  netcal_embeddings_free(emb);
  netcal_vocab_free(vocab);
  netcal_tokens_free(tokens);
  netcal_trace_free(trace);
  return a;
}

}  // namespace

TEST_CASE("version and error text are always available") {
  CHECK(std::string(netcal_version()).find("netcal") == 0);
  CHECK(netcal_last_error() != nullptr);
}

TEST_CASE("status codes distinguish validation from runtime failures") {
  netcal_trace* trace = nullptr;
  CHECK(netcal_trace_load("/definitely/not/here", NETCAL_KIND_PACKET, 1, &trace, nullptr) ==
        NETCAL_ERR_RUNTIME);
  CHECK(std::string(netcal_last_error()).find("cannot open") != std::string::npos);

  testutil::TempDir tmp;
  auto bad = tmp.write("bad.trace", "ts=nope\n");
  CHECK(netcal_trace_load(bad.c_str(), NETCAL_KIND_PACKET, 1, &trace, nullptr) ==
        NETCAL_ERR_VALIDATION);
  CHECK(std::string(netcal_last_error()).find("line 1") != std::string::npos);

  CHECK(netcal_trace_load(nullptr, NETCAL_KIND_PACKET, 1, &trace, nullptr) ==
        NETCAL_ERR_VALIDATION);
  CHECK(netcal_vocab_build(nullptr, nullptr) == NETCAL_ERR_VALIDATION);
}

TEST_CASE("full pipeline through the C ABI") {
  testutil::TempDir tmp;
  auto artifacts = build_artifacts(tmp);

  SUBCASE("artifact round trips preserve behavior") {
    netcal_vocab* vocab = nullptr;
    REQUIRE(netcal_vocab_load(artifacts.vocab.c_str(), &vocab) == NETCAL_OK);
    netcal_embeddings* emb = nullptr;
    REQUIRE(netcal_embeddings_load(artifacts.embeddings.c_str(), vocab, &emb) == NETCAL_OK);
    netcal_encoder* encoder = nullptr;
    REQUIRE(netcal_encoder_load(artifacts.encoder.c_str(), &encoder) == NETCAL_OK);
    netcal_scorer* scorer = nullptr;
    REQUIRE(netcal_scorer_load(artifacts.scorer.c_str(), &scorer) == NETCAL_OK);
    CHECK(netcal_scorer_threshold(scorer) > 0.0);
    CHECK(netcal_scorer_contamination(scorer) == 0.05);
    netcal_scorer_free(scorer);
    netcal_encoder_free(encoder);
    netcal_embeddings_free(emb);
    netcal_vocab_free(vocab);
  }

  SUBCASE("pid filtering through the C view") {
    netcal_trace* trace = nullptr;
    REQUIRE(netcal_trace_load(artifacts.train_trace.c_str(), NETCAL_KIND_PACKET, 1, &trace,
                              nullptr) == NETCAL_OK);
    uint32_t keep = 10;
    netcal_trace* filtered = nullptr;
    REQUIRE(netcal_trace_filter_pids(trace, &keep, 1, &filtered) == NETCAL_OK);
    CHECK(netcal_trace_len(filtered) == netcal_trace_len(trace));
    uint32_t other = 9999;
    netcal_trace* none = nullptr;
    REQUIRE(netcal_trace_filter_pids(trace, &other, 1, &none) == NETCAL_OK);
    CHECK(netcal_trace_len(none) == 0);
    netcal_trace_free(none);
    netcal_trace_free(filtered);
    netcal_trace_free(trace);
  }

  SUBCASE("streaming detects the injected source and reports alerts") {
    testutil::TempDir scratch;
    auto scenario = scratch.write("attack.json", kScenarioJson);
    auto attack_trace = scratch.file("attack.trace");
    REQUIRE(netcal_simulate(scenario.c_str(), NETCAL_KIND_PACKET, 0, attack_trace.c_str()) ==
            NETCAL_OK);

    netcal_stream* stream = nullptr;
    REQUIRE(netcal_stream_open(artifacts.bundle_dir.c_str(), 1.0, NAN, &stream) == NETCAL_OK);

    std::ifstream in(attack_trace);
    std::string line;
    size_t malformed = 0;
    bool alert_after_injection = false;
    while (std::getline(in, line)) {
      netcal_alert alert;
      int fired = 0;
      int rc = netcal_stream_push_line(stream, line.c_str(), &alert, &fired);
      if (rc == NETCAL_ERR_VALIDATION) {
        ++malformed;
        continue;
      }
      REQUIRE(rc == NETCAL_OK);
      if (fired && alert.ts >= 30.0) alert_after_injection = true;
    }
    CHECK(malformed == 0);
    CHECK(netcal_stream_windows_seen(stream) > 100);
    CHECK(netcal_stream_alert_count(stream) > 0);
    CHECK(alert_after_injection);

    SUBCASE("malformed stream lines are survivable") {
      int fired = 0;
      CHECK(netcal_stream_push_line(stream, "not a record", nullptr, &fired) ==
            NETCAL_ERR_VALIDATION);
      CHECK(fired == 0);
      // stream still usable afterwards
      netcal_alert alert;
      CHECK(netcal_stream_push_line(
                stream,
                "ts=100.000000\tproto=ICMP\tsrc_ip=10.0.0.1\tdst_ip=10.0.0.2\tsize=64\tdir=Inbound",
                &alert, &fired) == NETCAL_OK);
    }
    netcal_stream_free(stream);
  }

  SUBCASE("alpha calibration returns a grid value and threshold") {
    testutil::TempDir scratch;
    auto benign_json = scratch.write("benign.json", [] {
      std::string s = kScenarioJson;
      auto pos = s.find("\"anomaly_source\"");
      auto end = s.find("\"injection_time\"");
      s.erase(pos, end - pos);
      return s;
    }());
    auto benign_trace = scratch.file("benign.trace");
    REQUIRE(netcal_simulate(benign_json.c_str(), NETCAL_KIND_PACKET, 123, benign_trace.c_str()) ==
            NETCAL_OK);
    auto attack_json = scratch.write("attack.json", kScenarioJson);
    auto attack_trace = scratch.file("attack.trace");
    REQUIRE(netcal_simulate(attack_json.c_str(), NETCAL_KIND_PACKET, 124, attack_trace.c_str()) ==
            NETCAL_OK);

    double alpha = 0.0, threshold = 0.0;
    REQUIRE(netcal_calibrate_alpha(artifacts.bundle_dir.c_str(), benign_trace.c_str(),
                                   attack_trace.c_str(), 0.05, &alpha, &threshold) == NETCAL_OK);
    CHECK(alpha >= 0.05);
    CHECK(alpha <= 1.0);
    CHECK(threshold > 0.0);
  }
}

TEST_CASE("experiment runner through the C ABI") {
  testutil::TempDir tmp;
  auto benign_json = tmp.write("benign.json", [] {
    std::string s = kScenarioJson;
    auto pos = s.find("\"anomaly_source\"");
    auto end = s.find("\"injection_time\"");
    s.erase(pos, end - pos);
    return s;
  }());
  auto attack_json = tmp.write("attack.json", [] {
    std::string s = kScenarioJson;
    // pure anomaly trace: move injection to the start
    auto pos = s.find("\"injection_time\": 30.0");
    s.replace(pos, std::string("\"injection_time\": 30.0").size(), "\"injection_time\": 0.0");
    return s;
  }());

  auto train = tmp.file("train.trace");
  auto eval_benign = tmp.file("eval_benign.trace");
  auto eval_attack = tmp.file("eval_attack.trace");
  REQUIRE(netcal_simulate(benign_json.c_str(), NETCAL_KIND_PACKET, 7, train.c_str()) == NETCAL_OK);
  REQUIRE(netcal_simulate(benign_json.c_str(), NETCAL_KIND_PACKET, 8, eval_benign.c_str()) ==
          NETCAL_OK);
  REQUIRE(netcal_simulate(attack_json.c_str(), NETCAL_KIND_PACKET, 9, eval_attack.c_str()) ==
          NETCAL_OK);

  std::string config = std::string(R"({
    "kind": "packet",
    "window_length": 20,
    "train_trace": ")") + train + R"(",
    "eval_benign": [")" + eval_benign + R"("],
    "eval_anomaly": [")" + eval_attack + R"("],
    "variants": [{"mutation_rate": 0.1}],
    "contaminations": [0.05],
    "embedding": {"dim": 16, "epochs": 1, "window_radius": 2},
    "encoder": {"model_dim": 16, "layers": 1, "heads": 2, "max_positions": 20},
    "train": {"batch_size": 16, "learning_rate": 0.001, "epochs": 1},
    "scorer": {"trees": 50},
    "seed": 5
  })";
  auto config_path = tmp.write("experiment.json", config);

  char* report = nullptr;
  REQUIRE(netcal_experiment_run(config_path.c_str(), &report) == NETCAL_OK);
  REQUIRE(report != nullptr);
  std::string text(report);
  netcal_string_free(report);
  CHECK(text.find("eval_benign") != std::string::npos);
  CHECK(text.find("eval_attack") != std::string::npos);
  CHECK(text.find("m=0.1") != std::string::npos);

  SUBCASE("missing config is a runtime error") {
    CHECK(netcal_experiment_run(tmp.file("missing.json").c_str(), nullptr) == NETCAL_ERR_RUNTIME);
  }
}
