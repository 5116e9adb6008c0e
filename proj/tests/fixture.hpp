#pragma once

#include <Eigen/Core>

#include "netcal/online.hpp"
#include "netcal/pipeline.hpp"

// Small synthetic detector setups shared by the online, pipeline and
// acceptance suites.
namespace fixture {

using namespace netcal;

// Benign traffic cycles through the first `benign_tokens` alphabet entries
// with heavy self-transitions; anomalous traffic is an IID draw over the
// remaining entries.
inline Scenario make_scenario(std::size_t alphabet_size, std::size_t benign_tokens, double rate,
                              double duration, double injection_time, double anomaly_rate,
                              std::uint64_t seed) {
  Scenario sc;
  sc.alphabet = packet_alphabet(alphabet_size);
  sc.duration = duration;
  sc.injection_time = injection_time;
  sc.seed = seed;

  SourceModel benign;
  benign.kind = SourceModel::Kind::Markov;
  benign.rate = rate;
  benign.pid = 100;
  benign.seed = 1;
  auto n = static_cast<Eigen::Index>(alphabet_size);
  auto b = static_cast<Eigen::Index>(benign_tokens);
  benign.transition = Eigen::MatrixXd::Zero(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    if (i < b) {
      benign.transition(i, i) = 0.5;
      benign.transition(i, (i + 1) % b) = 0.4;
      benign.transition(i, (i + 2) % b) = 0.1;
    } else {
      benign.transition(i, 0) = 1.0;  // unreachable rows still need a distribution
    }
  }
  benign.initial = Eigen::VectorXd::Zero(n);
  benign.initial.head(b).setConstant(1.0 / static_cast<double>(b));
  sc.benign_sources.push_back(benign);

  if (anomaly_rate > 0.0) {
    SourceModel anomaly;
    anomaly.kind = SourceModel::Kind::IID;
    anomaly.rate = anomaly_rate;
    anomaly.pid = 666;
    anomaly.seed = 2;
    anomaly.probs = Eigen::VectorXd::Zero(n);
    anomaly.probs.tail(n - b).setConstant(1.0 / static_cast<double>(n - b));
    sc.anomaly_source = anomaly;
  }
  return sc;
}

struct PipelineOptions {
  std::size_t alphabet_size = 8;
  std::size_t benign_tokens = 6;
  std::size_t window_length = 25;
  int embedding_dim = 16;
  int model_dim = 16;
  double train_duration = 40.0;
  double rate = 200.0;
  double contamination = 0.05;
  double mutation_rate = 0.1;
  bool train_encoder = true;
  int encoder_epochs = 2;
  std::uint64_t seed = 5;
};

struct PipelineFixture {
  Scenario scenario;           // benign-only template
  DetectorBundle bundle;
  std::vector<std::int32_t> train_ids;
};

inline PipelineFixture make_pipeline(const PipelineOptions& opt = {}) {
  Scenario benign_only = make_scenario(opt.alphabet_size, opt.benign_tokens, opt.rate,
                                       opt.train_duration, 0.0, 0.0, opt.seed);
  Trace train = generate(benign_only, TraceKind::Packet);

  AbstractionRules rules = AbstractionRules::defaults();
  Vocabulary vocab;
  for (const auto& text : benign_only.alphabet) vocab.add(text);

  std::vector<std::int32_t> ids;
  ids.reserve(train.packets.size());
  for (const auto& rec : train.packets) {
    ids.push_back(static_cast<std::int32_t>(vocab.id_of(tokenize_packet(rec, rules))));
  }

  EmbeddingTable table = fixed_random_embeddings(vocab, opt.embedding_dim, mix_seed(opt.seed, 1));

  EncoderConfig enc_cfg;
  enc_cfg.input_dim = opt.embedding_dim;
  enc_cfg.model_dim = opt.model_dim;
  enc_cfg.layers = 1;
  enc_cfg.heads = 2;
  enc_cfg.max_positions = static_cast<int>(opt.window_length);
  enc_cfg.dropout = 0.1;
  enc_cfg.seed = mix_seed(opt.seed, 2);
  EncoderModel encoder(enc_cfg);

  auto windows = segment(ids, opt.window_length);
  if (opt.train_encoder && windows.size() >= 3) {
    AugmentationConfig aug;
    aug.mutation_rate = opt.mutation_rate;
    aug.seed = mix_seed(opt.seed, 3);
    auto triplets = make_triplets(windows, aug, vocab);
    TrainConfig tc;
    tc.batch_size = 16;
    tc.learning_rate = 1e-3;
    tc.epochs = opt.encoder_epochs;
    tc.seed = mix_seed(opt.seed, 4);
    encoder.train(triplets, table, tc);
  }

  Eigen::MatrixXd embs = embed_windows(ids, opt.window_length, table, encoder);
  ScoringConfig sc;
  sc.contamination = opt.contamination;
  sc.mode = FeatureMode::RawEmbedding;
  sc.seed = mix_seed(opt.seed, 5);
  ScorerModel scorer = ScorerModel::fit(embs, sc);

  PipelineFixture fx{
      .scenario = std::move(benign_only),
      .bundle =
          DetectorBundle{
              .kind = TraceKind::Packet,
              .window_length = opt.window_length,
              .rules = rules,
              .syscall_table = {},
              .vocab = std::move(vocab),
              .embeddings = std::move(table),
              .encoder = std::move(encoder),
              .scorer = std::move(scorer),
          },
      .train_ids = std::move(ids),
  };
  return fx;
}

}  // namespace fixture
