#include "netcal/pipeline.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "json.hpp"

namespace netcal {

namespace fs = std::filesystem;

void save_bundle(const std::string& dir, const DetectorBundle& bundle) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) fail_runtime("cannot create directory '" + dir + "': " + ec.message());

  bundle.vocab.save(dir + "/vocab.txt");
  save_embeddings(dir + "/embeddings.txt", bundle.embeddings, bundle.vocab);
  bundle.encoder.save(dir + "/encoder.bin");
  bundle.scorer.save(dir + "/scorer.bin");
  save_rules(dir + "/rules.json", bundle.rules);
  if (!bundle.syscall_table.empty()) {
    std::ofstream out(dir + "/syscalls.tsv");
    if (!out) fail_runtime("cannot write syscall table");
    for (const auto& [name, cat] : std::map<std::string, std::string>(bundle.syscall_table.begin(),
                                                                      bundle.syscall_table.end())) {
      out << name << '\t' << cat << '\n';
    }
  }

  nlohmann::json meta;
  meta["kind"] = bundle.kind == TraceKind::Packet ? "packet" : "syscall";
  meta["window_length"] = bundle.window_length;
  std::ofstream out(dir + "/meta.json");
  if (!out) fail_runtime("cannot write bundle metadata");
  out << meta.dump(2) << '\n';
}

DetectorBundle load_bundle(const std::string& dir) {
  std::ifstream meta_in(dir + "/meta.json");
  if (!meta_in) fail_runtime("cannot open bundle metadata '" + dir + "/meta.json'");
  nlohmann::json meta;
  try {
    meta_in >> meta;
  } catch (const nlohmann::json::exception& e) {
    fail_validation("bundle metadata: " + std::string(e.what()));
  }

  DetectorBundle bundle{
      .kind = meta.at("kind").get<std::string>() == "packet" ? TraceKind::Packet : TraceKind::Syscall,
      .window_length = meta.at("window_length").get<std::size_t>(),
      .rules = AbstractionRules::defaults(),
      .syscall_table = {},
      .vocab = Vocabulary::load(dir + "/vocab.txt"),
      .embeddings = {},
      .encoder = EncoderModel::load(dir + "/encoder.bin"),
      .scorer = ScorerModel::load(dir + "/scorer.bin"),
  };
  bundle.embeddings = load_embeddings(dir + "/embeddings.txt", &bundle.vocab);
  if (fs::exists(dir + "/rules.json")) bundle.rules = load_rules(dir + "/rules.json");
  if (fs::exists(dir + "/syscalls.tsv")) bundle.syscall_table = load_syscall_table(dir + "/syscalls.tsv");
  return bundle;
}

std::vector<std::string> tokenize_trace(const Trace& trace, const AbstractionRules& rules,
                                        const SyscallTable& table) {
  std::vector<std::string> out;
  out.reserve(trace.size());
  if (trace.kind == TraceKind::Packet) {
    for (const auto& rec : trace.packets) out.push_back(tokenize_packet(rec, rules));
  } else {
    for (const auto& rec : trace.syscalls) out.push_back(tokenize_syscall(rec, table));
  }
  return out;
}

std::vector<std::int32_t> ids_of(const std::vector<std::string>& texts, const Vocabulary& vocab) {
  std::vector<std::int32_t> ids;
  ids.reserve(texts.size());
  for (const auto& t : texts) ids.push_back(static_cast<std::int32_t>(vocab.id_of(t)));
  return ids;
}

Eigen::MatrixXd embed_windows(std::span<const std::int32_t> ids, std::size_t window_length,
                              const EmbeddingTable& table, const EncoderModel& encoder) {
  auto windows = segment(ids, window_length);
  Eigen::MatrixXd out(static_cast<Eigen::Index>(windows.size()), encoder.config().model_dim);
  for (std::size_t i = 0; i < windows.size(); ++i) {
    out.row(static_cast<Eigen::Index>(i)) = encoder.encode_ids(windows[i].ids, table).transpose();
  }
  return out;
}

void ExperimentConfig::validate() const {
  if (train_trace.empty()) fail_validation("experiment config: train_trace is required");
  if (window_length == 0) fail_validation("experiment config: window_length must be positive");
  if (variants.empty()) fail_validation("experiment config: at least one variant is required");
  if (contaminations.empty()) fail_validation("experiment config: contamination list is empty");
  for (double c : contaminations) {
    if (!(c > 0.0) || !(c < 0.5)) fail_validation("experiment config: contamination must be in (0,0.5)");
  }
  if (eval_benign.empty() && eval_anomaly.empty()) {
    fail_validation("experiment config: no evaluation traces configured");
  }
}

ExperimentConfig load_experiment_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail_runtime("cannot open experiment config '" + path + "'");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    fail_validation("experiment config '" + path + "': " + e.what());
  }

  ExperimentConfig cfg;
  try {
    cfg.kind = j.value("kind", std::string("packet")) == "syscall" ? TraceKind::Syscall : TraceKind::Packet;
    cfg.window_length = j.value("window_length", cfg.kind == TraceKind::Syscall ? 500u : 100u);
    cfg.train_trace = j.at("train_trace").get<std::string>();
    for (const auto& p : j.value("eval_benign", nlohmann::json::array())) cfg.eval_benign.push_back(p);
    for (const auto& p : j.value("eval_anomaly", nlohmann::json::array())) cfg.eval_anomaly.push_back(p);
    if (j.contains("variants")) {
      for (const auto& vj : j.at("variants")) {
        VariantConfig v;
        v.mutation_rate = vj.value("mutation_rate", 0.1);
        v.strategy = vj.value("strategy", std::string("random")) == "hard"
                         ? NegativeStrategy::HardMined
                         : NegativeStrategy::RandomFuture;
        cfg.variants.push_back(v);
      }
    } else {
      cfg.variants = {{0.0, NegativeStrategy::RandomFuture},
                      {0.1, NegativeStrategy::RandomFuture},
                      {0.2, NegativeStrategy::RandomFuture}};
    }
    for (const auto& c : j.value("contaminations", nlohmann::json::array({0.005, 0.015, 0.025}))) {
      cfg.contaminations.push_back(c.get<double>());
    }
    cfg.feature_mode = j.value("feature_mode", std::string("raw")) == "paircos"
                           ? FeatureMode::PairwiseCosine
                           : FeatureMode::RawEmbedding;
    if (j.contains("max_events")) cfg.max_events = j.at("max_events").get<std::size_t>();
    cfg.rules_path = j.value("rules", std::string());
    cfg.syscall_table_path = j.value("syscall_table", std::string());
    cfg.out_dir = j.value("out_dir", std::string());
    cfg.seed = j.value("seed", std::uint64_t{1});

    if (j.contains("embedding")) {
      const auto& e = j.at("embedding");
      cfg.embedding_dim = e.value("dim", 64);
      cfg.fixed_random_embeddings = e.value("fixed_random", false);
      cfg.skipgram.window_radius = e.value("window_radius", 5);
      cfg.skipgram.negatives_per_positive = e.value("negatives", 5);
      cfg.skipgram.epochs = e.value("epochs", 5);
      cfg.skipgram.learning_rate = e.value("learning_rate", 0.025);
    }
    if (j.contains("encoder")) {
      const auto& e = j.at("encoder");
      cfg.encoder.model_dim = e.value("model_dim", 128);
      cfg.encoder.layers = e.value("layers", 2);
      cfg.encoder.heads = e.value("heads", 2);
      cfg.encoder.ff_dim = e.value("ff_dim", 0);
      cfg.encoder.max_positions = e.value("max_positions", 512);
      cfg.encoder.dropout = e.value("dropout", 0.1);
    }
    if (j.contains("train")) {
      const auto& t = j.at("train");
      cfg.train.margin = t.value("margin", 0.1);
      cfg.train.batch_size = t.value("batch_size", 32);
      cfg.train.learning_rate = t.value("learning_rate", 1e-6);
      cfg.train.weight_decay = t.value("weight_decay", 0.1);
      cfg.train.epochs = t.value("epochs", 1);
    }
    if (j.contains("scorer")) {
      const auto& s = j.at("scorer");
      cfg.scoring.forest.tree_count = s.value("trees", 100);
      cfg.scoring.forest.subsample = s.value("subsample", 256);
      cfg.scoring.reference_count = s.value("reference_count", 64);
    }
  } catch (const nlohmann::json::exception& e) {
    fail_validation("experiment config '" + path + "': " + e.what());
  }
  cfg.validate();
  return cfg;
}

std::string ReportTable::render_text() const {
  // Shape follows the evaluation tables: one row per dataset, one column per
  // (contamination, variant) pair.
  std::vector<std::string> datasets;
  std::vector<std::pair<double, std::string>> columns;
  std::map<std::pair<std::string, std::pair<double, std::string>>, const ReportCell*> by_key;
  for (const auto& cell : cells) {
    if (std::find(datasets.begin(), datasets.end(), cell.dataset) == datasets.end()) {
      datasets.push_back(cell.dataset);
    }
    auto col = std::make_pair(cell.contamination, cell.variant);
    if (std::find(columns.begin(), columns.end(), col) == columns.end()) columns.push_back(col);
    by_key[{cell.dataset, col}] = &cell;
  }

  std::size_t name_width = 8;
  for (const auto& d : datasets) name_width = std::max(name_width, d.size());

  std::ostringstream out;
  char buf[64];
  out << std::string(name_width, ' ');
  for (const auto& [c, v] : columns) {
    std::snprintf(buf, sizeof(buf), "  %10s", (format_contamination(c) + "/" + v).c_str());
    out << buf;
  }
  out << '\n';
  for (const auto& d : datasets) {
    out << d << std::string(name_width - d.size(), ' ');
    for (const auto& col : columns) {
      auto it = by_key.find({d, col});
      if (it == by_key.end()) {
        std::snprintf(buf, sizeof(buf), "  %10s", "-");
      } else {
        std::snprintf(buf, sizeof(buf), "  %9.2f%%", it->second->rate_percent);
      }
      out << buf;
    }
    out << '\n';
  }
  return out.str();
}

std::string ReportTable::format_contamination(double c) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%g", c);
  return buf;
}

void ReportTable::write_tsv(const std::string& path) const {
  std::ofstream out(path);
  if (!out) fail_runtime("cannot open '" + path + "' for writing");
  out << "dataset\tcontamination\tvariant\tkind\twindows\trate_percent\n";
  char buf[64];
  for (const auto& cell : cells) {
    std::snprintf(buf, sizeof(buf), "%g\t%s\t%s\t%zu\t%.4f", cell.contamination,
                  cell.variant.c_str(), cell.is_benign ? "benign" : "anomaly", cell.windows,
                  cell.rate_percent);
    out << cell.dataset << '\t' << buf << '\n';
  }
  if (!out) fail_runtime("I/O error writing '" + path + "'");
}

namespace {

Trace load_and_truncate(const std::string& path, TraceKind kind,
                        const std::optional<std::size_t>& max_events) {
  Trace trace = load_trace(path, kind).trace;
  if (max_events) {
    if (trace.packets.size() > *max_events) trace.packets.resize(*max_events);
    if (trace.syscalls.size() > *max_events) trace.syscalls.resize(*max_events);
  }
  return trace;
}

std::string variant_name(const VariantConfig& v) {
  char buf[48];
  std::snprintf(buf, sizeof(buf), "m=%g%s", v.mutation_rate,
                v.strategy == NegativeStrategy::HardMined ? ",hard" : "");
  return buf;
}

}  // namespace

ExperimentResult run_experiment(const ExperimentConfig& cfg) {
  cfg.validate();

  AbstractionRules rules =
      cfg.rules_path.empty() ? AbstractionRules::defaults() : load_rules(cfg.rules_path);
  SyscallTable table =
      cfg.syscall_table_path.empty() ? SyscallTable{} : load_syscall_table(cfg.syscall_table_path);

  Trace train_trace = load_and_truncate(cfg.train_trace, cfg.kind, cfg.max_events);
  auto train_tokens = tokenize_trace(train_trace, rules, table);

  struct EvalSet {
    std::string name;
    std::vector<std::string> tokens;
    bool benign;
  };
  std::vector<EvalSet> evals;
  for (const auto& path : cfg.eval_benign) {
    Trace t = load_trace(path, cfg.kind).trace;
    evals.push_back({fs::path(path).stem().string(), tokenize_trace(t, rules, table), true});
  }
  for (const auto& path : cfg.eval_anomaly) {
    Trace t = load_trace(path, cfg.kind).trace;
    evals.push_back({fs::path(path).stem().string(), tokenize_trace(t, rules, table), false});
  }

  // The vocabulary covers every token observed across the dataset, with no
  // label involved; only the benign training stream feeds model training.
  Vocabulary vocab;
  for (const auto& t : train_tokens) vocab.add(t);
  for (const auto& ev : evals) {
    for (const auto& t : ev.tokens) vocab.add(t);
  }

  auto train_ids = ids_of(train_tokens, vocab);

  EmbeddingTable embeddings;
  if (cfg.fixed_random_embeddings) {
    embeddings = fixed_random_embeddings(vocab, cfg.embedding_dim, mix_seed(cfg.seed, 0xe3));
  } else {
    SkipGramConfig sg = cfg.skipgram;
    sg.seed = mix_seed(cfg.seed, 0xe3);
    embeddings = train_embeddings(train_ids, vocab, sg, cfg.embedding_dim).table;
  }

  auto train_windows = segment(train_ids, cfg.window_length);
  if (train_windows.size() < 3) {
    fail_validation("training trace yields fewer than 3 windows; not enough for triplets");
  }

  ExperimentResult result;
  for (std::size_t vi = 0; vi < cfg.variants.size(); ++vi) {
    const VariantConfig& variant = cfg.variants[vi];
    std::string vname = variant_name(variant);

    EncoderConfig enc_cfg = cfg.encoder;
    enc_cfg.input_dim = cfg.embedding_dim;
    enc_cfg.max_positions = std::max<int>(enc_cfg.max_positions, static_cast<int>(cfg.window_length));
    enc_cfg.seed = mix_seed(cfg.seed, 0xec0);
    EncoderModel encoder(enc_cfg);

    AugmentationConfig aug;
    aug.mutation_rate = variant.mutation_rate;
    aug.strategy = variant.strategy;
    aug.seed = mix_seed(cfg.seed, 0x721);
    EncodeFn encode_fn = [&](const Window& w) { return encoder.encode_ids(w.ids, embeddings); };
    auto triplets = make_triplets(train_windows, aug, vocab,
                                  variant.strategy == NegativeStrategy::HardMined ? &encode_fn : nullptr);

    TrainConfig tc = cfg.train;
    tc.seed = mix_seed(cfg.seed, 0x7a0);
    encoder.train(triplets, embeddings, tc);

    Eigen::MatrixXd benign_embs = embed_windows(train_ids, cfg.window_length, embeddings, encoder);
    ScoringConfig sc = cfg.scoring;
    sc.mode = cfg.feature_mode;
    sc.contamination = cfg.contaminations.front();
    sc.seed = mix_seed(cfg.seed, 0x5c0);
    ScorerModel base = ScorerModel::fit(benign_embs, sc);

    for (double contamination : cfg.contaminations) {
      ScorerModel scorer = base.retarget(contamination);
      for (const auto& ev : evals) {
        auto ids = ids_of(ev.tokens, vocab);
        Eigen::MatrixXd embs = embed_windows(ids, cfg.window_length, embeddings, encoder);
        DetectResult det = scorer.detect(embs);
        ReportCell cell;
        cell.dataset = ev.name;
        cell.contamination = contamination;
        cell.variant = vname;
        cell.is_benign = ev.benign;
        cell.windows = det.scores.size();
        cell.rate_percent = det.scores.empty()
                                ? 0.0
                                : 100.0 * static_cast<double>(det.flagged()) /
                                      static_cast<double>(det.scores.size());
        result.table.cells.push_back(std::move(cell));
      }
    }

    DetectorBundle bundle{
        .kind = cfg.kind,
        .window_length = cfg.window_length,
        .rules = rules,
        .syscall_table = table,
        .vocab = vocab,
        .embeddings = embeddings,
        .encoder = encoder,
        .scorer = base,
    };
    if (!cfg.out_dir.empty()) {
      save_bundle(cfg.out_dir + "/" + vname, bundle);
    }
    result.bundles.push_back(std::move(bundle));
    result.variant_names.push_back(vname);
  }

  if (!cfg.out_dir.empty()) {
    result.table.write_tsv(cfg.out_dir + "/report.tsv");
    std::ofstream out(cfg.out_dir + "/report.txt");
    if (out) out << result.table.render_text();
  }
  return result;
}

}  // namespace netcal
