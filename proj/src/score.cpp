#include "netcal/score.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>

namespace netcal {

namespace {

constexpr double kEulerMascheroni = 0.5772156649015329;

constexpr std::uint32_t kScorerMagic = 0x4e435343u;  // "NCSC"
constexpr std::uint32_t kScorerVersion = 1;

void write_bytes(std::ostream& out, const void* p, std::size_t n) {
  out.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
}

void read_bytes(std::istream& in, void* p, std::size_t n, const char* what) {
  in.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
  if (in.gcount() != static_cast<std::streamsize>(n)) {
    fail_validation(std::string("scorer file truncated reading ") + what);
  }
}

void write_u32(std::ostream& out, std::uint32_t v) { write_bytes(out, &v, 4); }
void write_i32(std::ostream& out, std::int32_t v) { write_bytes(out, &v, 4); }
void write_f64(std::ostream& out, double v) { write_bytes(out, &v, 8); }

std::uint32_t read_u32(std::istream& in, const char* what) {
  std::uint32_t v = 0;
  read_bytes(in, &v, 4, what);
  return v;
}
std::int32_t read_i32(std::istream& in, const char* what) {
  std::int32_t v = 0;
  read_bytes(in, &v, 4, what);
  return v;
}
double read_f64(std::istream& in, const char* what) {
  double v = 0;
  read_bytes(in, &v, 8, what);
  return v;
}

struct TreeBuilder {
  const Eigen::MatrixXd& data;
  std::mt19937_64 rng;
  int height_limit;
  IsolationForest::Tree tree;

  int build(std::vector<int>& rows, int depth) {
    int node_index = static_cast<int>(tree.nodes.size());
    tree.nodes.push_back({});
    IsolationForest::Node& placeholder = tree.nodes.back();
    placeholder.size = static_cast<int>(rows.size());

    if (rows.size() <= 1 || depth >= height_limit) return node_index;

    // Candidate dimensions are those with spread inside this node.
    const int dim = static_cast<int>(data.cols());
    std::vector<int> candidates;
    std::vector<double> lo(static_cast<std::size_t>(dim)), hi(static_cast<std::size_t>(dim));
    for (int d = 0; d < dim; ++d) {
      double mn = data(rows[0], d), mx = mn;
      for (std::size_t i = 1; i < rows.size(); ++i) {
        double v = data(rows[i], d);
        mn = std::min(mn, v);
        mx = std::max(mx, v);
      }
      lo[static_cast<std::size_t>(d)] = mn;
      hi[static_cast<std::size_t>(d)] = mx;
      if (mx > mn) candidates.push_back(d);
    }
    if (candidates.empty()) return node_index;  // all points identical

    std::uniform_int_distribution<std::size_t> pick_dim(0, candidates.size() - 1);
    int feature = candidates[pick_dim(rng)];
    double mn = lo[static_cast<std::size_t>(feature)], mx = hi[static_cast<std::size_t>(feature)];
    std::uniform_real_distribution<double> pick_split(mn, mx);
    double split = pick_split(rng);
    while (!(split > mn)) split = pick_split(rng);  // keep both children nonempty

    std::vector<int> left_rows, right_rows;
    for (int r : rows) {
      (data(r, feature) < split ? left_rows : right_rows).push_back(r);
    }
    rows.clear();
    rows.shrink_to_fit();

    int left = build(left_rows, depth + 1);
    int right = build(right_rows, depth + 1);
    IsolationForest::Node& node = tree.nodes[static_cast<std::size_t>(node_index)];
    node.feature = feature;
    node.split = split;
    node.left = left;
    node.right = right;
    return node_index;
  }
};

double tree_path_length(const IsolationForest::Tree& tree, const Eigen::VectorXd& x) {
  int index = 0;
  int depth = 0;
  for (;;) {
    const IsolationForest::Node& node = tree.nodes[static_cast<std::size_t>(index)];
    if (node.feature < 0) return depth + average_path_length(node.size);
    index = x(node.feature) < node.split ? node.left : node.right;
    ++depth;
  }
}

}  // namespace

double average_path_length(double n) {
  if (n <= 1.0) return 0.0;
  if (n == 2.0) return 1.0;
  return 2.0 * (std::log(n - 1.0) + kEulerMascheroni) - 2.0 * (n - 1.0) / n;
}

double score_from_path_length(double mean_path, int psi) {
  double c = average_path_length(static_cast<double>(psi));
  if (c <= 0.0) c = 1.0;
  return std::pow(2.0, -mean_path / c);
}

IsolationForest IsolationForest::fit(const Eigen::MatrixXd& X, const Config& cfg) {
  if (X.rows() < 2) fail_validation("isolation forest needs at least 2 training points");
  if (cfg.tree_count < 1 || cfg.subsample < 2) {
    fail_validation("isolation forest needs >= 1 tree and subsample >= 2");
  }
  if (!X.allFinite()) fail_validation("non-finite values in isolation forest training data");

  IsolationForest forest;
  forest.dim_ = static_cast<int>(X.cols());
  forest.psi_ = std::min<int>(cfg.subsample, static_cast<int>(X.rows()));
  int height_limit = static_cast<int>(std::ceil(std::log2(static_cast<double>(forest.psi_))));

  std::vector<int> all(static_cast<std::size_t>(X.rows()));
  std::iota(all.begin(), all.end(), 0);

  forest.trees_.reserve(static_cast<std::size_t>(cfg.tree_count));
  for (int t = 0; t < cfg.tree_count; ++t) {
    std::mt19937_64 rng(mix_seed(cfg.seed, static_cast<std::uint64_t>(t)));
    std::vector<int> rows = all;
    for (int i = 0; i < forest.psi_; ++i) {
      std::uniform_int_distribution<std::size_t> pick(static_cast<std::size_t>(i), rows.size() - 1);
      std::swap(rows[static_cast<std::size_t>(i)], rows[pick(rng)]);
    }
    rows.resize(static_cast<std::size_t>(forest.psi_));

    TreeBuilder builder{X, std::mt19937_64(mix_seed(cfg.seed, 0xbeef00 + static_cast<std::uint64_t>(t))),
                        height_limit, {}};
    builder.build(rows, 0);
    forest.trees_.push_back(std::move(builder.tree));
  }
  return forest;
}

double IsolationForest::mean_path_length(const Eigen::VectorXd& x) const {
  if (x.size() != dim_) {
    fail_validation("feature dim " + std::to_string(x.size()) + " does not match forest dim " +
                    std::to_string(dim_));
  }
  double total = 0.0;
  for (const auto& tree : trees_) total += tree_path_length(tree, x);
  return total / static_cast<double>(trees_.size());
}

double IsolationForest::score(const Eigen::VectorXd& x) const {
  return score_from_path_length(mean_path_length(x), psi_);
}

void IsolationForest::write(std::ostream& out) const {
  write_u32(out, static_cast<std::uint32_t>(psi_));
  write_u32(out, static_cast<std::uint32_t>(dim_));
  write_u32(out, static_cast<std::uint32_t>(trees_.size()));
  for (const auto& tree : trees_) {
    write_u32(out, static_cast<std::uint32_t>(tree.nodes.size()));
    for (const auto& node : tree.nodes) {
      write_i32(out, node.feature);
      write_f64(out, node.split);
      write_i32(out, node.left);
      write_i32(out, node.right);
      write_i32(out, node.size);
    }
  }
}

IsolationForest IsolationForest::read(std::istream& in) {
  IsolationForest forest;
  forest.psi_ = static_cast<int>(read_u32(in, "psi"));
  forest.dim_ = static_cast<int>(read_u32(in, "dim"));
  std::uint32_t tree_count = read_u32(in, "tree count");
  forest.trees_.resize(tree_count);
  for (auto& tree : forest.trees_) {
    std::uint32_t node_count = read_u32(in, "node count");
    tree.nodes.resize(node_count);
    for (auto& node : tree.nodes) {
      node.feature = read_i32(in, "feature");
      node.split = read_f64(in, "split");
      node.left = read_i32(in, "left");
      node.right = read_i32(in, "right");
      node.size = read_i32(in, "size");
      if (node.feature >= 0 &&
          (node.left < 0 || node.right < 0 || node.left >= static_cast<int>(node_count) ||
           node.right >= static_cast<int>(node_count))) {
        fail_validation("scorer file has a corrupt tree node");
      }
    }
  }
  return forest;
}

void ScoringConfig::validate() const {
  if (!(contamination > 0.0) || !(contamination < 0.5)) {
    fail_validation("contamination must be in (0, 0.5)");
  }
  if (mode == FeatureMode::PairwiseCosine && reference_count < 1) {
    fail_validation("pairwise-cosine mode needs at least 1 reference embedding");
  }
}

std::size_t DetectResult::flagged() const {
  return static_cast<std::size_t>(std::count(flags.begin(), flags.end(), true));
}

double quantile_threshold(std::span<const double> scores, double contamination) {
  if (scores.empty()) fail_validation("cannot take a quantile of zero scores");
  std::vector<double> sorted(scores.begin(), scores.end());
  std::sort(sorted.begin(), sorted.end());
  const auto n = static_cast<double>(sorted.size());
  // Relative slack keeps ceil from overshooting when (1-c)*n is an exact
  // integer that rounds up in floating point.
  auto rank = static_cast<std::size_t>(std::ceil((1.0 - contamination) * n * (1.0 - 1e-12)));
  rank = std::min(std::max<std::size_t>(rank, 1), sorted.size());
  return sorted[rank - 1];
}

ScorerModel ScorerModel::fit(const Eigen::MatrixXd& benign_embeddings, const ScoringConfig& cfg) {
  cfg.validate();
  if (benign_embeddings.rows() < 2) fail_validation("scorer fit needs at least 2 benign embeddings");

  ScorerModel model;
  model.mode_ = cfg.mode;
  model.contamination_ = cfg.contamination;

  if (cfg.mode == FeatureMode::PairwiseCosine) {
    // Uniform sample of benign embeddings forms the fixed reference set.
    const auto n = static_cast<std::size_t>(benign_embeddings.rows());
    auto k = std::min<std::size_t>(static_cast<std::size_t>(cfg.reference_count), n);
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    std::mt19937_64 rng(mix_seed(cfg.seed, 0x2ef));
    for (std::size_t i = 0; i < k; ++i) {
      std::uniform_int_distribution<std::size_t> pick(i, n - 1);
      std::swap(idx[i], idx[pick(rng)]);
    }
    model.reference_.resize(static_cast<Eigen::Index>(k), benign_embeddings.cols());
    for (std::size_t i = 0; i < k; ++i) {
      model.reference_.row(static_cast<Eigen::Index>(i)) = benign_embeddings.row(static_cast<Eigen::Index>(idx[i]));
    }
  }

  Eigen::MatrixXd features(benign_embeddings.rows(),
                           cfg.mode == FeatureMode::RawEmbedding ? benign_embeddings.cols()
                                                                 : model.reference_.rows());
  for (Eigen::Index r = 0; r < benign_embeddings.rows(); ++r) {
    features.row(r) = model.featurize(benign_embeddings.row(r).transpose()).transpose();
  }

  IsolationForest::Config fcfg = cfg.forest;
  fcfg.seed = mix_seed(cfg.seed, 0xf02e);
  model.forest_ = IsolationForest::fit(features, fcfg);

  model.train_scores_.resize(static_cast<std::size_t>(features.rows()));
  for (Eigen::Index r = 0; r < features.rows(); ++r) {
    model.train_scores_[static_cast<std::size_t>(r)] = model.forest_.score(features.row(r).transpose());
  }
  std::sort(model.train_scores_.begin(), model.train_scores_.end());
  model.threshold_ = quantile_threshold(model.train_scores_, cfg.contamination);
  return model;
}

ScorerModel ScorerModel::retarget(double contamination) const {
  if (!(contamination > 0.0) || !(contamination < 0.5)) {
    fail_validation("contamination must be in (0, 0.5)");
  }
  if (train_scores_.empty()) {
    fail_validation("retarget requires a freshly fit scorer (training scores unavailable)");
  }
  ScorerModel out = *this;
  out.contamination_ = contamination;
  out.threshold_ = quantile_threshold(train_scores_, contamination);
  return out;
}

Eigen::VectorXd ScorerModel::featurize(const Eigen::VectorXd& embedding) const {
  if (mode_ == FeatureMode::RawEmbedding) return embedding;
  if (embedding.size() != reference_.cols()) {
    fail_validation("embedding dim does not match the scorer reference set");
  }
  Eigen::VectorXd out(reference_.rows());
  double norm = embedding.norm();
  for (Eigen::Index k = 0; k < reference_.rows(); ++k) {
    double denom = norm * reference_.row(k).norm();
    out(k) = denom > 0.0 ? reference_.row(k).dot(embedding) / denom : 0.0;
  }
  return out;
}

double ScorerModel::anomaly_score(const Eigen::VectorXd& embedding) const {
  return forest_.score(featurize(embedding));
}

DetectResult ScorerModel::detect(const Eigen::MatrixXd& embeddings) const {
  DetectResult result;
  result.scores.reserve(static_cast<std::size_t>(embeddings.rows()));
  result.flags.reserve(static_cast<std::size_t>(embeddings.rows()));
  for (Eigen::Index r = 0; r < embeddings.rows(); ++r) {
    double s = anomaly_score(embeddings.row(r).transpose());
    result.scores.push_back(s);
    result.flags.push_back(s > threshold_);
  }
  return result;
}

void ScorerModel::save(const std::string& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail_runtime("cannot open '" + path + "' for writing");
  write_u32(out, kScorerMagic);
  write_u32(out, kScorerVersion);
  write_u32(out, mode_ == FeatureMode::RawEmbedding ? 0u : 1u);
  write_f64(out, contamination_);
  write_f64(out, threshold_);
  write_u32(out, static_cast<std::uint32_t>(reference_.rows()));
  write_u32(out, static_cast<std::uint32_t>(reference_.cols()));
  for (Eigen::Index r = 0; r < reference_.rows(); ++r) {
    for (Eigen::Index c = 0; c < reference_.cols(); ++c) write_f64(out, reference_(r, c));
  }
  forest_.write(out);
  if (!out) fail_runtime("I/O error writing '" + path + "'");
}

ScorerModel ScorerModel::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail_runtime("cannot open scorer file '" + path + "'");
  if (read_u32(in, "magic") != kScorerMagic) fail_validation("'" + path + "' is not a scorer file");
  std::uint32_t version = read_u32(in, "version");
  if (version != kScorerVersion) {
    fail_validation("scorer version " + std::to_string(version) + " unsupported (expected " +
                    std::to_string(kScorerVersion) + ")");
  }
  ScorerModel model;
  model.mode_ = read_u32(in, "mode") == 0 ? FeatureMode::RawEmbedding : FeatureMode::PairwiseCosine;
  model.contamination_ = read_f64(in, "contamination");
  model.threshold_ = read_f64(in, "threshold");
  std::uint32_t rows = read_u32(in, "reference rows"), cols = read_u32(in, "reference cols");
  model.reference_.resize(rows, cols);
  for (std::uint32_t r = 0; r < rows; ++r) {
    for (std::uint32_t c = 0; c < cols; ++c) model.reference_(r, c) = read_f64(in, "reference data");
  }
  model.forest_ = IsolationForest::read(in);
  return model;
}

}  // namespace netcal
