#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "netcal/common.hpp"

namespace netcal {

// Average unsuccessful-search path length c(n), with the reference
// conventions c(n<=1)=0 and c(2)=1.
double average_path_length(double n);

// s = 2^(-mean_path / c(psi)); larger means easier to isolate, more anomalous.
double score_from_path_length(double mean_path, int psi);

class IsolationForest {
 public:
  struct Config {
    int tree_count = 100;
    int subsample = 256;
    std::uint64_t seed = 1;
  };

  struct Node {
    int feature = -1;     // -1 marks a leaf
    double split = 0.0;
    int left = -1;
    int right = -1;
    int size = 0;         // training points reaching the node
  };

  struct Tree {
    std::vector<Node> nodes;  // nodes[0] is the root
  };

  // Rows of X are training points. Each tree grows on a random subsample with
  // uniform split dimensions and uniform split values, height-limited at
  // ceil(log2(psi)). Throws on fewer than 2 rows.
  static IsolationForest fit(const Eigen::MatrixXd& X, const Config& cfg);

  double mean_path_length(const Eigen::VectorXd& x) const;
  double score(const Eigen::VectorXd& x) const;

  int psi() const { return psi_; }
  int dim() const { return dim_; }
  const std::vector<Tree>& trees() const { return trees_; }

  void write(std::ostream& out) const;
  static IsolationForest read(std::istream& in);

 private:
  std::vector<Tree> trees_;
  int psi_ = 0;
  int dim_ = 0;
};

enum class FeatureMode { RawEmbedding, PairwiseCosine };

struct ScoringConfig {
  double contamination = 0.015;  // in (0, 0.5)
  FeatureMode mode = FeatureMode::RawEmbedding;
  int reference_count = 64;      // PairwiseCosine reference set size K
  IsolationForest::Config forest;
  std::uint64_t seed = 1;

  void validate() const;
};

struct DetectResult {
  std::vector<double> scores;
  std::vector<bool> flags;  // score strictly above threshold

  std::size_t flagged() const;
};

// Isolation forest fit on benign embeddings only, with the threshold at the
// (1 - contamination) nearest-rank quantile of the benign training scores.
class ScorerModel {
 public:
  static ScorerModel fit(const Eigen::MatrixXd& benign_embeddings, const ScoringConfig& cfg);

  // Same forest and reference set, threshold recomputed for a different
  // contamination. Only valid on a freshly fit model (training scores are not
  // persisted).
  ScorerModel retarget(double contamination) const;

  Eigen::VectorXd featurize(const Eigen::VectorXd& embedding) const;
  double anomaly_score(const Eigen::VectorXd& embedding) const;
  DetectResult detect(const Eigen::MatrixXd& embeddings) const;

  FeatureMode mode() const { return mode_; }
  double threshold() const { return threshold_; }
  double contamination() const { return contamination_; }
  const IsolationForest& forest() const { return forest_; }
  const Eigen::MatrixXd& reference() const { return reference_; }

  void save(const std::string& path) const;
  static ScorerModel load(const std::string& path);

 private:
  ScorerModel() = default;

  IsolationForest forest_;
  FeatureMode mode_ = FeatureMode::RawEmbedding;
  Eigen::MatrixXd reference_;  // K x dim, PairwiseCosine only
  double contamination_ = 0.0;
  double threshold_ = 0.0;
  std::vector<double> train_scores_;  // sorted; in-memory only
};

// Nearest-rank upper quantile: the smallest score such that at most a
// contamination-sized fraction of `scores` lies strictly above it.
double quantile_threshold(std::span<const double> scores, double contamination);

}  // namespace netcal
