#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "netcal/dataset.hpp"
#include "netcal/embed.hpp"

namespace netcal {

struct EncoderConfig {
  int input_dim = 64;
  int model_dim = 128;
  int layers = 2;
  int heads = 2;
  int ff_dim = 0;  // 0 means 4 * model_dim
  int max_positions = 512;
  double dropout = 0.1;
  std::uint64_t seed = 1;

  int effective_ff_dim() const { return ff_dim > 0 ? ff_dim : 4 * model_dim; }
  void validate() const;  // model_dim divisible by heads, positive sizes
};

struct TrainConfig {
  double margin = 0.1;
  int batch_size = 32;
  double learning_rate = 1e-6;
  double weight_decay = 0.1;
  int epochs = 1;
  std::uint64_t seed = 1;

  void validate() const;
};

// Hinge loss on cosine similarities of unit-norm embeddings:
//   max(0, -cos(a,p) + cos(a,n) + margin)
double triplet_loss(const Eigen::VectorXd& a, const Eigen::VectorXd& p,
                    const Eigen::VectorXd& n, double margin);

struct Param {
  std::string name;
  Eigen::MatrixXd value;
  Eigen::MatrixXd grad;
};

// Transformer encoder over pre-embedded token windows: input projection,
// LayerNorm, learned positional embeddings, post-LN self-attention blocks,
// mean pooling and l2 normalization of the pooled vector.
//
// Weights are doubles that always carry float32-representable values so the
// binary model format round-trips without behavioral drift.
class EncoderModel {
 public:
  explicit EncoderModel(const EncoderConfig& cfg);
  EncoderModel(const EncoderModel&);
  EncoderModel& operator=(const EncoderModel&);
  EncoderModel(EncoderModel&&) noexcept;
  EncoderModel& operator=(EncoderModel&&) noexcept;
  ~EncoderModel();

  const EncoderConfig& config() const;

  // Inference path: dropout off, deterministic. Output has unit l2 norm.
  Eigen::VectorXd encode(const Eigen::MatrixXd& window) const;  // T x input_dim
  Eigen::VectorXd encode_ids(std::span<const std::int32_t> ids,
                             const EmbeddingTable& table) const;

  // Contrastive training on anchor/positive/negative windows. Batch loss is
  // the mean hinge over the batch; optimization is Adam with decoupled weight
  // decay. Returns per-batch losses. Aborts on non-finite loss.
  std::vector<double> train(const std::vector<Triplet>& triplets, const EmbeddingTable& table,
                            const TrainConfig& cfg);

  // Loss and analytic parameter gradients for one raw triplet, dropout off.
  // Exposed for gradient verification.
  double loss_and_gradients(const Eigen::MatrixXd& anchor, const Eigen::MatrixXd& positive,
                            const Eigen::MatrixXd& negative, double margin);

  std::vector<Param>& parameters();
  const std::vector<Param>& parameters() const;

  void save(const std::string& path) const;
  static EncoderModel load(const std::string& path);

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

struct GradCheckResult {
  double max_rel_error = 0.0;
  double loss = 0.0;
  bool hinge_active = false;
  std::string worst_param;
};

// Central finite differences (step 1e-4) against analytic gradients over
// every parameter. Triplets sampled at the hinge boundary (|slack| < 1e-6)
// are rejected and resampled.
GradCheckResult grad_check(const EncoderConfig& cfg, int window_len, std::uint64_t seed);

}  // namespace netcal
