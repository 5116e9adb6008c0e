#include "netcal/embed.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <random>
#include <sstream>

#include "netcal/common.hpp"

namespace netcal {

namespace {

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// Unigram^0.75 negative-sampling distribution.
std::vector<double> negative_probs(std::span<const std::int32_t> ids, int vocab_size) {
  std::vector<double> weight(static_cast<std::size_t>(vocab_size), 0.0);
  for (std::int32_t id : ids) weight[static_cast<std::size_t>(id)] += 1.0;
  double total = 0.0;
  for (double& w : weight) {
    w = std::pow(w, 0.75);
    total += w;
  }
  for (double& w : weight) w /= total;
  return weight;
}

std::vector<double> cdf_of(const std::vector<double>& probs) {
  std::vector<double> cdf(probs.size());
  double acc = 0.0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    acc += probs[i];
    cdf[i] = acc;
  }
  cdf.back() = 1.0;
  return cdf;
}

// Exact expectation of the negative-sampling objective over the corpus, per
// positive pair. Draws equal to the context token are skipped in training,
// so they contribute nothing here either.
double expected_objective(const Eigen::MatrixXd& in, const Eigen::MatrixXd& out,
                          std::span<const std::int32_t> ids, const SkipGramConfig& cfg,
                          const std::vector<double>& probs) {
  const auto n = static_cast<std::ptrdiff_t>(ids.size());
  const auto k = static_cast<double>(cfg.negatives_per_positive);
  double total = 0.0;
  std::size_t pairs = 0;
  for (std::ptrdiff_t t = 0; t < n; ++t) {
    int center = ids[static_cast<std::size_t>(t)];
    std::ptrdiff_t lo = std::max<std::ptrdiff_t>(0, t - cfg.window_radius);
    std::ptrdiff_t hi = std::min(n - 1, t + cfg.window_radius);
    for (std::ptrdiff_t c = lo; c <= hi; ++c) {
      if (c == t) continue;
      int target = ids[static_cast<std::size_t>(c)];
      double loss = -std::log(std::max(sigmoid(in.row(center).dot(out.row(target))), 1e-12));
      for (std::size_t w = 0; w < probs.size(); ++w) {
        if (static_cast<int>(w) == target || probs[w] == 0.0) continue;
        double dot = in.row(center).dot(out.row(static_cast<Eigen::Index>(w)));
        loss += k * probs[w] * -std::log(std::max(1.0 - sigmoid(dot), 1e-12));
      }
      total += loss;
      ++pairs;
    }
  }
  return pairs ? total / static_cast<double>(pairs) : 0.0;
}

int sample_from_cdf(const std::vector<double>& cdf, double u) {
  auto it = std::lower_bound(cdf.begin(), cdf.end(), u);
  return static_cast<int>(it - cdf.begin());
}

}  // namespace

void SkipGramConfig::validate() const {
  if (window_radius <= 0 || negatives_per_positive <= 0 || epochs <= 0) {
    fail_validation("skip-gram window, negatives and epochs must be positive");
  }
  if (learning_rate < 0.0) fail_validation("skip-gram learning rate must be non-negative");
}

Eigen::VectorXd EmbeddingTable::lookup(int id) const {
  if (id < 0 || id >= count()) {
    fail_validation("embedding id " + std::to_string(id) + " out of range (table size " +
                    std::to_string(count()) + ")");
  }
  return vectors.row(id).transpose();
}

Eigen::MatrixXd EmbeddingTable::lookup_window(std::span<const std::int32_t> ids) const {
  Eigen::MatrixXd out(static_cast<Eigen::Index>(ids.size()), dim);
  for (std::size_t t = 0; t < ids.size(); ++t) {
    int id = ids[t];
    if (id < 0 || id >= count()) {
      fail_validation("embedding id " + std::to_string(id) + " out of range");
    }
    out.row(static_cast<Eigen::Index>(t)) = vectors.row(id);
  }
  return out;
}

double SkipGramResult::pair_score(int a, int b) const {
  return table.vectors.row(a).dot(context.row(b));
}

EmbeddingTable skipgram_init_table(const Vocabulary& vocab, int dim, std::uint64_t seed) {
  if (dim <= 0) fail_validation("embedding dim must be positive");
  EmbeddingTable table;
  table.dim = dim;
  table.source = EmbeddingTable::Source::Learned;
  table.seed = seed;
  int rows = vocab.size() + 1;  // trailing UNK row
  table.vectors.resize(rows, dim);
  std::mt19937_64 rng(mix_seed(seed, 0xe4b));
  std::uniform_real_distribution<double> unif(-0.5 / dim, 0.5 / dim);
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < dim; ++c) table.vectors(r, c) = unif(rng);
  }
  return table;
}

SkipGramResult train_embeddings(std::span<const std::int32_t> ids, const Vocabulary& vocab,
                                const SkipGramConfig& cfg, int dim) {
  cfg.validate();
  if (vocab.size() == 0) fail_validation("cannot train embeddings on an empty vocabulary");
  if (ids.size() < static_cast<std::size_t>(2 * cfg.window_radius + 1)) {
    fail_validation("token stream too short for window radius " + std::to_string(cfg.window_radius));
  }
  for (std::int32_t id : ids) {
    if (id < 0 || id >= vocab.size()) {
      fail_validation("token id " + std::to_string(id) + " outside the vocabulary");
    }
  }

  SkipGramResult result;
  result.table = skipgram_init_table(vocab, dim, cfg.seed);
  result.context = Eigen::MatrixXd::Zero(vocab.size() + 1, dim);

  auto probs = negative_probs(ids, vocab.size());
  auto cdf = cdf_of(probs);
  std::mt19937_64 rng(mix_seed(cfg.seed, 0x5c1));
  std::uniform_real_distribution<double> unif01(0.0, 1.0);

  Eigen::MatrixXd& in = result.table.vectors;
  Eigen::MatrixXd& out = result.context;
  const double lr = cfg.learning_rate;
  const auto n = static_cast<std::ptrdiff_t>(ids.size());

  Eigen::VectorXd accum(dim);
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    for (std::ptrdiff_t t = 0; t < n; ++t) {
      int center = ids[static_cast<std::size_t>(t)];
      std::ptrdiff_t lo = std::max<std::ptrdiff_t>(0, t - cfg.window_radius);
      std::ptrdiff_t hi = std::min(n - 1, t + cfg.window_radius);
      for (std::ptrdiff_t c = lo; c <= hi; ++c) {
        if (c == t) continue;
        int target = ids[static_cast<std::size_t>(c)];
        accum.setZero();

        double pos_dot = in.row(center).dot(out.row(target));
        double pos_g = sigmoid(pos_dot) - 1.0;
        accum += pos_g * out.row(target).transpose();
        out.row(target) -= lr * pos_g * in.row(center);

        for (int k = 0; k < cfg.negatives_per_positive; ++k) {
          int neg = sample_from_cdf(cdf, unif01(rng));
          if (neg == target) continue;  // skip accidental positives
          double neg_dot = in.row(center).dot(out.row(neg));
          double neg_g = sigmoid(neg_dot);
          accum += neg_g * out.row(neg).transpose();
          out.row(neg) -= lr * neg_g * in.row(center);
        }
        in.row(center) -= lr * accum.transpose();
      }
    }
    result.epoch_losses.push_back(expected_objective(in, out, ids, cfg, probs));
  }

  if (!in.allFinite() || !out.allFinite()) fail_runtime("embedding training produced non-finite values");
  return result;
}

EmbeddingTable fixed_random_embeddings(const Vocabulary& vocab, int dim, std::uint64_t seed) {
  if (dim <= 0) fail_validation("embedding dim must be positive");
  EmbeddingTable table;
  table.dim = dim;
  table.source = EmbeddingTable::Source::FixedRandom;
  table.seed = seed;
  int rows = vocab.size() + 1;
  table.vectors.resize(rows, dim);
  std::mt19937_64 rng(mix_seed(seed, 0xf1d));
  std::normal_distribution<double> gauss(0.0, 1.0 / std::sqrt(static_cast<double>(dim)));
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < dim; ++c) table.vectors(r, c) = gauss(rng);
  }
  return table;
}

void save_embeddings(const std::string& path, const EmbeddingTable& table, const Vocabulary& vocab) {
  if (table.count() != vocab.size() + 1) {
    fail_validation("embedding table size does not match vocabulary");
  }
  std::ofstream out(path);
  if (!out) fail_runtime("cannot open '" + path + "' for writing");
  out << "dim=" << table.dim << " count=" << table.count() << '\n';
  char buf[40];
  for (int r = 0; r < table.count(); ++r) {
    out << vocab.text_of(r);
    for (int c = 0; c < table.dim; ++c) {
      std::snprintf(buf, sizeof(buf), " %.17g", table.vectors(r, c));
      out << buf;
    }
    out << '\n';
  }
  if (!out) fail_runtime("I/O error writing '" + path + "'");
}

EmbeddingTable load_embeddings(const std::string& path, const Vocabulary* expected_vocab) {
  std::ifstream in(path);
  if (!in) fail_runtime("cannot open embedding file '" + path + "'");
  std::string header;
  if (!std::getline(in, header)) fail_validation("embedding file '" + path + "' is empty");
  int dim = 0, count = 0;
  if (std::sscanf(header.c_str(), "dim=%d count=%d", &dim, &count) != 2 || dim <= 0 || count <= 0) {
    fail_validation("embedding file '" + path + "' has a bad header");
  }
  EmbeddingTable table;
  table.dim = dim;
  table.vectors.resize(count, dim);
  std::string line;
  for (int r = 0; r < count; ++r) {
    if (!std::getline(in, line)) fail_validation("embedding file truncated at row " + std::to_string(r));
    std::istringstream ss(line);
    std::string text;
    ss >> text;
    if (expected_vocab) {
      const std::string& want =
          r < expected_vocab->size() ? expected_vocab->text_of(r) : std::string(Vocabulary::kUnkText);
      if (text != want) {
        fail_validation("embedding row " + std::to_string(r) + " token '" + text +
                        "' does not match vocabulary entry '" + want + "'");
      }
    }
    for (int c = 0; c < dim; ++c) {
      if (!(ss >> table.vectors(r, c))) {
        fail_validation("embedding row " + std::to_string(r) + " has fewer than " +
                        std::to_string(dim) + " values");
      }
    }
  }
  if (expected_vocab && count != expected_vocab->size() + 1) {
    fail_validation("embedding table size does not match vocabulary");
  }
  return table;
}

}  // namespace netcal
