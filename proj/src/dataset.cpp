#include "netcal/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>
#include <sstream>

#include "netcal/common.hpp"

namespace netcal {

void AugmentationConfig::validate() const {
  if (mutation_rate < 0.0 || mutation_rate > 1.0) fail_validation("mutation rate must be in [0,1]");
  if (candidates < 1) fail_validation("hard mining needs at least 1 candidate");
}

std::vector<Window> segment(std::span<const std::int32_t> stream, std::size_t window_length) {
  if (window_length == 0) fail_validation("window length must be positive");
  std::vector<Window> out;
  std::size_t count = stream.size() / window_length;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    Window w;
    w.stream_offset = i * window_length;
    w.ids.assign(stream.begin() + static_cast<std::ptrdiff_t>(w.stream_offset),
                 stream.begin() + static_cast<std::ptrdiff_t>(w.stream_offset + window_length));
    out.push_back(std::move(w));
  }
  return out;
}

Window mutate_window(const Window& w, double m, const Vocabulary& vocab, std::uint64_t seed,
                     std::vector<std::size_t>* positions_out,
                     std::vector<std::int32_t>* replacements_out) {
  if (m < 0.0 || m > 1.0) fail_validation("mutation rate must be in [0,1]");
  Window out = w;
  const std::size_t len = w.ids.size();
  const auto count = static_cast<std::size_t>(std::llround(m * static_cast<double>(len)));
  if (positions_out) positions_out->clear();
  if (replacements_out) replacements_out->clear();
  if (count == 0) return out;

  std::mt19937_64 rng(mix_seed(seed, 0x3a7));

  // Partial Fisher-Yates over the index set picks `count` distinct positions.
  std::vector<std::size_t> idx(len);
  for (std::size_t i = 0; i < len; ++i) idx[i] = i;
  for (std::size_t i = 0; i < count; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, len - 1);
    std::swap(idx[i], idx[pick(rng)]);
  }
  idx.resize(count);
  std::sort(idx.begin(), idx.end());

  const int vocab_size = vocab.size();
  for (std::size_t pos : idx) {
    std::int32_t original = out.ids[pos];
    std::int32_t replacement = original;
    if (vocab_size >= 2) {
      // Uniform over vocabulary ids excluding the original.
      std::uniform_int_distribution<int> pick(0, vocab_size - 2);
      int r = pick(rng);
      replacement = static_cast<std::int32_t>(r >= original ? r + 1 : r);
    }
    out.ids[pos] = replacement;
    if (positions_out) positions_out->push_back(pos);
    if (replacements_out) replacements_out->push_back(replacement);
  }
  return out;
}

std::vector<Triplet> make_triplets(const std::vector<Window>& windows,
                                   const AugmentationConfig& cfg, const Vocabulary& vocab,
                                   const EncodeFn* encode) {
  cfg.validate();
  if (windows.size() < 3) {
    fail_validation("need at least 3 windows to form a triplet, got " +
                    std::to_string(windows.size()));
  }
  if (cfg.strategy == NegativeStrategy::HardMined && (encode == nullptr || !*encode)) {
    fail_validation("hard-negative mining requires an encoder callback");
  }

  std::vector<Triplet> out;
  out.reserve(windows.size() - 2);
  const std::size_t n = windows.size();
  for (std::size_t i = 0; i + 2 < n; ++i) {
    std::mt19937_64 rng(mix_seed(cfg.seed, i));
    std::size_t neg_index;
    if (cfg.strategy == NegativeStrategy::RandomFuture) {
      std::uniform_int_distribution<std::size_t> pick(i + 2, n - 1);
      neg_index = pick(rng);
    } else {
      // Sample up to `candidates` distinct future windows, keep the one with
      // maximum cosine distance from the anchor under the current encoder.
      std::vector<std::size_t> pool;
      pool.reserve(n - i - 2);
      for (std::size_t j = i + 2; j < n; ++j) pool.push_back(j);
      std::size_t take = std::min<std::size_t>(static_cast<std::size_t>(cfg.candidates), pool.size());
      for (std::size_t k = 0; k < take; ++k) {
        std::uniform_int_distribution<std::size_t> pick(k, pool.size() - 1);
        std::swap(pool[k], pool[pick(rng)]);
      }
      Eigen::VectorXd anchor_emb = (*encode)(windows[i]);
      double best = -1.0;
      neg_index = pool[0];
      for (std::size_t k = 0; k < take; ++k) {
        Eigen::VectorXd cand = (*encode)(windows[pool[k]]);
        double denom = anchor_emb.norm() * cand.norm();
        double cosine = denom > 0.0 ? anchor_emb.dot(cand) / denom : 0.0;
        double dist = 1.0 - cosine;
        if (dist > best) {
          best = dist;
          neg_index = pool[k];
        }
      }
    }

    Triplet t;
    t.anchor = windows[i];
    t.positive = windows[i + 1];
    t.negative_source_offset = windows[neg_index].stream_offset;
    t.negative = mutate_window(windows[neg_index], cfg.mutation_rate, vocab,
                               mix_seed(cfg.seed, 0x9000 + i), &t.mutated_positions,
                               &t.mutated_replacements);
    out.push_back(std::move(t));
  }
  return out;
}

void save_triplets(const std::string& path, const std::vector<Triplet>& triplets) {
  std::ofstream out(path);
  if (!out) fail_runtime("cannot open '" + path + "' for writing");
  for (const auto& t : triplets) {
    out << "anchor=" << t.anchor.stream_offset << "\tpositive=" << t.positive.stream_offset
        << "\tnegative=" << t.negative_source_offset;
    if (!t.mutated_positions.empty()) {
      out << "\tmut=";
      for (std::size_t k = 0; k < t.mutated_positions.size(); ++k) {
        if (k) out << ',';
        out << t.mutated_positions[k] << ':' << t.mutated_replacements[k];
      }
    }
    out << '\n';
  }
  if (!out) fail_runtime("I/O error writing '" + path + "'");
}

std::vector<Triplet> load_triplets(const std::string& path, std::span<const std::int32_t> stream,
                                   std::size_t window_length) {
  std::ifstream in(path);
  if (!in) fail_runtime("cannot open triplet file '" + path + "'");
  if (window_length == 0) fail_validation("window length must be positive");

  auto window_at = [&](std::size_t offset, std::size_t line_no) {
    if (offset % window_length != 0 || offset + window_length > stream.size()) {
      fail_validation("triplet line " + std::to_string(line_no) + ": offset " +
                      std::to_string(offset) + " not a window of the stream");
    }
    Window w;
    w.stream_offset = offset;
    w.ids.assign(stream.begin() + static_cast<std::ptrdiff_t>(offset),
                 stream.begin() + static_cast<std::ptrdiff_t>(offset + window_length));
    return w;
  };

  std::vector<Triplet> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::size_t a = 0, p = 0, ng = 0;
    std::istringstream ss(line);
    std::string field;
    bool have_a = false, have_p = false, have_n = false;
    Triplet t;
    while (std::getline(ss, field, '\t')) {
      if (field.rfind("anchor=", 0) == 0) {
        a = std::stoull(field.substr(7));
        have_a = true;
      } else if (field.rfind("positive=", 0) == 0) {
        p = std::stoull(field.substr(9));
        have_p = true;
      } else if (field.rfind("negative=", 0) == 0) {
        ng = std::stoull(field.substr(9));
        have_n = true;
      } else if (field.rfind("mut=", 0) == 0) {
        std::istringstream ms(field.substr(4));
        std::string pair;
        while (std::getline(ms, pair, ',')) {
          std::size_t colon = pair.find(':');
          if (colon == std::string::npos) {
            fail_validation("triplet line " + std::to_string(line_no) + ": bad mutation '" + pair + "'");
          }
          t.mutated_positions.push_back(std::stoull(pair.substr(0, colon)));
          t.mutated_replacements.push_back(static_cast<std::int32_t>(std::stol(pair.substr(colon + 1))));
        }
      } else {
        fail_validation("triplet line " + std::to_string(line_no) + ": unknown field '" + field + "'");
      }
    }
    if (!have_a || !have_p || !have_n) {
      fail_validation("triplet line " + std::to_string(line_no) + ": missing offsets");
    }
    if (p != a + window_length || ng <= p) {
      fail_validation("triplet line " + std::to_string(line_no) + ": offsets violate anchor<positive<negative");
    }
    t.anchor = window_at(a, line_no);
    t.positive = window_at(p, line_no);
    t.negative = window_at(ng, line_no);
    t.negative_source_offset = ng;
    for (std::size_t k = 0; k < t.mutated_positions.size(); ++k) {
      std::size_t pos = t.mutated_positions[k];
      if (pos >= window_length) {
        fail_validation("triplet line " + std::to_string(line_no) + ": mutation position out of window");
      }
      t.negative.ids[pos] = t.mutated_replacements[k];
    }
    out.push_back(std::move(t));
  }
  return out;
}

}  // namespace netcal
