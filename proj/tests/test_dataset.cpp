#include "netcal/dataset.hpp"

#include <random>
#include <set>

#include "doctest.h"
#include "test_util.hpp"

using namespace netcal;

namespace {

Vocabulary sized_vocab(int n) {
  Vocabulary v;
  for (int i = 0; i < n; ++i) v.add("tok" + std::to_string(i));
  return v;
}

std::vector<std::int32_t> iota_stream(std::size_t n, int vocab_size) {
  std::vector<std::int32_t> ids(n);
  for (std::size_t i = 0; i < n; ++i) ids[i] = static_cast<std::int32_t>(i % static_cast<std::size_t>(vocab_size));
  return ids;
}

std::size_t hamming(const Window& a, const Window& b) {
  std::size_t d = 0;
  for (std::size_t i = 0; i < a.ids.size(); ++i) d += a.ids[i] != b.ids[i] ? 1 : 0;
  return d;
}

}  // namespace

TEST_CASE("segmentation arithmetic") {
  auto vocabless = iota_stream(250, 11);
  auto windows = segment(vocabless, 100);
  REQUIRE(windows.size() == 2);
  CHECK(windows[0].stream_offset == 0);
  CHECK(windows[1].stream_offset == 100);
  CHECK(windows[0].ids.size() == 100);

  CHECK(segment(iota_stream(99, 5), 100).empty());

  auto exact = segment(iota_stream(100, 5), 100);
  REQUIRE(exact.size() == 1);
  CHECK(exact[0].ids == iota_stream(100, 5));

  CHECK_THROWS_AS(segment(vocabless, 0), Error);
}

TEST_CASE("mutation count is exact and replacements differ") {
  auto vocab = sized_vocab(12);
  std::mt19937_64 rng(5);
  std::uniform_int_distribution<std::int32_t> tok(0, 11);

  for (double m : {0.0, 0.1, 0.2, 1.0}) {
    for (std::size_t len : {100u, 500u}) {
      Window w;
      w.ids.resize(len);
      for (auto& id : w.ids) id = tok(rng);
      std::vector<std::size_t> positions;
      auto mutated = mutate_window(w, m, vocab, rng(), &positions);
      auto expected = static_cast<std::size_t>(std::llround(m * static_cast<double>(len)));
      CHECK(hamming(w, mutated) == expected);
      CHECK(positions.size() == expected);
      if (m == 0.0) CHECK(mutated.ids == w.ids);
      if (m == 1.0) {
        for (std::size_t i = 0; i < len; ++i) CHECK(mutated.ids[i] != w.ids[i]);
      }
    }
  }

  SUBCASE("a single-token vocabulary cannot produce differing replacements") {
    auto tiny = sized_vocab(1);
    Window w;
    w.ids.assign(10, 0);
    auto mutated = mutate_window(w, 1.0, tiny, 3);
    CHECK(mutated.ids == w.ids);
  }

  SUBCASE("same seed, same mutation") {
    Window w;
    w.ids = iota_stream(100, 12);
    auto a = mutate_window(w, 0.3, vocab, 99);
    auto b = mutate_window(w, 0.3, vocab, 99);
    CHECK(a.ids == b.ids);
  }
}

TEST_CASE("three windows force the only possible triplet") {
  auto vocab = sized_vocab(6);
  auto windows = segment(iota_stream(30, 6), 10);
  REQUIRE(windows.size() == 3);
  AugmentationConfig cfg;
  cfg.mutation_rate = 0.0;
  auto triplets = make_triplets(windows, cfg, vocab);
  REQUIRE(triplets.size() == 1);
  CHECK(triplets[0].anchor.stream_offset == 0);
  CHECK(triplets[0].positive.stream_offset == 10);
  CHECK(triplets[0].negative_source_offset == 20);
  CHECK(triplets[0].negative.ids == windows[2].ids);  // m=0 keeps the source intact
  CHECK(triplets[0].mutated_positions.empty());
}

TEST_CASE("triplet ordering and mutation counts hold over a long stream") {
  auto vocab = sized_vocab(9);
  auto windows = segment(iota_stream(5000, 9), 100);
  AugmentationConfig cfg;
  cfg.mutation_rate = 0.1;
  cfg.seed = 31;
  auto triplets = make_triplets(windows, cfg, vocab);
  REQUIRE(triplets.size() == windows.size() - 2);
  for (const auto& t : triplets) {
    CHECK(t.positive.stream_offset == t.anchor.stream_offset + 100);
    CHECK(t.negative_source_offset > t.positive.stream_offset);
    CHECK(t.mutated_positions.size() == 10);
  }

  SUBCASE("determinism under seed") {
    auto again = make_triplets(windows, cfg, vocab);
    REQUIRE(again.size() == triplets.size());
    for (std::size_t i = 0; i < triplets.size(); ++i) {
      CHECK(again[i].negative.ids == triplets[i].negative.ids);
      CHECK(again[i].negative_source_offset == triplets[i].negative_source_offset);
    }
  }

  SUBCASE("fewer than three windows is an error") {
    std::vector<Window> two(windows.begin(), windows.begin() + 2);
    CHECK_THROWS_AS(make_triplets(two, cfg, vocab), Error);
  }
}

TEST_CASE("hard mining selects the most distant candidate") {
  auto vocab = sized_vocab(4);
  // Windows embed to fixed vectors; window k maps to e_k-ish directions so
  // the farthest candidate from the anchor is unambiguous.
  std::vector<Window> windows;
  for (int i = 0; i < 6; ++i) {
    Window w;
    w.stream_offset = static_cast<std::size_t>(i) * 4;
    w.ids = {static_cast<std::int32_t>(i % 4), 0, 1, 2};
    windows.push_back(w);
  }
  EncodeFn encode = [](const Window& w) {
    Eigen::VectorXd v = Eigen::VectorXd::Zero(8);
    // Anchor (offset 0) points along axis 0. Offset 20 points opposite.
    if (w.stream_offset == 20) {
      v(0) = -1.0;
    } else if (w.stream_offset == 0) {
      v(0) = 1.0;
    } else {
      v(0) = 0.9;
      v(1 + static_cast<Eigen::Index>(w.stream_offset / 4 % 6)) = 0.3;
    }
    return v;
  };
  AugmentationConfig cfg;
  cfg.strategy = NegativeStrategy::HardMined;
  cfg.mutation_rate = 0.0;
  cfg.candidates = 50;  // more than available, so every future window is ranked
  auto triplets = make_triplets(windows, cfg, vocab, &encode);
  REQUIRE(!triplets.empty());
  CHECK(triplets[0].negative_source_offset == 20);

  SUBCASE("callback is required") {
    CHECK_THROWS_AS(make_triplets(windows, cfg, vocab, nullptr), Error);
  }
}

TEST_CASE("triplet dump round trips against the stream") {
  testutil::TempDir tmp;
  auto vocab = sized_vocab(7);
  auto stream = iota_stream(1200, 7);
  auto windows = segment(stream, 100);
  AugmentationConfig cfg;
  cfg.mutation_rate = 0.2;
  cfg.seed = 8;
  auto triplets = make_triplets(windows, cfg, vocab);
  auto path = tmp.file("triplets.tsv");
  save_triplets(path, triplets);
  auto loaded = load_triplets(path, stream, 100);
  REQUIRE(loaded.size() == triplets.size());
  for (std::size_t i = 0; i < triplets.size(); ++i) {
    CHECK(loaded[i].anchor.ids == triplets[i].anchor.ids);
    CHECK(loaded[i].positive.ids == triplets[i].positive.ids);
    CHECK(loaded[i].negative.ids == triplets[i].negative.ids);
  }

  SUBCASE("offsets outside the stream are rejected") {
    tmp.write("bad.tsv", "anchor=0\tpositive=100\tnegative=5000\n");
    CHECK_THROWS_AS(load_triplets(tmp.file("bad.tsv"), stream, 100), Error);
  }
}
