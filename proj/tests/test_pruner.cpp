#include <doctest.h>

#include <cmath>
#include <limits>
#include <random>

#include "tokprune/error.hpp"
#include "tokprune/pruner.hpp"

using namespace tokprune;

namespace {

struct Layout {
  AttentionScores scores;
  std::vector<std::uint8_t> mask;
  std::vector<std::size_t> lengths;
};

// Random row-stochastic per-head attention; everything outside the real block
// is NaN so an implementation reading it would produce NaN.
Layout random_layout(std::mt19937_64& rng, const std::vector<std::size_t>& lengths, std::size_t heads,
                     std::size_t width) {
  Layout out;
  out.lengths = lengths;
  const std::size_t B = lengths.size();
  auto& s = out.scores;
  s.batch_size = B;
  s.num_heads = heads;
  s.width = width;
  const float nan = std::numeric_limits<float>::quiet_NaN();
  s.per_head.assign(B * heads * width * width, nan);
  s.head_mean.assign(B * width * width, nan);
  out.mask.assign(B * width, 0);
  std::exponential_distribution<double> expo(1.0);
  for (std::size_t b = 0; b < B; ++b) {
    const std::size_t n = lengths[b];
    for (std::size_t i = 0; i < n; ++i) out.mask[b * width + i] = 1;
    for (std::size_t h = 0; h < heads; ++h) {
      for (std::size_t i = 0; i < n; ++i) {
        std::vector<double> row(n);
        double total = 0.0;
        for (auto& x : row) total += (x = expo(rng));
        for (std::size_t j = 0; j < n; ++j)
          s.per_head[((b * heads + h) * width + i) * width + j] = static_cast<float>(row[j] / total);
      }
    }
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) {
        double m = 0.0;
        for (std::size_t h = 0; h < heads; ++h) m += s.per_head[((b * heads + h) * width + i) * width + j];
        s.head_mean[(b * width + i) * width + j] = static_cast<float>(m / static_cast<double>(heads));
      }
  }
  return out;
}

// Reference: loop over heads, query rows and key columns directly on per_head.
std::vector<double> oracle_importance(const Layout& l, std::size_t b) {
  const auto& s = l.scores;
  const std::size_t n = l.lengths[b];
  std::vector<double> out(n, 0.0);
  for (std::size_t h = 0; h < s.num_heads; ++h)
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) out[j] += s.head(b, h, i, j) / static_cast<double>(s.num_heads);
  return out;
}

ImportanceScores importance_of(const Layout& l) { return token_importance(l.scores, l.mask, l.lengths); }

Layout single_head(const std::vector<std::vector<float>>& matrix) {
  Layout l;
  const std::size_t n = matrix.size();
  l.lengths = {n};
  l.mask.assign(n, 1);
  l.scores.batch_size = 1;
  l.scores.num_heads = 1;
  l.scores.width = n;
  for (const auto& row : matrix) l.scores.head_mean.insert(l.scores.head_mean.end(), row.begin(), row.end());
  l.scores.per_head = l.scores.head_mean;
  return l;
}

}  // namespace

TEST_CASE("token_importance worked examples") {
  const float fifth = 1.0f / 5.0f;
  const auto uniform = importance_of(single_head(std::vector<std::vector<float>>(5, std::vector<float>(5, fifth))));
  for (double v : uniform[0]) CHECK(v == doctest::Approx(1.0).epsilon(1e-6));

  const auto two = importance_of(single_head({{0.9f, 0.1f}, {0.3f, 0.7f}}));
  CHECK(two[0][0] == doctest::Approx(1.2).epsilon(1e-6));
  CHECK(two[0][1] == doctest::Approx(0.8).epsilon(1e-6));

  CHECK(importance_of(single_head({{1.0f}}))[0] == std::vector<double>{1.0});
}

TEST_CASE("token_importance rejects an inconsistent mask") {
  std::mt19937_64 rng(1);
  auto l = random_layout(rng, {3, 2}, 2, 4);
  l.mask[1 * 4 + 3] = 1;  // a real token after padding
  try {
    importance_of(l);
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::kShapeError);
  }
}

TEST_CASE("property: conservation, oracle agreement and no pad reads") {
  std::mt19937_64 rng(2);
  std::uniform_int_distribution<std::size_t> len(1, 32);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t heads = 1 + static_cast<std::size_t>(trial % 4);
    std::vector<std::size_t> lengths(1 + trial % 5);
    for (auto& n : lengths) n = len(rng);
    const std::size_t width = *std::max_element(lengths.begin(), lengths.end()) + static_cast<std::size_t>(trial % 3);
    const auto l = random_layout(rng, lengths, heads, width);
    const auto imp = importance_of(l);
    REQUIRE(imp.size() == lengths.size());
    for (std::size_t b = 0; b < lengths.size(); ++b) {
      REQUIRE(imp[b].size() == lengths[b]);
      const auto ref = oracle_importance(l, b);
      double total = 0.0;
      for (std::size_t j = 0; j < lengths[b]; ++j) {
        CHECK(std::isfinite(imp[b][j]));
        CHECK(imp[b][j] >= 0.0);
        CHECK(std::abs(imp[b][j] - ref[j]) <= 1e-6);
        total += imp[b][j];
      }
      CHECK(std::abs(total - static_cast<double>(lengths[b])) <= 1e-4);
    }
  }
}

TEST_CASE("property: importance does not depend on the padded width") {
  std::mt19937_64 rng(3);
  std::uniform_int_distribution<std::size_t> len(1, 16);
  for (int trial = 0; trial < 30; ++trial) {
    const std::size_t n = len(rng);
    const auto narrow = random_layout(rng, {n}, 2, 16);
    Layout wide = random_layout(rng, {n}, 2, 512);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) {
        wide.scores.head_mean[i * 512 + j] = narrow.scores.mean(0, i, j);
        for (std::size_t h = 0; h < 2; ++h)
          wide.scores.per_head[(h * 512 + i) * 512 + j] = narrow.scores.head(0, h, i, j);
      }
    const auto a = importance_of(narrow);
    const auto b = importance_of(wide);
    for (std::size_t j = 0; j < n; ++j) CHECK(std::abs(a[0][j] - b[0][j]) <= 1e-6);
  }
}

TEST_CASE("keep_count") {
  CHECK(keep_count(20, 0.8) == 16);
  CHECK(keep_count(10, 0.75) == 8);
  CHECK(keep_count(1, 0.6) == 1);
  CHECK(keep_count(20, 0.15) == 3);
  CHECK(keep_count(100, 0.01) == 1);
  // Exact integer oracle for every q on the 0.05 grid: ceil(m * n / 20).
  for (std::size_t n = 1; n <= 512; ++n) {
    CHECK(keep_count(n, 1.0) == n);
    for (std::size_t m = 1; m <= 20; ++m) {
      const double q = static_cast<double>(m) * 0.05;
      const std::size_t expected = std::max<std::size_t>(1, (m * n + 19) / 20);
      if (keep_count(n, q) != expected) FAIL_CHECK("keep_count(" << n << ", " << q << ")");
    }
  }
}

TEST_CASE("select_tokens worked examples") {
  const std::vector<std::size_t> ten{10};
  ImportanceScores imp{{0.1, 0.9, 0.3, 0.2, 0.8, 0.5, 0.4, 0.6, 0.7, 0.0}};
  CHECK(select_tokens(imp, PruneConfig{15, 0.8, 1}, ten)[0] ==
        std::vector<std::size_t>{0, 1, 2, 3, 4, 5, 6, 7, 8, 9});

  std::vector<double> scores(20);
  for (std::size_t i = 0; i < 20; ++i) scores[i] = static_cast<double>((i * 7) % 20);  // distinct
  const std::vector<std::size_t> twenty{20};
  const auto keep = select_tokens({scores}, PruneConfig{15, 0.8, 1}, twenty)[0];
  REQUIRE(keep.size() == 16);
  for (std::size_t i = 0; i < 20; ++i) {
    const bool kept = std::find(keep.begin(), keep.end(), i) != keep.end();
    CHECK(kept == (scores[i] >= 4.0));
  }
  CHECK(std::is_sorted(keep.begin(), keep.end()));

  const std::vector<std::size_t> four{4};
  CHECK(select_tokens({{1.0, 1.0, 1.0, 1.0}}, PruneConfig{1, 0.5, 1}, four)[0] == std::vector<std::size_t>{0, 1});
  CHECK(select_tokens({{1.0, 2.0, 2.0, 1.0}}, PruneConfig{4, 0.25, 1}, four)[0] == std::vector<std::size_t>{1});
}

TEST_CASE("property: gate, keep size, order and determinism") {
  std::mt19937_64 rng(4);
  std::uniform_int_distribution<std::size_t> len(1, 64);
  std::uniform_int_distribution<int> coarse(0, 4);  // produces many ties
  for (int trial = 0; trial < 200; ++trial) {
    const PruneConfig config{1 + static_cast<std::size_t>(trial % 30), 0.05 * (1 + trial % 20), 1};
    std::vector<std::size_t> lengths(1 + trial % 4);
    ImportanceScores imp;
    for (auto& n : lengths) {
      n = len(rng);
      std::vector<double> v(n);
      for (auto& x : v) x = coarse(rng);
      imp.push_back(v);
    }
    const auto keep = select_tokens(imp, config, lengths);
    CHECK(keep == select_tokens(imp, config, lengths));
    for (std::size_t b = 0; b < lengths.size(); ++b) {
      const std::size_t n = lengths[b];
      const std::size_t expected = n < config.s ? n : keep_count(n, config.q);
      REQUIRE(keep[b].size() == expected);
      CHECK(std::adjacent_find(keep[b].begin(), keep[b].end(), std::greater_equal<>()) == keep[b].end());
      CHECK(keep[b].back() < n);
      // Every dropped token scores strictly lower than, or ties and follows, every kept token.
      for (std::size_t j = 0; j < n; ++j) {
        if (std::binary_search(keep[b].begin(), keep[b].end(), j)) continue;
        for (std::size_t k : keep[b]) CHECK((imp[b][k] > imp[b][j] || (imp[b][k] == imp[b][j] && k < j)));
      }
    }
  }
}

TEST_CASE("apply_pruning") {
  auto h = HiddenStates::zeros({8, 3}, 2);
  for (std::size_t b = 0; b < 2; ++b)
    for (std::size_t i = 0; i < h.lengths[b]; ++i) {
      h.values(static_cast<Eigen::Index>(b * h.width + i), 0) = static_cast<float>(10 * b + i);
      h.values(static_cast<Eigen::Index>(b * h.width + i), 1) = -static_cast<float>(i);
    }

  const auto repacked = apply_pruning(h, {{0, 2, 5, 7}, {0, 1, 2}});
  CHECK(repacked.width == 4);
  CHECK(repacked.lengths == std::vector<std::size_t>{4, 3});
  CHECK(repacked.pad_mask == std::vector<std::uint8_t>{1, 1, 1, 1, 1, 1, 1, 0});
  const std::vector<float> first{0, 2, 5, 7};
  for (std::size_t i = 0; i < 4; ++i) CHECK(repacked.values(static_cast<Eigen::Index>(i), 0) == first[i]);
  for (std::size_t i = 0; i < 3; ++i) CHECK(repacked.values(static_cast<Eigen::Index>(4 + i), 0) == 10.0f + i);
  CHECK(repacked.values.row(7).isZero(0.0f));
  repacked.check_layout();

  const auto same = apply_pruning(h, {{0, 1, 2, 3, 4, 5, 6, 7}, {0, 1, 2}});
  CHECK(same.values == h.values);
  CHECK(same.lengths == h.lengths);

  for (const KeepSet& bad : {KeepSet{{0, 8}, {0}}, KeepSet{{3, 1}, {0}}, KeepSet{{0}}}) {
    try {
      apply_pruning(h, bad);
      FAIL("expected an error");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::kShapeError);
    }
  }
}

TEST_CASE("PruneConfig validation and JSON") {
  const PruneConfig c{12, 0.65, 2};
  CHECK(PruneConfig::from_json(c.to_json()) == c);
  CHECK(PruneConfig::from_json(R"({"s": 15, "q": 0.8, "l": 1})") == PruneConfig{});
  CHECK_NOTHROW(PruneConfig{1, 1.0, 1}.validate());
  for (const PruneConfig bad : {PruneConfig{0, 0.5, 1}, PruneConfig{1, 0.0, 1}, PruneConfig{1, 1.01, 1},
                                PruneConfig{1, 0.5, 0}, PruneConfig{1, std::nan(""), 1}}) {
    try {
      bad.validate();
      FAIL("expected an error");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::kConfigError);
    }
  }
  CHECK_THROWS_AS((PruneConfig{1, 0.5, 4}.validate_for(3)), Error);
  CHECK_THROWS_AS(PruneConfig::from_json("{\"s\": 1}"), Error);
}
