#include <doctest.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <random>

#include "fixtures.hpp"
#include "tokprune/encoder.hpp"
#include "tokprune/error.hpp"

using namespace tokprune;
using namespace tokprune::testing;

namespace {

HiddenStates random_states(std::mt19937_64& rng, const std::vector<std::size_t>& lengths, std::size_t d) {
  std::normal_distribution<float> normal;
  auto h = HiddenStates::zeros(lengths, d);
  for (std::size_t b = 0; b < lengths.size(); ++b) {
    auto block = h.sentence(b);
    for (Eigen::Index i = 0; i < block.rows(); ++i)
      for (Eigen::Index j = 0; j < block.cols(); ++j) block(i, j) = normal(rng);
  }
  return h;
}

float max_diff(const SentenceEmbedding& a, const SentenceEmbedding& b) { return (a - b).cwiseAbs().maxCoeff(); }

TokenizedBatch batch_of(const Vocab& vocab, const std::vector<std::string>& texts) { return tokenize(texts, vocab); }

}  // namespace

TEST_CASE("single-token attention is exactly [1]") {
  std::mt19937_64 rng(1);
  const auto config = tiny_config(1, 2, 8);
  const auto model = init_random_encoder(config, 4);
  const auto [out, scores] = attention(random_states(rng, {1}, 8), model.layers[0], config);
  CHECK(out.lengths == std::vector<std::size_t>{1});
  CHECK(scores.head(0, 0, 0, 0) == 1.0f);
  CHECK(scores.head(0, 1, 0, 0) == 1.0f);
  CHECK(scores.mean(0, 0, 0) == 1.0f);
}

TEST_CASE("equal logits give uniform attention rows") {
  std::mt19937_64 rng(2);
  const auto config = tiny_config(1, 2, 8);
  auto model = init_random_encoder(config, 4);
  auto& layer = model.layers[0];
  layer.query_w.setZero();
  layer.query_b.setZero();
  layer.key_w.setZero();
  layer.key_b.setZero();
  const auto [out, scores] = attention(random_states(rng, {4}, 8), layer, config);
  for (std::size_t h = 0; h < 2; ++h)
    for (std::size_t i = 0; i < 4; ++i)
      for (std::size_t j = 0; j < 4; ++j) CHECK(scores.head(0, h, i, j) == doctest::Approx(0.25f).epsilon(1e-6));
}

TEST_CASE("padding receives exactly zero attention") {
  std::mt19937_64 rng(3);
  const auto config = tiny_config(1, 2, 8);
  const auto model = init_random_encoder(config, 5);
  const auto [out, scores] = attention(random_states(rng, {6, 2, 4}, 8), model.layers[0], config);
  for (std::size_t b = 0; b < 3; ++b)
    for (std::size_t h = 0; h < 2; ++h)
      for (std::size_t i = 0; i < scores.width; ++i)
        for (std::size_t j = 0; j < scores.width; ++j) {
          if (i >= out.lengths[b] || j >= out.lengths[b]) {
            CHECK(scores.head(b, h, i, j) == 0.0f);
            CHECK(scores.mean(b, i, j) == 0.0f);
          }
        }
  for (std::size_t b = 0; b < 3; ++b)
    for (std::size_t i = out.lengths[b]; i < out.width; ++i)
      CHECK(out.values.row(static_cast<Eigen::Index>(b * out.width + i)).isZero(0.0f));
}

TEST_CASE("attention shape mismatch is a shape error") {
  std::mt19937_64 rng(3);
  const auto config = tiny_config(1, 2, 8);
  const auto model = init_random_encoder(config, 5);
  try {
    attention(random_states(rng, {3}, 16), model.layers[0], config);
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::kShapeError);
  }
}

TEST_CASE("property: attention rows are stochastic and head_mean averages heads") {
  std::mt19937_64 rng(4);
  std::uniform_int_distribution<std::size_t> len(1, 20);
  for (int trial = 0; trial < 40; ++trial) {
    const std::size_t heads = trial % 2 ? 4 : 2;
    const auto config = tiny_config(1, heads, 16);
    const auto model = init_random_encoder(config, static_cast<std::uint64_t>(trial));
    std::vector<std::size_t> lengths(1 + trial % 4);
    for (auto& n : lengths) n = len(rng);
    const auto [out, scores] = attention(random_states(rng, lengths, 16), model.layers[0], config);
    for (std::size_t b = 0; b < lengths.size(); ++b) {
      for (std::size_t i = 0; i < lengths[b]; ++i) {
        for (std::size_t h = 0; h < heads; ++h) {
          double row = 0.0;
          for (std::size_t j = 0; j < lengths[b]; ++j) row += scores.head(b, h, i, j);
          CHECK(std::abs(row - 1.0) <= 1e-5);
        }
        for (std::size_t j = 0; j < lengths[b]; ++j) {
          double m = 0.0;
          for (std::size_t h = 0; h < heads; ++h) m += scores.head(b, h, i, j);
          CHECK(std::abs(m / static_cast<double>(heads) - scores.mean(b, i, j)) <= 1e-6);
        }
      }
    }
    CHECK(out.values.allFinite());
  }
}

TEST_CASE("feed_forward is token-wise, batch independent and handles B=0") {
  std::mt19937_64 rng(5);
  const auto config = tiny_config(1, 2, 8);
  const auto model = init_random_encoder(config, 6);
  const auto& layer = model.layers[0];

  auto h = random_states(rng, {5}, 8);
  auto swapped = h;
  swapped.values.row(1).swap(swapped.values.row(3));
  const auto out = feed_forward(h, layer, config);
  const auto out_swapped = feed_forward(swapped, layer, config);
  CHECK((out.values.row(1) - out_swapped.values.row(3)).cwiseAbs().maxCoeff() == 0.0f);
  CHECK((out.values.row(3) - out_swapped.values.row(1)).cwiseAbs().maxCoeff() == 0.0f);
  CHECK((out.values.row(0) - out_swapped.values.row(0)).cwiseAbs().maxCoeff() == 0.0f);

  auto big = random_states(rng, {2, 5, 7}, 8);
  big.sentence(1) = h.sentence(0);
  const auto big_out = feed_forward(big, layer, config);
  CHECK((big_out.sentence(1) - out.sentence(0)).cwiseAbs().maxCoeff() <= 1e-6f);
  for (std::size_t i = 2; i < big_out.width; ++i) CHECK(big_out.values.row(static_cast<Eigen::Index>(i)).isZero(0.0f));

  const auto empty = feed_forward(HiddenStates::zeros({}, 8), layer, config);
  CHECK(empty.batch_size == 0);
  CHECK(empty.values.rows() == 0);
}

TEST_CASE("encode: q = 1 matches the unpruned pass, unit norm, empty batch") {
  const auto vocab = word_vocab();
  const auto model = init_random_encoder(tiny_config(3, 2, 16), 8);
  std::mt19937_64 rng(6);
  std::vector<std::string> texts;
  for (std::size_t w : {2, 20, 13, 30}) texts.push_back(random_text(rng, w));
  const auto batch = batch_of(vocab, texts);
  const auto plain = encode(model, batch);
  const auto kept = encode(model, batch, PruneConfig{1, 1.0, 2});
  REQUIRE(plain.size() == 4);
  for (std::size_t b = 0; b < 4; ++b) {
    CHECK(max_diff(plain[b], kept[b]) <= 1e-6f);
    CHECK(std::abs(plain[b].norm() - 1.0f) <= 1e-5f);
  }
  TokenizedBatch none;
  CHECK(encode(model, none).empty());
}

TEST_CASE("encode: short sentences skip pruning even when neighbours are pruned") {
  const auto vocab = word_vocab();
  const auto model = init_random_encoder(tiny_config(2, 2, 16), 9);
  std::mt19937_64 rng(7);
  const std::vector<std::string> texts{random_text(rng, 5), random_text(rng, 30)};
  const auto batch = batch_of(vocab, texts);
  EncodeTrace trace;
  EncodeOptions options;
  options.trace = &trace;
  const auto pruned = encode(model, batch, PruneConfig{15, 0.5, 1}, options);
  const auto plain = encode(model, batch);
  CHECK(max_diff(pruned[0], plain[0]) <= 1e-6f);
  CHECK(max_diff(pruned[1], plain[1]) > 1e-4f);
  REQUIRE(trace.lengths_after_layer.size() == 2);
  CHECK(trace.lengths_after_layer[0] == std::vector<std::size_t>{7, 16});
  CHECK(trace.lengths_after_layer[1] == std::vector<std::size_t>{7, 16});
  REQUIRE(trace.keep.has_value());
  CHECK(trace.keep->at(0).size() == 7);
}

TEST_CASE("encode: an 8-token sentence keeps 4 tokens under (4, 0.5, 1)") {
  const auto vocab = word_vocab();
  const auto model = init_random_encoder(tiny_config(2, 2, 8), 10);
  const std::vector<std::string> texts{"w1 w2 w3 w4 w5 w6"};
  EncodeTrace trace;
  EncodeOptions options;
  options.trace = &trace;
  encode(model, batch_of(vocab, texts), PruneConfig{4, 0.5, 1}, options);
  CHECK(trace.lengths_after_layer.at(0) == std::vector<std::size_t>{4});
  CHECK(trace.lengths_after_layer.at(1) == std::vector<std::size_t>{4});
}

TEST_CASE("encode: errors") {
  const auto vocab = word_vocab();
  const auto model = init_random_encoder(tiny_config(2, 2, 8, 100), 11);
  const std::vector<std::string> texts{"w1 w150"};
  try {
    encode(model, batch_of(vocab, texts));
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::kVocabError);
  }
  const std::vector<std::string> ok{"w1 w2"};
  for (const PruneConfig bad : {PruneConfig{15, 0.8, 3}, PruneConfig{15, 0.8, 0}, PruneConfig{15, 0.0, 1},
                                PruneConfig{15, 1.5, 1}, PruneConfig{0, 0.8, 1}}) {
    try {
      encode(model, batch_of(vocab, ok), bad);
      FAIL("expected an error");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::kConfigError);
    }
  }
}

TEST_CASE("property: padding invariance and thread determinism") {
  const auto vocab = word_vocab();
  std::mt19937_64 rng(12);
  std::uniform_int_distribution<std::size_t> words(0, 40);
  for (int trial = 0; trial < 20; ++trial) {
    const auto model = init_random_encoder(tiny_config(2 + trial % 2, 2, 16), static_cast<std::uint64_t>(trial));
    std::vector<std::string> texts(4);
    for (auto& t : texts) t = random_text(rng, words(rng));
    texts[1] = random_text(rng, 60);
    for (const auto& prune : {std::optional<PruneConfig>{}, std::optional<PruneConfig>{PruneConfig{10, 0.6, 1}}}) {
      const auto together = encode(model, batch_of(vocab, texts), prune);
      EncodeOptions threaded;
      threaded.threads = 3;
      const auto parallel = encode(model, batch_of(vocab, texts), prune, threaded);
      for (std::size_t b = 0; b < texts.size(); ++b) {
        const auto alone = encode(model, batch_of(vocab, {texts[b]}), prune);
        CHECK(max_diff(alone[0], together[b]) <= 1e-5f);
        CHECK(max_diff(parallel[b], together[b]) == 0.0f);
      }
    }
  }
}

TEST_CASE("embed_texts matches encode over chunks") {
  const auto vocab = word_vocab();
  const auto model = init_random_encoder(tiny_config(2, 2, 16), 13);
  std::mt19937_64 rng(14);
  std::vector<std::string> texts(7);
  for (auto& t : texts) t = random_text(rng, 3 + texts.size());
  EmbedSettings settings;
  settings.batch_size = 3;
  const auto chunked = embed_texts(model, vocab, texts, PruneConfig{5, 0.7, 2}, settings);
  const auto whole = encode(model, batch_of(vocab, texts), PruneConfig{5, 0.7, 2});
  REQUIRE(chunked.size() == whole.size());
  for (std::size_t i = 0; i < whole.size(); ++i) CHECK(max_diff(chunked[i], whole[i]) <= 1e-5f);
}

TEST_CASE("pruning reduces wall time on long sentences") {
  const auto vocab = word_vocab();
  auto config = tiny_config(4, 4, 64);
  config.d_ff = 256;
  const auto model = init_random_encoder(config, 15);
  std::mt19937_64 rng(16);
  std::vector<std::string> texts(64);
  for (auto& t : texts) t = random_text(rng, 40);
  const auto batch = batch_of(vocab, texts);

  auto median_seconds = [&](const std::optional<PruneConfig>& prune) {
    std::vector<double> runs;
    encode(model, batch, prune);
    for (int r = 0; r < 7; ++r) {
      const auto t0 = std::chrono::steady_clock::now();
      encode(model, batch, prune);
      runs.push_back(std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
    }
    std::nth_element(runs.begin(), runs.begin() + 3, runs.end());
    return runs[3];
  };
  const double plain = median_seconds(std::nullopt);
  const double pruned = median_seconds(PruneConfig{15, 0.5, 1});
  MESSAGE("unpruned " << plain << " s, pruned " << pruned << " s");
  CHECK(pruned <= plain);
}
