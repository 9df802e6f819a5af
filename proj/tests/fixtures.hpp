#pragma once

#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "tokprune/dataset.hpp"
#include "tokprune/model_io.hpp"
#include "tokprune/tokenizer.hpp"

namespace tokprune::testing {

// Specials, then w0..w{n-1}.
inline Vocab word_vocab(std::size_t words = 200) {
  std::vector<std::string> tokens{kPadToken, kUnkToken, kClsToken, kSepToken};
  for (std::size_t i = 0; i < words; ++i) tokens.push_back("w" + std::to_string(i));
  return Vocab::from_tokens(std::move(tokens));
}

inline EncoderConfig tiny_config(std::size_t layers = 2, std::size_t heads = 2, std::size_t d_model = 8,
                                 std::size_t vocab_size = 204) {
  EncoderConfig c;
  c.num_layers = layers;
  c.num_heads = heads;
  c.d_model = d_model;
  c.d_k = d_model / heads;
  c.d_ff = 2 * d_model;
  c.vocab_size = vocab_size;
  c.max_position = 512;
  c.layernorm_eps = 1e-12;
  return c;
}

// A text of `words` vocabulary words, i.e. words + 2 tokens after tokenization.
inline std::string random_text(std::mt19937_64& rng, std::size_t words, std::size_t vocab_words = 200) {
  std::uniform_int_distribution<std::size_t> pick(0, vocab_words - 1);
  std::string text;
  for (std::size_t i = 0; i < words; ++i) {
    if (i) text += ' ';
    text += "w" + std::to_string(pick(rng));
  }
  return text;
}

// Intent c draws most of its words from its own block of 200/labels vocabulary
// words, so classes are separable but not trivially so.
inline std::vector<Example> synthetic_intents(std::size_t labels, std::size_t per_label, std::size_t words,
                                              std::uint64_t seed, double noise = 0.3) {
  std::mt19937_64 rng(seed);
  const std::size_t block = 200 / labels;
  std::uniform_int_distribution<std::size_t> in_block(0, block - 1);
  std::uniform_int_distribution<std::size_t> any(0, 199);
  std::bernoulli_distribution stray(noise);
  std::vector<Example> out;
  for (std::size_t i = 0; i < per_label; ++i) {
    for (std::size_t c = 0; c < labels; ++c) {
      std::string text;
      for (std::size_t w = 0; w < words; ++w) {
        if (w) text += ' ';
        const std::size_t id = stray(rng) ? any(rng) : c * block + in_block(rng);
        text += "w" + std::to_string(id);
      }
      out.push_back({text, "intent_" + std::to_string(c)});
    }
  }
  return out;
}

class TempDir {
 public:
  TempDir() {
    static std::uint64_t counter = 0;
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() /
            ("tokprune-test-" + std::to_string(rd()) + "-" + std::to_string(counter++));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

}  // namespace tokprune::testing
