#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "tokprune/model_io.hpp"
#include "tokprune/pruner.hpp"
#include "tokprune/states.hpp"
#include "tokprune/tokenizer.hpp"

namespace tokprune {

// Unit-norm d_model vector.
using SentenceEmbedding = VectorF;

enum class ScoreCapture { kNone, kHeadMean, kFull };

// Records what happened inside one encode call.
struct EncodeTrace {
  // lengths_after_layer[i][b]: real tokens of sentence b leaving layer i+1.
  std::vector<std::vector<std::size_t>> lengths_after_layer;
  // Surviving original positions, set only when pruning ran.
  std::optional<KeepSet> keep;
};

struct EncodeOptions {
  std::size_t threads = 1;  // sentences are processed in parallel
  EncodeTrace* trace = nullptr;
};

// token + position + segment-0 embeddings, then layernorm.
// Errors: id >= vocab_size -> "vocab error"; sentence longer than
// max_position -> "config error".
HiddenStates embed(const EncoderModel& model, const TokenizedBatch& batch);

// Multi-head self-attention sub-layer: softmax(Q K^T / sqrt(d_k)) V per head
// over real keys only, output projection, residual add, layernorm.
std::pair<HiddenStates, AttentionScores> attention(const HiddenStates& hidden, const LayerWeights& layer,
                                                   const EncoderConfig& config,
                                                   ScoreCapture capture = ScoreCapture::kFull,
                                                   std::size_t threads = 1);

// Token-wise GELU(erf) MLP with residual add and layernorm; padding rows stay zero.
HiddenStates feed_forward(const HiddenStates& hidden, const LayerWeights& layer, const EncoderConfig& config,
                          std::size_t threads = 1);

// Mean over real tokens, then L2 normalization.
std::vector<SentenceEmbedding> mean_pool_normalize(const HiddenStates& hidden);

// Full forward pass. With `prune`, tokens are dropped right after layer l's
// attention sub-layer, so layer l's feed-forward already sees the shorter
// sequences.
std::vector<SentenceEmbedding> encode(const EncoderModel& model, const TokenizedBatch& batch,
                                      const std::optional<PruneConfig>& prune = std::nullopt,
                                      const EncodeOptions& options = {});

struct EmbedSettings {
  std::size_t batch_size = 32;
  std::size_t max_len = kDefaultMaxLen;
  std::size_t threads = 1;
};

// tokenize -> encode -> pool -> normalize over a text list, in chunks of
// settings.batch_size. Output order follows `texts`.
std::vector<SentenceEmbedding> embed_texts(const EncoderModel& model, const Vocab& vocab,
                                           std::span<const std::string> texts,
                                           const std::optional<PruneConfig>& prune, const EmbedSettings& settings = {});

}  // namespace tokprune
