#include "tokprune/encoder.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "tokprune/error.hpp"
#include "tokprune/parallel.hpp"

namespace tokprune {

HiddenStates HiddenStates::zeros(const std::vector<std::size_t>& lengths, std::size_t d_model) {
  HiddenStates h;
  h.batch_size = lengths.size();
  h.width = lengths.empty() ? 0 : *std::max_element(lengths.begin(), lengths.end());
  h.lengths = lengths;
  h.values = MatrixF::Zero(static_cast<Eigen::Index>(h.batch_size * h.width), static_cast<Eigen::Index>(d_model));
  h.pad_mask.assign(h.batch_size * h.width, 0);
  for (std::size_t b = 0; b < h.batch_size; ++b) {
    std::fill_n(h.pad_mask.begin() + static_cast<std::ptrdiff_t>(b * h.width), lengths[b], std::uint8_t{1});
  }
  return h;
}

void HiddenStates::check_layout() const {
  if (lengths.size() != batch_size || pad_mask.size() != batch_size * width ||
      static_cast<std::size_t>(values.rows()) != batch_size * width) {
    fail(ErrorKind::kShapeError, "hidden states: values, mask and lengths disagree on batch layout");
  }
  for (std::size_t b = 0; b < batch_size; ++b) {
    if (lengths[b] > width) fail(ErrorKind::kShapeError, "hidden states: length exceeds width");
    for (std::size_t i = 0; i < width; ++i) {
      if ((pad_mask[b * width + i] != 0) != (i < lengths[b])) {
        fail(ErrorKind::kShapeError, "hidden states: real tokens of sentence " + std::to_string(b) +
                                         " are not a prefix of its row");
      }
    }
  }
}

namespace {

void require_shape(const MatrixF& m, std::size_t rows, std::size_t cols, const char* name) {
  if (static_cast<std::size_t>(m.rows()) != rows || static_cast<std::size_t>(m.cols()) != cols) {
    fail(ErrorKind::kShapeError, std::string(name) + " has shape " + std::to_string(m.rows()) + "x" +
                                     std::to_string(m.cols()) + ", expected " + std::to_string(rows) + "x" +
                                     std::to_string(cols));
  }
}

void require_size(const VectorF& v, std::size_t size, const char* name) {
  if (static_cast<std::size_t>(v.size()) != size) {
    fail(ErrorKind::kShapeError, std::string(name) + " has " + std::to_string(v.size()) + " entries, expected " +
                                     std::to_string(size));
  }
}

void check_attention_weights(const LayerWeights& w, const EncoderConfig& c) {
  const std::size_t d = c.d_model;
  require_shape(w.query_w, d, d, "query weight");
  require_shape(w.key_w, d, d, "key weight");
  require_shape(w.value_w, d, d, "value weight");
  require_shape(w.attn_out_w, d, d, "attention output weight");
  require_size(w.query_b, d, "query bias");
  require_size(w.key_b, d, "key bias");
  require_size(w.value_b, d, "value bias");
  require_size(w.attn_out_b, d, "attention output bias");
  require_size(w.attn_ln_gamma, d, "attention layernorm scale");
  require_size(w.attn_ln_beta, d, "attention layernorm bias");
}

void check_ffn_weights(const LayerWeights& w, const EncoderConfig& c) {
  require_shape(w.ffn_in_w, c.d_ff, c.d_model, "feed-forward input weight");
  require_shape(w.ffn_out_w, c.d_model, c.d_ff, "feed-forward output weight");
  require_size(w.ffn_in_b, c.d_ff, "feed-forward input bias");
  require_size(w.ffn_out_b, c.d_model, "feed-forward output bias");
  require_size(w.ffn_ln_gamma, c.d_model, "feed-forward layernorm scale");
  require_size(w.ffn_ln_beta, c.d_model, "feed-forward layernorm bias");
}

void check_hidden(const HiddenStates& hidden, const EncoderConfig& c) {
  hidden.check_layout();
  if (hidden.batch_size > 0 && hidden.d_model() != c.d_model) {
    fail(ErrorKind::kShapeError, "hidden width " + std::to_string(hidden.d_model()) + " != d_model " +
                                     std::to_string(c.d_model));
  }
}

template <typename Rows>
void layer_norm_rows(Rows&& x, const VectorF& gamma, const VectorF& beta, float eps) {
  const float inv_d = 1.0f / static_cast<float>(x.cols());
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    auto row = x.row(r);
    const float mean = row.sum() * inv_d;
    row.array() -= mean;
    const float var = row.squaredNorm() * inv_d;
    row *= 1.0f / std::sqrt(var + eps);
    row.array() = row.array() * gamma.transpose().array() + beta.transpose().array();
  }
}

template <typename Rows>
MatrixF linear(const Rows& x, const MatrixF& weight, const VectorF& bias) {
  MatrixF y(x.rows(), weight.rows());
  y.noalias() = x * weight.transpose();
  y.rowwise() += bias.transpose();
  return y;
}

void softmax_rows(MatrixF& s) {
  for (Eigen::Index r = 0; r < s.rows(); ++r) {
    auto row = s.row(r);
    const float m = row.maxCoeff();
    row = (row.array() - m).exp().matrix();
    row /= row.sum();
  }
}

float gelu(float x) { return 0.5f * x * (1.0f + std::erf(x * static_cast<float>(M_SQRT1_2))); }

}  // namespace

HiddenStates embed(const EncoderModel& model, const TokenizedBatch& batch) {
  const auto& c = model.config;
  if (batch.lengths.size() != batch.batch_size || batch.ids.size() != batch.batch_size * batch.width ||
      batch.pad_mask.size() != batch.ids.size()) {
    fail(ErrorKind::kShapeError, "tokenized batch: ids, mask and lengths disagree");
  }
  for (std::size_t b = 0; b < batch.batch_size; ++b) {
    if (batch.lengths[b] > c.max_position) {
      fail(ErrorKind::kConfigError, "sentence " + std::to_string(b) + " has " + std::to_string(batch.lengths[b]) +
                                        " tokens, model supports " + std::to_string(c.max_position));
    }
    for (std::size_t i = 0; i < batch.width; ++i) {
      if (batch.is_real(b, i) != (i < batch.lengths[b])) {
        fail(ErrorKind::kShapeError, "tokenized batch: real tokens are not a row prefix");
      }
      if (i < batch.lengths[b]) {
        const TokenId id = batch.id(b, i);
        if (id < 0 || static_cast<std::size_t>(id) >= c.vocab_size) {
          fail(ErrorKind::kVocabError, "token id " + std::to_string(id) + " outside vocabulary of size " +
                                           std::to_string(c.vocab_size));
        }
      }
    }
  }

  HiddenStates h = HiddenStates::zeros(batch.lengths, c.d_model);
  for (std::size_t b = 0; b < batch.batch_size; ++b) {
    auto rows = h.sentence(b);
    for (std::size_t i = 0; i < batch.lengths[b]; ++i) {
      const auto r = static_cast<Eigen::Index>(i);
      rows.row(r) = model.token_embeddings.row(batch.id(b, i)) + model.position_embeddings.row(r) +
                    model.segment_embeddings.row(0);
    }
    layer_norm_rows(rows, model.emb_ln_gamma, model.emb_ln_beta, static_cast<float>(c.layernorm_eps));
  }
  return h;
}

std::pair<HiddenStates, AttentionScores> attention(const HiddenStates& hidden, const LayerWeights& layer,
                                                   const EncoderConfig& config, ScoreCapture capture,
                                                   std::size_t threads) {
  check_hidden(hidden, config);
  check_attention_weights(layer, config);

  const std::size_t n = hidden.width;
  const std::size_t heads = config.num_heads;
  const auto dk = static_cast<Eigen::Index>(config.d_k);
  const float inv_sqrt_dk = 1.0f / std::sqrt(static_cast<float>(config.d_k));

  HiddenStates out = HiddenStates::zeros(hidden.lengths, config.d_model);
  AttentionScores scores;
  scores.batch_size = hidden.batch_size;
  scores.num_heads = heads;
  scores.width = n;
  if (capture == ScoreCapture::kFull) scores.per_head.assign(hidden.batch_size * heads * n * n, 0.0f);
  if (capture != ScoreCapture::kNone) scores.head_mean.assign(hidden.batch_size * n * n, 0.0f);

  parallel_for(hidden.batch_size, threads, [&](std::size_t b) {
    const std::size_t len = hidden.lengths[b];
    if (len == 0) return;
    const auto x = hidden.sentence(b);
    const MatrixF q = linear(x, layer.query_w, layer.query_b);
    const MatrixF k = linear(x, layer.key_w, layer.key_b);
    const MatrixF v = linear(x, layer.value_w, layer.value_b);

    MatrixF context(x.rows(), x.cols());
    MatrixF probs(x.rows(), x.rows());
    MatrixF mean_probs;
    if (capture != ScoreCapture::kNone) mean_probs = MatrixF::Zero(x.rows(), x.rows());

    for (std::size_t h = 0; h < heads; ++h) {
      const auto col = static_cast<Eigen::Index>(h) * dk;
      probs.noalias() = q.middleCols(col, dk) * k.middleCols(col, dk).transpose();
      probs *= inv_sqrt_dk;
      softmax_rows(probs);
      context.middleCols(col, dk).noalias() = probs * v.middleCols(col, dk);

      if (capture == ScoreCapture::kFull) {
        float* dst = scores.per_head.data() + (b * heads + h) * n * n;
        for (std::size_t i = 0; i < len; ++i) {
          for (std::size_t j = 0; j < len; ++j) dst[i * n + j] = probs(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
        }
      }
      if (capture != ScoreCapture::kNone) mean_probs += probs;
    }

    if (capture != ScoreCapture::kNone) {
      mean_probs /= static_cast<float>(heads);
      float* dst = scores.head_mean.data() + b * n * n;
      for (std::size_t i = 0; i < len; ++i) {
        for (std::size_t j = 0; j < len; ++j) dst[i * n + j] = mean_probs(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
      }
    }

    MatrixF y = linear(context, layer.attn_out_w, layer.attn_out_b);
    y += x;
    layer_norm_rows(y, layer.attn_ln_gamma, layer.attn_ln_beta, static_cast<float>(config.layernorm_eps));
    out.sentence(b) = y;
  });
  return {std::move(out), std::move(scores)};
}

HiddenStates feed_forward(const HiddenStates& hidden, const LayerWeights& layer, const EncoderConfig& config,
                          std::size_t threads) {
  check_hidden(hidden, config);
  check_ffn_weights(layer, config);

  HiddenStates out = HiddenStates::zeros(hidden.lengths, config.d_model);
  parallel_for(hidden.batch_size, threads, [&](std::size_t b) {
    if (hidden.lengths[b] == 0) return;
    const auto x = hidden.sentence(b);
    MatrixF inner = linear(x, layer.ffn_in_w, layer.ffn_in_b);
    inner = inner.unaryExpr(&gelu);
    MatrixF y = linear(inner, layer.ffn_out_w, layer.ffn_out_b);
    y += x;
    layer_norm_rows(y, layer.ffn_ln_gamma, layer.ffn_ln_beta, static_cast<float>(config.layernorm_eps));
    out.sentence(b) = y;
  });
  return out;
}

std::vector<SentenceEmbedding> mean_pool_normalize(const HiddenStates& hidden) {
  hidden.check_layout();
  std::vector<SentenceEmbedding> out;
  out.reserve(hidden.batch_size);
  for (std::size_t b = 0; b < hidden.batch_size; ++b) {
    const auto rows = hidden.sentence(b);
    VectorF pooled = VectorF::Zero(static_cast<Eigen::Index>(hidden.d_model()));
    if (rows.rows() > 0) pooled = rows.colwise().sum().transpose() / static_cast<float>(rows.rows());
    const float norm = pooled.norm();
    if (norm > 0.0f) pooled /= norm;
    out.push_back(std::move(pooled));
  }
  return out;
}

std::vector<SentenceEmbedding> encode(const EncoderModel& model, const TokenizedBatch& batch,
                                      const std::optional<PruneConfig>& prune, const EncodeOptions& options) {
  const auto& c = model.config;
  if (prune) prune->validate_for(c.num_layers);
  if (model.layers.size() != c.num_layers) fail(ErrorKind::kShapeError, "layer count differs from config");
  if (batch.batch_size == 0) return {};

  if (options.trace) *options.trace = EncodeTrace{};
  HiddenStates h = embed(model, batch);
  for (std::size_t i = 0; i < model.layers.size(); ++i) {
    const auto& layer = model.layers[i];
    const bool prune_here = prune && prune->l == i + 1;
    // A batch with no sentence at or above s keeps everything; skip the score capture.
    const bool any_eligible =
        prune_here && std::any_of(h.lengths.begin(), h.lengths.end(), [&](std::size_t n) { return n >= prune->s; });
    auto [attended, scores] =
        attention(h, layer, c, any_eligible ? ScoreCapture::kHeadMean : ScoreCapture::kNone, options.threads);
    h = std::move(attended);
    if (any_eligible) {
      const auto importance = token_importance(scores, h.pad_mask, h.lengths);
      KeepSet keep = select_tokens(importance, *prune, h.lengths);
      h = apply_pruning(h, keep);
      if (options.trace) options.trace->keep = std::move(keep);
    } else if (prune_here && options.trace) {
      KeepSet keep(h.batch_size);
      for (std::size_t b = 0; b < h.batch_size; ++b) {
        keep[b].resize(h.lengths[b]);
        std::iota(keep[b].begin(), keep[b].end(), std::size_t{0});
      }
      options.trace->keep = std::move(keep);
    }
    h = feed_forward(h, layer, c, options.threads);
    if (options.trace) options.trace->lengths_after_layer.push_back(h.lengths);
  }
  return mean_pool_normalize(h);
}

std::vector<SentenceEmbedding> embed_texts(const EncoderModel& model, const Vocab& vocab,
                                           std::span<const std::string> texts,
                                           const std::optional<PruneConfig>& prune, const EmbedSettings& settings) {
  if (texts.empty()) fail(ErrorKind::kEmptyBatch, "no texts to embed");
  const std::size_t chunk = std::max<std::size_t>(settings.batch_size, 1);
  std::vector<SentenceEmbedding> out;
  out.reserve(texts.size());
  for (std::size_t start = 0; start < texts.size(); start += chunk) {
    const auto part = texts.subspan(start, std::min(chunk, texts.size() - start));
    const TokenizedBatch batch = tokenize(part, vocab, settings.max_len);
    auto embeddings = encode(model, batch, prune, EncodeOptions{settings.threads, nullptr});
    for (auto& e : embeddings) out.push_back(std::move(e));
  }
  return out;
}

}  // namespace tokprune
