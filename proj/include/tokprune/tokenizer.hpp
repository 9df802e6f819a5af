#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace tokprune {

using TokenId = std::int32_t;

inline constexpr const char* kClsToken = "[CLS]";
inline constexpr const char* kSepToken = "[SEP]";
inline constexpr const char* kPadToken = "[PAD]";
inline constexpr const char* kUnkToken = "[UNK]";

inline constexpr std::size_t kDefaultMaxLen = 128;
inline constexpr std::size_t kMaxWordChars = 100;

class Vocab {
 public:
  Vocab() = default;

  // Throws "vocab error" when a special token is absent or a token repeats.
  static Vocab from_tokens(std::vector<std::string> tokens);
  static Vocab load(const std::filesystem::path& path);
  void save(const std::filesystem::path& path) const;

  std::size_t size() const { return tokens_.size(); }
  std::optional<TokenId> find(std::string_view token) const;
  const std::string& token(TokenId id) const { return tokens_.at(static_cast<std::size_t>(id)); }
  const std::vector<std::string>& tokens() const { return tokens_; }

  TokenId cls_id() const { return cls_; }
  TokenId sep_id() const { return sep_; }
  TokenId pad_id() const { return pad_; }
  TokenId unk_id() const { return unk_; }

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, TokenId> index_;
  TokenId cls_ = 0, sep_ = 0, pad_ = 0, unk_ = 0;
};

// Padded id matrix; row b holds [CLS] pieces... [SEP] followed by [PAD]s.
struct TokenizedBatch {
  std::size_t batch_size = 0;
  std::size_t width = 0;  // n_max
  std::vector<TokenId> ids;           // batch_size * width, row-major
  std::vector<std::uint8_t> pad_mask;  // 1 = real token
  std::vector<std::size_t> lengths;

  TokenId id(std::size_t b, std::size_t i) const { return ids[b * width + i]; }
  bool is_real(std::size_t b, std::size_t i) const { return pad_mask[b * width + i] != 0; }
  // Row b without padding.
  std::span<const TokenId> row(std::size_t b) const {
    return std::span<const TokenId>(ids).subspan(b * width, lengths[b]);
  }
};

// Uncased BERT pre-tokenization: clean control characters, split CJK
// ideographs, lowercase, strip accents, split on whitespace and punctuation.
std::vector<std::string> basic_tokenize(std::string_view text);

// Greedy longest-match-first; words over kMaxWordChars code points or with no
// full segmentation become [UNK].
std::vector<std::string> wordpiece(std::string_view word, const Vocab& vocab);

std::vector<TokenId> tokenize_one(std::string_view text, const Vocab& vocab, std::size_t max_len = kDefaultMaxLen);

// Errors: empty text list -> "empty batch"; max_len < 2 -> "config error".
TokenizedBatch tokenize(std::span<const std::string> texts, const Vocab& vocab,
                        std::size_t max_len = kDefaultMaxLen);

}  // namespace tokprune
