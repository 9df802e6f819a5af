#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace tokprune {

enum class ErrorKind {
  kArtifactMissing,
  kShapeError,
  kCorruptWeights,
  kConfigError,
  kVocabError,
  kEmptyBatch,
  kDegenerateTask,
  kEmptyEvaluation,
  kFormatError,
  kEmptyDataset,
  kLabelError,
  kIoError,
};

// Stable short name used as the message prefix, e.g. "shape error".
std::string_view error_kind_name(ErrorKind kind);

// Every failure the library reports is one of these; callers switch on kind().
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& detail);

  ErrorKind kind() const noexcept { return kind_; }
  const std::string& detail() const noexcept { return detail_; }

 private:
  ErrorKind kind_;
  std::string detail_;
};

[[noreturn]] void fail(ErrorKind kind, const std::string& detail);

}  // namespace tokprune
