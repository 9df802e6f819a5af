#include "tokprune/error.hpp"

namespace tokprune {

std::string_view error_kind_name(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kArtifactMissing: return "artifact missing";
    case ErrorKind::kShapeError: return "shape error";
    case ErrorKind::kCorruptWeights: return "corrupt weights";
    case ErrorKind::kConfigError: return "config error";
    case ErrorKind::kVocabError: return "vocab error";
    case ErrorKind::kEmptyBatch: return "empty batch";
    case ErrorKind::kDegenerateTask: return "degenerate task";
    case ErrorKind::kEmptyEvaluation: return "empty evaluation";
    case ErrorKind::kFormatError: return "format error";
    case ErrorKind::kEmptyDataset: return "empty dataset";
    case ErrorKind::kLabelError: return "label error";
    case ErrorKind::kIoError: return "io error";
  }
  return "error";
}

namespace {
std::string compose(ErrorKind kind, const std::string& detail) {
  std::string msg(error_kind_name(kind));
  if (!detail.empty()) {
    msg += ": ";
    msg += detail;
  }
  return msg;
}
}  // namespace

Error::Error(ErrorKind kind, const std::string& detail)
    : std::runtime_error(compose(kind, detail)), kind_(kind), detail_(detail) {}

void fail(ErrorKind kind, const std::string& detail) { throw Error(kind, detail); }

}  // namespace tokprune
