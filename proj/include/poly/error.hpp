#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace poly {

enum class Errc {
  // corpus
  MalformedRow,
  DuplicateId,
  EmptyText,
  InconsistentLabel,
  UnlabeledPost,
  TooFewItems,
  // translation / scoring
  EngineFailure,
  UnsupportedPair,
  EmptyLanguage,
  // classifier
  UnknownCheckpoint,
  UnsupportedFamily,
  NonFiniteLoss,
  CorruptManifest,
  ChecksumMismatch,
  // metrics
  LengthMismatch,
  EmptyInput,
  // runner
  SchemaVersionMismatch,
  CorruptRecord,
  MissingLanguage,
  // report
  LanguageMismatch,
  EmptyReport,
  SeriesLengthMismatch,
  // plumbing
  Config,
  Io,
};

std::string_view to_string(Errc code) noexcept;

/// All domain failures surface as poly::Error; callers switch on code().
class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& message)
      : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

}  // namespace poly
