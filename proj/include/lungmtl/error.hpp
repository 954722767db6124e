#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace lungmtl {

enum class ErrorCode {
  IoError,
  MalformedHeader,
  UnsupportedEncoding,
  EmptyAudio,
  MalformedRow,
  EmptyFile,
  BadTokenCount,
  BadFftSize,
  DegenerateFilter,
  ShapeMismatch,
  DivergenceError,
  BadTarget,
  StaleCache,
  UnresolvedShape,
  UnknownArch,
  LabelOutOfRange,
  EmptyMatrix,
  OutOfRubric,
  EmptyTrainingSet,
  NoConvergence,
  UnfittedModel,
  ConfigMismatch,
  UnreadableCheckpoint,
  InvalidArgument,
};

std::string_view to_string(ErrorCode code);

// Single exception type for the library; callers branch on code().
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code), message_(message) {}

  ErrorCode code() const noexcept { return code_; }
  // The message without the code prefix, for re-throwing with more context.
  const std::string& message() const noexcept { return message_; }

 private:
  ErrorCode code_;
  std::string message_;
};

// Warnings go through a replaceable sink (stderr by default) so tests can capture them.
using WarningSink = void (*)(std::string_view message);
void set_warning_sink(WarningSink sink);
void warn(std::string_view message);

}  // namespace lungmtl
