#include "lungmtl/error.hpp"

#include <atomic>
#include <iostream>

namespace lungmtl {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::IoError: return "IoError";
    case ErrorCode::MalformedHeader: return "MalformedHeader";
    case ErrorCode::UnsupportedEncoding: return "UnsupportedEncoding";
    case ErrorCode::EmptyAudio: return "EmptyAudio";
    case ErrorCode::MalformedRow: return "MalformedRow";
    case ErrorCode::EmptyFile: return "EmptyFile";
    case ErrorCode::BadTokenCount: return "BadTokenCount";
    case ErrorCode::BadFftSize: return "BadFftSize";
    case ErrorCode::DegenerateFilter: return "DegenerateFilter";
    case ErrorCode::ShapeMismatch: return "ShapeMismatch";
    case ErrorCode::DivergenceError: return "DivergenceError";
    case ErrorCode::BadTarget: return "BadTarget";
    case ErrorCode::StaleCache: return "StaleCache";
    case ErrorCode::UnresolvedShape: return "UnresolvedShape";
    case ErrorCode::UnknownArch: return "UnknownArch";
    case ErrorCode::LabelOutOfRange: return "LabelOutOfRange";
    case ErrorCode::EmptyMatrix: return "EmptyMatrix";
    case ErrorCode::OutOfRubric: return "OutOfRubric";
    case ErrorCode::EmptyTrainingSet: return "EmptyTrainingSet";
    case ErrorCode::NoConvergence: return "NoConvergence";
    case ErrorCode::UnfittedModel: return "UnfittedModel";
    case ErrorCode::ConfigMismatch: return "ConfigMismatch";
    case ErrorCode::UnreadableCheckpoint: return "UnreadableCheckpoint";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
  }
  return "Unknown";
}

namespace {

void stderr_sink(std::string_view message) { std::cerr << "warning: " << message << '\n'; }

std::atomic<WarningSink> g_sink{&stderr_sink};

}  // namespace

void set_warning_sink(WarningSink sink) { g_sink.store(sink ? sink : &stderr_sink); }

void warn(std::string_view message) { g_sink.load()(message); }

}  // namespace lungmtl
