#pragma once

#include <filesystem>
#include <string>

#include "lungmtl/dsp.hpp"
#include "lungmtl/model.hpp"
#include "lungmtl/risk.hpp"

namespace lungmtl {

inline constexpr int kCheckpointVersion = 1;

enum class CheckpointKind { NnModel, RiskModel };

struct CheckpointInfo {
  int format_version = 0;
  CheckpointKind kind = CheckpointKind::NnModel;
  std::string dtype;       // "float32" / "float64" for NN models
  std::string model_kind;  // architecture or risk classifier name
};

// Self-describing documents: the layer hyperparameters (or classifier parameters) travel with
// the values, so loading needs no outside configuration. Tensors are stored as shape plus
// row-major values. Serializing a freshly loaded model reproduces the original bytes.
template <typename T>
std::string serialize_model(MtlModel<T>& model, const MfccConfig& mfcc);
template <typename T>
void save_model(const std::filesystem::path& path, MtlModel<T>& model, const MfccConfig& mfcc);

template <typename T>
struct LoadedModel {
  MtlModel<T> model;
  MfccConfig mfcc;
};

// Values are converted when the stored dtype differs from T.
template <typename T>
LoadedModel<T> deserialize_model(const std::string& text, const std::string& context = "<memory>");
template <typename T>
LoadedModel<T> load_model(const std::filesystem::path& path);

std::string serialize_risk_model(const RiskModel& model);
void save_risk_model(const std::filesystem::path& path, const RiskModel& model);
RiskModel deserialize_risk_model(const std::string& text, const std::string& context = "<memory>");
RiskModel load_risk_model(const std::filesystem::path& path);

// Throws UnreadableCheckpoint for a missing/unparseable file or an unsupported version.
CheckpointInfo peek_checkpoint(const std::filesystem::path& path);

std::string read_text_file(const std::filesystem::path& path, ErrorCode missing = ErrorCode::IoError);

}  // namespace lungmtl
