#pragma once

#include "json.hpp"

#include "lungmtl/dsp.hpp"
#include "lungmtl/layers.hpp"
#include "lungmtl/model.hpp"

namespace lungmtl {

void to_json(nlohmann::json& j, const MfccConfig& c);
void from_json(const nlohmann::json& j, MfccConfig& c);
void to_json(nlohmann::json& j, const TrainConfig& c);
void from_json(const nlohmann::json& j, TrainConfig& c);
void to_json(nlohmann::json& j, const JointLossConfig& c);
void from_json(const nlohmann::json& j, JointLossConfig& c);
void to_json(nlohmann::json& j, const LayerSpec& s);
void from_json(const nlohmann::json& j, LayerSpec& s);

std::string fingerprint_hex(std::uint64_t fp);

// Writes to a sibling temporary file and renames it over `path`, so readers never observe a
// partially written output.
void write_file_atomic(const std::filesystem::path& path, std::string_view contents);

}  // namespace lungmtl
