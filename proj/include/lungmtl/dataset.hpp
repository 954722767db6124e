#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "lungmtl/corpus.hpp"
#include "lungmtl/dsp.hpp"
#include "lungmtl/tensor.hpp"

namespace lungmtl {

// One model input with both targets attached.
struct LabeledExample {
  FeatureMatrix features;
  SoundLabel sound = SoundLabel::Healthy;
  DiseaseLabel disease = DiseaseLabel::Healthy;
  int patient_id = 0;
  std::string recording_id;
};

// Stacks features[indices] into [B, 1, rows, cols] and collects both target vectors.
template <typename T>
struct Batch {
  Tensor<T> inputs;
  std::vector<int> sound;
  std::vector<int> disease;
};

template <typename T>
Batch<T> make_batch(std::span<const LabeledExample> examples, std::span<const std::size_t> indices);

template <typename T>
Tensor<T> stack_features(std::span<const FeatureMatrix* const> features);

std::vector<LabeledExample> extract_features(std::span<const RecordingSource> sources, const MfccConfig& cfg,
                                             unsigned workers = 0);
std::vector<LabeledExample> extract_features(std::span<const SynthClip> clips, const MfccConfig& cfg,
                                             unsigned workers = 0);

// Feature file: a JSON header line carrying the MfccConfig and its fingerprint, then one JSON
// line per example with labels and the row-major matrix.
struct FeatureFile {
  MfccConfig config;
  std::vector<LabeledExample> examples;
};

void write_feature_file(const std::filesystem::path& path, const MfccConfig& cfg,
                        std::span<const LabeledExample> examples);
FeatureFile read_feature_file(const std::filesystem::path& path);
// Throws ConfigMismatch when the file was produced under a different MfccConfig.
FeatureFile read_feature_file(const std::filesystem::path& path, const MfccConfig& expected);

}  // namespace lungmtl
