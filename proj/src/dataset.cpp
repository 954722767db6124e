#include "lungmtl/dataset.hpp"

#include <fstream>
#include <sstream>

#include "lungmtl/json_io.hpp"
#include "lungmtl/parallel.hpp"

namespace lungmtl {

using nlohmann::json;

template <typename T>
Tensor<T> stack_features(std::span<const FeatureMatrix* const> features) {
  if (features.empty()) throw Error(ErrorCode::ShapeMismatch, "empty batch");
  const int rows = features[0]->rows, cols = features[0]->cols;
  const std::size_t per = static_cast<std::size_t>(rows) * cols;
  Tensor<T> out({features.size(), 1, static_cast<std::size_t>(rows), static_cast<std::size_t>(cols)});
  for (std::size_t i = 0; i < features.size(); ++i) {
    const FeatureMatrix& f = *features[i];
    if (f.rows != rows || f.cols != cols || f.values.size() != per)
      throw Error(ErrorCode::ShapeMismatch, "feature matrices in a batch differ in shape");
    std::copy(f.values.begin(), f.values.end(), out.data.begin() + static_cast<std::ptrdiff_t>(i * per));
  }
  return out;
}

template <typename T>
Batch<T> make_batch(std::span<const LabeledExample> examples, std::span<const std::size_t> indices) {
  std::vector<const FeatureMatrix*> feats;
  Batch<T> b;
  for (auto i : indices) {
    const auto& e = examples[i];
    feats.push_back(&e.features);
    b.sound.push_back(static_cast<int>(e.sound));
    b.disease.push_back(static_cast<int>(e.disease));
  }
  b.inputs = stack_features<T>(feats);
  return b;
}

template Tensor<float> stack_features(std::span<const FeatureMatrix* const>);
template Tensor<double> stack_features(std::span<const FeatureMatrix* const>);
template Batch<float> make_batch(std::span<const LabeledExample>, std::span<const std::size_t>);
template Batch<double> make_batch(std::span<const LabeledExample>, std::span<const std::size_t>);

std::vector<LabeledExample> extract_features(std::span<const RecordingSource> sources, const MfccConfig& cfg,
                                             unsigned workers) {
  cfg.validate();
  std::vector<LabeledExample> out(sources.size());
  parallel_for(sources.size(), workers, [&](std::size_t i) {
    const auto& s = sources[i];
    out[i] = {extract_mfcc(s.clip, cfg), s.sound, s.disease, s.clip.patient_id, s.clip.recording_id};
  });
  return out;
}

std::vector<LabeledExample> extract_features(std::span<const SynthClip> clips, const MfccConfig& cfg,
                                             unsigned workers) {
  cfg.validate();
  std::vector<LabeledExample> out(clips.size());
  parallel_for(clips.size(), workers, [&](std::size_t i) {
    const auto& s = clips[i];
    out[i] = {extract_mfcc(s.clip, cfg), s.sound, s.disease, s.clip.patient_id, s.clip.recording_id};
  });
  return out;
}

namespace {

constexpr const char* kFeatureFormat = "lungmtl-features";
constexpr int kFeatureVersion = 1;

template <typename E>
E label_from_json(const json& j, int count, const std::string& what) {
  const int v = j.get<int>();
  if (v < 0 || v >= count) throw Error(ErrorCode::LabelOutOfRange, what + " label " + std::to_string(v));
  return static_cast<E>(v);
}

}  // namespace

void write_feature_file(const std::filesystem::path& path, const MfccConfig& cfg,
                        std::span<const LabeledExample> examples) {
  std::ostringstream out;
  json header{{"format", kFeatureFormat},
              {"version", kFeatureVersion},
              {"mfcc", cfg},
              {"fingerprint", fingerprint_hex(cfg.fingerprint())},
              {"count", examples.size()},
              {"rows", cfg.n_coefficients},
              {"cols", cfg.target_frames}};
  out << header.dump() << '\n';
  for (const auto& e : examples) {
    if (e.features.config_fingerprint != cfg.fingerprint())
      throw Error(ErrorCode::ConfigMismatch, e.recording_id + ": features were extracted under another config");
    json line{{"recording_id", e.recording_id},
              {"patient_id", e.patient_id},
              {"sound", static_cast<int>(e.sound)},
              {"disease", static_cast<int>(e.disease)},
              {"values", e.features.values}};
    out << line.dump() << '\n';
  }
  write_file_atomic(path, out.str());
}

FeatureFile read_feature_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::IoError, "cannot open feature file " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw Error(ErrorCode::EmptyFile, path.string());
  FeatureFile file;
  std::size_t count = 0;
  try {
    json header = json::parse(line);
    if (header.at("format") != kFeatureFormat || header.at("version") != kFeatureVersion)
      throw Error(ErrorCode::MalformedHeader, path.string() + ": not a version-1 feature file");
    file.config = header.at("mfcc").get<MfccConfig>();
    if (header.at("fingerprint").get<std::string>() != fingerprint_hex(file.config.fingerprint()))
      throw Error(ErrorCode::ConfigMismatch, path.string() + ": header fingerprint does not match its config");
    count = header.at("count").get<std::size_t>();
    const std::size_t cells = static_cast<std::size_t>(file.config.n_coefficients) * file.config.target_frames;
    const std::uint64_t fp = file.config.fingerprint();
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      json j = json::parse(line);
      LabeledExample e;
      e.recording_id = j.at("recording_id").get<std::string>();
      e.patient_id = j.at("patient_id").get<int>();
      e.sound = label_from_json<SoundLabel>(j.at("sound"), kSoundClasses, "sound");
      e.disease = label_from_json<DiseaseLabel>(j.at("disease"), kDiseaseClasses, "disease");
      e.features.rows = file.config.n_coefficients;
      e.features.cols = file.config.target_frames;
      e.features.config_fingerprint = fp;
      e.features.values = j.at("values").get<std::vector<double>>();
      if (e.features.values.size() != cells)
        throw Error(ErrorCode::ShapeMismatch, path.string() + ": " + e.recording_id + " has the wrong cell count");
      file.examples.push_back(std::move(e));
    }
  } catch (const json::exception& ex) {
    throw Error(ErrorCode::MalformedRow, path.string() + ": " + ex.what());
  }
  if (file.examples.size() != count)
    throw Error(ErrorCode::MalformedRow, path.string() + ": header promises " + std::to_string(count) +
                                             " examples, found " + std::to_string(file.examples.size()));
  return file;
}

FeatureFile read_feature_file(const std::filesystem::path& path, const MfccConfig& expected) {
  FeatureFile file = read_feature_file(path);
  if (file.config.fingerprint() != expected.fingerprint())
    throw Error(ErrorCode::ConfigMismatch, path.string() + ": extracted with fingerprint " +
                                               fingerprint_hex(file.config.fingerprint()) + ", expected " +
                                               fingerprint_hex(expected.fingerprint()));
  return file;
}

}  // namespace lungmtl
