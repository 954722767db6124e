#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "json.hpp"

#include "lungmtl/corpus.hpp"
#include "lungmtl/dsp.hpp"
#include "lungmtl/model.hpp"
#include "lungmtl/risk.hpp"

namespace lungmtl {

struct PathsConfig {
  std::string audio_dir;
  std::string diagnosis_file;
  std::string demographics_file;
  std::string feature_file = "features.jsonl";
  std::string checkpoint = "model.json";
  std::string out_dir = ".";
};

struct SplitConfig {
  double ratio = 0.8;
  std::uint64_t seed = 42;
  bool patient_wise = false;
};

struct SynthConfig {
  std::size_t n_per_class = 40;
  std::uint64_t seed = 42;
  int sample_rate_hz = 8000;
  double duration_s = 5.0;
};

struct RiskConfig {
  std::string model = "forest";  // forest | logreg | svm
  ForestOptions forest;
  SoftmaxRegressionOptions logreg;
  SvmOptions svm;
};

// One canonical record of an experiment. Loaded from JSON; command-line flags override it.
struct RunConfig {
  PathsConfig paths;
  MfccConfig mfcc;
  TrainConfig train = [] {
    TrainConfig t;
    t.seed = 42;
    return t;
  }();
  JointLossConfig loss;
  ArchId arch = ArchId::MobileNetMtl;
  Granularity granularity = Granularity::Recording;
  SplitConfig split;
  SynthConfig synth;
  RiskConfig risk;
  unsigned workers = 0;
  bool float64 = false;

  void validate() const;
  // Applies one seed to every seeded stage (training, split, synthesis, forest).
  void set_seed(std::uint64_t seed);
};

nlohmann::json to_json(const RunConfig& cfg);
RunConfig run_config_from_json(const nlohmann::json& j);
RunConfig load_run_config(const std::filesystem::path& path);

}  // namespace lungmtl
