#include "lungmtl/config.hpp"

#include "lungmtl/checkpoint.hpp"
#include "lungmtl/json_io.hpp"

namespace lungmtl {

using nlohmann::json;

namespace {

template <typename V>
void opt(const json& j, const char* key, V& out) {
  if (auto it = j.find(key); it != j.end()) it->get_to(out);
}

const json& section(const json& j, const char* key) {
  static const json empty = json::object();
  auto it = j.find(key);
  if (it == j.end()) return empty;
  if (!it->is_object()) throw Error(ErrorCode::InvalidArgument, std::string("config section '") + key + "' must be an object");
  return *it;
}

}  // namespace

void RunConfig::validate() const {
  mfcc.validate();
  train.validate();
  loss.validate();
  if (!(split.ratio > 0.0 && split.ratio < 1.0)) throw Error(ErrorCode::InvalidArgument, "split.ratio must lie in (0, 1)");
  if (synth.n_per_class == 0) throw Error(ErrorCode::InvalidArgument, "synth.n_per_class must be >= 1");
  if (risk.model != "forest" && risk.model != "logreg" && risk.model != "svm")
    throw Error(ErrorCode::InvalidArgument, "risk.model must be forest, logreg or svm, got '" + risk.model + "'");
}

void RunConfig::set_seed(std::uint64_t seed) {
  train.seed = seed;
  split.seed = seed;
  synth.seed = seed;
  risk.forest.seed = seed;
}

json to_json(const RunConfig& c) {
  return json{
      {"paths",
       {{"audio_dir", c.paths.audio_dir},
        {"diagnosis_file", c.paths.diagnosis_file},
        {"demographics_file", c.paths.demographics_file},
        {"feature_file", c.paths.feature_file},
        {"checkpoint", c.paths.checkpoint},
        {"out_dir", c.paths.out_dir}}},
      {"mfcc", c.mfcc},
      {"train", c.train},
      {"loss", c.loss},
      {"arch", std::string(to_string(c.arch))},
      {"granularity", c.granularity == Granularity::Cycle ? "cycle" : "recording"},
      {"split", {{"ratio", c.split.ratio}, {"seed", c.split.seed}, {"patient_wise", c.split.patient_wise}}},
      {"synth",
       {{"n_per_class", c.synth.n_per_class},
        {"seed", c.synth.seed},
        {"sample_rate_hz", c.synth.sample_rate_hz},
        {"duration_s", c.synth.duration_s}}},
      {"risk",
       {{"model", c.risk.model},
        {"forest",
         {{"n_estimators", c.risk.forest.n_estimators},
          {"seed", c.risk.forest.seed},
          {"bootstrap", c.risk.forest.bootstrap},
          {"max_features", c.risk.forest.tree.max_features},
          {"min_samples_leaf", c.risk.forest.tree.min_samples_leaf},
          {"max_depth", c.risk.forest.tree.max_depth}}},
        {"logreg", {{"max_iter", c.risk.logreg.max_iter}, {"tol", c.risk.logreg.tol}, {"lr", c.risk.logreg.lr}}},
        {"svm", {{"C", c.risk.svm.C}, {"gamma", c.risk.svm.gamma}, {"tol", c.risk.svm.tol}}}}},
      {"workers", c.workers},
      {"float64", c.float64}};
}

RunConfig run_config_from_json(const json& j) {
  if (!j.is_object()) throw Error(ErrorCode::InvalidArgument, "config must be a JSON object");
  RunConfig c;
  try {
    const json& p = section(j, "paths");
    opt(p, "audio_dir", c.paths.audio_dir);
    opt(p, "diagnosis_file", c.paths.diagnosis_file);
    opt(p, "demographics_file", c.paths.demographics_file);
    opt(p, "feature_file", c.paths.feature_file);
    opt(p, "checkpoint", c.paths.checkpoint);
    opt(p, "out_dir", c.paths.out_dir);
    if (j.contains("mfcc")) c.mfcc = section(j, "mfcc").get<MfccConfig>();
    if (j.contains("train")) c.train = section(j, "train").get<TrainConfig>();
    if (j.contains("loss")) c.loss = section(j, "loss").get<JointLossConfig>();
    if (j.contains("arch")) c.arch = arch_from_string(j.at("arch").get<std::string>());
    if (j.contains("granularity")) {
      const auto g = j.at("granularity").get<std::string>();
      if (g != "recording" && g != "cycle")
        throw Error(ErrorCode::InvalidArgument, "granularity must be 'recording' or 'cycle'");
      c.granularity = g == "cycle" ? Granularity::Cycle : Granularity::Recording;
    }
    const json& s = section(j, "split");
    opt(s, "ratio", c.split.ratio);
    opt(s, "seed", c.split.seed);
    opt(s, "patient_wise", c.split.patient_wise);
    const json& sy = section(j, "synth");
    opt(sy, "n_per_class", c.synth.n_per_class);
    opt(sy, "seed", c.synth.seed);
    opt(sy, "sample_rate_hz", c.synth.sample_rate_hz);
    opt(sy, "duration_s", c.synth.duration_s);
    const json& r = section(j, "risk");
    opt(r, "model", c.risk.model);
    const json& f = section(r, "forest");
    opt(f, "n_estimators", c.risk.forest.n_estimators);
    opt(f, "seed", c.risk.forest.seed);
    opt(f, "bootstrap", c.risk.forest.bootstrap);
    opt(f, "max_features", c.risk.forest.tree.max_features);
    opt(f, "min_samples_leaf", c.risk.forest.tree.min_samples_leaf);
    opt(f, "max_depth", c.risk.forest.tree.max_depth);
    const json& l = section(r, "logreg");
    opt(l, "max_iter", c.risk.logreg.max_iter);
    opt(l, "tol", c.risk.logreg.tol);
    opt(l, "lr", c.risk.logreg.lr);
    const json& v = section(r, "svm");
    opt(v, "C", c.risk.svm.C);
    opt(v, "gamma", c.risk.svm.gamma);
    opt(v, "tol", c.risk.svm.tol);
    opt(j, "workers", c.workers);
    opt(j, "float64", c.float64);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::InvalidArgument, std::string("config: ") + e.what());
  }
  c.validate();
  return c;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  const std::string text = read_text_file(path);
  try {
    return run_config_from_json(json::parse(text));
  } catch (const json::parse_error& e) {
    throw Error(ErrorCode::InvalidArgument, path.string() + ": " + e.what());
  } catch (const Error& e) {
    throw Error(e.code(), path.string() + ": " + e.message());
  }
}

}  // namespace lungmtl
