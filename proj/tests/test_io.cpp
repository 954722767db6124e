#include <doctest.h>

#include <cstdlib>
#include <fstream>
#include <sstream>

#include "gradcheck.hpp"
#include "lungmtl/checkpoint.hpp"
#include "lungmtl/config.hpp"
#include "lungmtl/dataset.hpp"
#include "lungmtl/error.hpp"
#include "lungmtl/json_io.hpp"

using namespace lungmtl;

namespace {

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

ErrorCode code_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected an Error");
  return ErrorCode::InvalidArgument;
}

int cli(const std::string& args, const std::filesystem::path& log) {
  const std::string cmd = std::string(LUNGMTL_CLI) + " " + args + " > " + log.string() + " 2>&1";
  const int rc = std::system(cmd.c_str());
  return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

}  // namespace

TEST_SUITE("checkpoint") {
  TEST_CASE("model checkpoints round-trip byte-identically") {
    MfccConfig mfcc;
    mfcc.n_coefficients = 6;
    mfcc.n_mel_filters = 8;
    mfcc.target_frames = 6;
    auto model = build_model<float>(ArchId::MobileNetMtl, {1, 6, 6}, 3, HeadSet::Both, testing::tiny_arch());
    std::mt19937_64 rng(3);
    auto x = testing::random_tensor({4, 1, 6, 6}, rng).cast<float>();
    model.forward(x, Mode::Train);  // move the running statistics off their defaults
    const std::string text = serialize_model(model, mfcc);
    auto loaded = deserialize_model<float>(text);
    CHECK(loaded.mfcc == mfcc);
    CHECK(serialize_model(loaded.model, loaded.mfcc) == text);
    CHECK(predict(loaded.model, x).sound_probs == predict(model, x).sound_probs);

    testing::TempDir dir("ckpt");
    save_model(dir / "m.json", model, mfcc);
    CHECK(slurp(dir / "m.json") == text);
    auto info = peek_checkpoint(dir / "m.json");
    CHECK(info.kind == CheckpointKind::NnModel);
    CHECK(info.format_version == kCheckpointVersion);
    CHECK(info.dtype == "float32");

    auto wide = build_model<double>(ArchId::Cnn2dMtl, {1, 6, 6}, 4, HeadSet::SoundOnly, testing::tiny_arch());
    const std::string wtext = serialize_model(wide, mfcc);
    auto wl = deserialize_model<double>(wtext);
    CHECK_FALSE(wl.model.has_disease_head());
    CHECK(serialize_model(wl.model, mfcc) == wtext);
  }

  TEST_CASE("unreadable checkpoints") {
    testing::TempDir dir("bad");
    CHECK(code_of([&] { load_model<float>(dir / "missing.json"); }) == ErrorCode::UnreadableCheckpoint);
    CHECK(code_of([&] { peek_checkpoint(dir / "missing.json"); }) == ErrorCode::UnreadableCheckpoint);
    std::ofstream(dir / "junk.json") << "{not json";
    CHECK(code_of([&] { load_model<float>(dir / "junk.json"); }) == ErrorCode::UnreadableCheckpoint);
    auto model = build_model<float>(ArchId::MobileNetMtl, {1, 6, 6}, 3, HeadSet::Both, testing::tiny_arch());
    auto j = nlohmann::json::parse(serialize_model(model, MfccConfig{}));
    j["format_version"] = kCheckpointVersion + 1;
    CHECK(code_of([&] { deserialize_model<float>(j.dump()); }) == ErrorCode::UnreadableCheckpoint);
    j = nlohmann::json::parse(serialize_model(model, MfccConfig{}));
    j["tensors"].begin().value()["values"].erase(0);
    CHECK(code_of([&] { deserialize_model<float>(j.dump()); }) == ErrorCode::UnreadableCheckpoint);
    try {
      load_model<float>(dir / "missing.json");
    } catch (const Error& e) {
      CHECK(std::string(e.what()).find("missing.json") != std::string::npos);
    }
  }

  TEST_CASE("risk checkpoints round-trip byte-identically") {
    auto labels = label_records(synth_demographics(120, 4));
    auto X = risk_features(labels.records);
    std::vector<RiskModel> models{RiskModel{fit_forest(X, labels.levels, kRiskClasses, {.n_estimators = 8})},
                                  RiskModel{fit_softmax_regression(X, labels.levels, kRiskClasses)},
                                  RiskModel{fit_rbf_svm(X, labels.levels, kRiskClasses)}};
    for (auto& m : models) {
      const std::string text = serialize_risk_model(m);
      auto back = deserialize_risk_model(text);
      CHECK(risk_model_kind(back) == risk_model_kind(m));
      CHECK(serialize_risk_model(back) == text);
      CHECK(predict_classes(back, X) == predict_classes(m, X));
    }
    CHECK(code_of([] { deserialize_risk_model("[]"); }) == ErrorCode::UnreadableCheckpoint);
  }
}

TEST_SUITE("cli") {
  TEST_CASE("run config JSON round trip and seed fan-out") {
    RunConfig c;
    c.set_seed(7);
    CHECK(c.train.seed == 7);
    CHECK(c.split.seed == 7);
    CHECK(c.synth.seed == 7);
    CHECK(c.risk.forest.seed == 7);
    c.arch = ArchId::Cnn2dMtl;
    c.mfcc.hop_ms = 12;
    c.risk.model = "svm";
    auto back = run_config_from_json(to_json(c));
    CHECK(to_json(back) == to_json(c));
    CHECK(back.mfcc == c.mfcc);

    RunConfig d;
    CHECK(d.train.seed == 42);
    CHECK(d.mfcc == MfccConfig{});
    CHECK(d.loss.lambda_reg == 1e-4);
    CHECK(d.risk.forest.n_estimators == 100);
    auto j = to_json(d);
    j["train"]["epochs"] = 0;
    CHECK_THROWS_AS(run_config_from_json(j).validate(), Error);
  }

  TEST_CASE("feature files are deterministic and guarded by the config fingerprint") {
    testing::TempDir dir("feat");
    MfccConfig cfg;
    auto clips = synth_corpus(2, 42);
    auto ex = extract_features(clips, cfg, 2);
    REQUIRE(ex.size() == 8);
    for (auto& e : ex) {
      CHECK(e.features.rows == 20);
      CHECK(e.features.cols == 498);
    }
    write_feature_file(dir / "a.jsonl", cfg, ex);
    write_feature_file(dir / "b.jsonl", cfg, extract_features(synth_corpus(2, 42), cfg, 1));
    CHECK(slurp(dir / "a.jsonl") == slurp(dir / "b.jsonl"));
    auto back = read_feature_file(dir / "a.jsonl", cfg);
    REQUIRE(back.examples.size() == 8);
    CHECK(back.examples[3].features.values == ex[3].features.values);
    CHECK(back.examples[3].sound == ex[3].sound);
    MfccConfig other = cfg;
    other.n_mel_filters = 24;
    CHECK(code_of([&] { read_feature_file(dir / "a.jsonl", other); }) == ErrorCode::ConfigMismatch);
  }

  TEST_CASE("command line end to end") {
    testing::TempDir dir("cli");
    const std::string d = dir.path.string();
    const auto log = dir / "log.txt";
    REQUIRE(cli("synth --out " + d + "/s --n-per-class 2", log) == 0);
    const std::string src = " --audio-dir " + d + "/s/audio --diagnosis " + d + "/s/diagnosis.txt --demographics " + d +
                            "/s/demographics.txt";
    REQUIRE(cli("extract" + src + " --features " + d + "/f1.jsonl", log) == 0);
    REQUIRE(cli("extract" + src + " --features " + d + "/f2.jsonl --workers 1", log) == 0);
    CHECK(slurp(dir / "f1.jsonl") == slurp(dir / "f2.jsonl"));

    for (const char* run : {"r1", "r2"})
      REQUIRE(cli("--seed 5 train --features " + d + "/f1.jsonl --epochs 2 --out " + d + "/" + run, log) == 0);
    CHECK(slurp(dir / "r1/model.json") == slurp(dir / "r2/model.json"));
    CHECK(slurp(dir / "r1/history.csv") == slurp(dir / "r2/history.csv"));
    CHECK(parse_history_csv(slurp(dir / "r1/history.csv")).size() == 2);

    REQUIRE(cli("eval --features " + d + "/f1.jsonl --checkpoint " + d + "/r1/model.json --out " + d + "/ev", log) == 0);
    for (const char* f : {"sound_report.csv", "disease_report.csv", "sound_confusion.csv", "disease_roc.csv"})
      CHECK(std::filesystem::exists(dir / ("ev/" + std::string(f))));

    std::string wav;
    for (auto& e : std::filesystem::directory_iterator(dir / "s/audio"))
      if (e.path().extension() == ".wav") wav = e.path().string();
    REQUIRE(cli("predict " + wav + " --checkpoint " + d + "/r1/model.json", log) == 0);
    auto j = nlohmann::json::parse(slurp(log));
    double s = 0;
    for (double p : j["sound_probs"]) s += p;
    CHECK(s == doctest::Approx(1.0).epsilon(1e-6));

    CHECK(cli("predict " + d + "/nope.wav --checkpoint " + d + "/r1/model.json", log) != 0);
    CHECK(slurp(log).find("IoError") != std::string::npos);
    CHECK(cli("eval --features " + d + "/f1.jsonl --checkpoint " + d + "/none.json", log) != 0);
    CHECK(slurp(log).find("UnreadableCheckpoint") != std::string::npos);
  }

  TEST_CASE("risk verbs") {
    testing::TempDir dir("risk");
    const std::string d = dir.path.string();
    const auto log = dir / "log.txt";
    {
      std::ofstream t(dir / "table.csv");
      t << "patient_id,age,sex,adult_bmi,child_weight,child_height\n";
      const double rows[][3] = {{70, 0, 28.47}, {73, 0, 21},    {75, 0, 33.7},  {84, 0, 33.53}, {75, 1, 25.21},
                                {60, 1, 22.86}, {58, 1, 28.41}, {77, 1, 23.12}, {68, 1, 24.4},  {81, 1, 36.76},
                                {78, 1, 35.14}, {65, 1, 29.07}, {65, 0, 24.3},  {85, 0, 17.1},  {71, 1, 34}};
      int id = 1;
      for (auto& r : rows) t << id++ << "," << r[0] << "," << (r[1] ? "M" : "F") << "," << r[2] << ",NA,NA\n";
    }
    REQUIRE(cli("risk label --demographics " + d + "/table.csv --out " + d, log) == 0);
    std::istringstream labels(slurp(dir / "risk_labels.csv"));
    std::string line;
    std::getline(labels, line);
    std::vector<int> risk;
    while (std::getline(labels, line)) risk.push_back(line.back() - '0');
    CHECK(risk == std::vector<int>{1, 1, 1, 1, 1, 2, 2, 1, 1, 1, 1, 1, 1, 0, 1});

    REQUIRE(cli("synth --out " + d + "/s --n-per-class 60", log) == 0);
    const std::string demo = " --demographics " + d + "/s/demographics.txt";
    REQUIRE(cli("risk fit --model forest" + demo + " --out " + d + "/f1", log) == 0);
    REQUIRE(cli("risk fit --model forest" + demo + " --out " + d + "/f2", log) == 0);
    REQUIRE(cli("risk predict" + demo + " --out " + d + "/f1", log) == 0);
    REQUIRE(cli("risk predict" + demo + " --out " + d + "/f2", log) == 0);
    CHECK(slurp(dir / "f1/risk_predictions.csv") == slurp(dir / "f2/risk_predictions.csv"));
    REQUIRE(cli("risk fit --model svm" + demo + " --out " + d + "/sv", log) == 0);
    CHECK(slurp(log).find("gamma 0.333333") != std::string::npos);
  }
}
