// Command-line front end: synth / extract / train / eval / predict / risk.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"

#include "lungmtl/checkpoint.hpp"
#include "lungmtl/config.hpp"
#include "lungmtl/json_io.hpp"
#include "lungmtl/metrics.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace lungmtl;

namespace {

struct Overrides {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<unsigned> workers;
  bool float64 = false;

  std::string audio_dir, diagnosis_file, demographics_file, feature_file, checkpoint, out_dir;
  std::string arch, granularity, subset = "test", risk_model, wav, history;
  std::optional<int> epochs, batch_size;
  std::optional<std::size_t> n_per_class;
  std::optional<double> split_ratio;
  bool patient_wise = false;
  bool no_split = false;
};

RunConfig resolve(const Overrides& o) {
  RunConfig c = o.config_path.empty() ? RunConfig{} : load_run_config(o.config_path);
  if (o.seed) c.set_seed(*o.seed);
  if (o.workers) c.workers = *o.workers;
  if (o.float64) c.float64 = true;
  c.risk.forest.workers = c.workers;
  auto set = [](std::string& dst, const std::string& v) {
    if (!v.empty()) dst = v;
  };
  set(c.paths.audio_dir, o.audio_dir);
  set(c.paths.diagnosis_file, o.diagnosis_file);
  set(c.paths.demographics_file, o.demographics_file);
  set(c.paths.feature_file, o.feature_file);
  set(c.paths.checkpoint, o.checkpoint);
  set(c.paths.out_dir, o.out_dir);
  set(c.risk.model, o.risk_model);
  if (!o.arch.empty()) c.arch = arch_from_string(o.arch);
  if (!o.granularity.empty()) {
    if (o.granularity != "recording" && o.granularity != "cycle")
      throw Error(ErrorCode::InvalidArgument, "--granularity must be recording or cycle");
    c.granularity = o.granularity == "cycle" ? Granularity::Cycle : Granularity::Recording;
  }
  if (o.epochs) c.train.epochs = *o.epochs;
  if (o.batch_size) c.train.batch_size = *o.batch_size;
  if (o.n_per_class) c.synth.n_per_class = *o.n_per_class;
  if (o.split_ratio) c.split.ratio = *o.split_ratio;
  if (o.patient_wise) c.split.patient_wise = true;
  c.validate();
  return c;
}

fs::path out_path(const RunConfig& c, const std::string& name) {
  fs::create_directories(c.paths.out_dir);
  return fs::path(c.paths.out_dir) / name;
}

// A bare file name (the default "model.json") lives in the output directory.
fs::path model_path(const RunConfig& c) {
  const fs::path p(c.paths.checkpoint);
  return p.has_parent_path() ? p : out_path(c, p.string());
}

void require_path(const std::string& p, const char* what) {
  if (p.empty()) throw Error(ErrorCode::InvalidArgument, std::string("missing ") + what);
}

// ---- synth -------------------------------------------------------------------------

int cmd_synth(const RunConfig& c) {
  const fs::path root = c.paths.out_dir;
  const fs::path audio = root / "audio";
  fs::create_directories(audio);
  const auto clips = synth_corpus(c.synth.n_per_class, c.synth.seed, c.synth.sample_rate_hz, c.synth.duration_s);
  std::ostringstream diag;
  for (const auto& s : clips) {
    const int pid = s.clip.patient_id + 100;
    const std::string stem = std::to_string(pid) + "_1b1_Tc_sc_Synth";
    write_wav(audio / (stem + ".wav"), s.clip.samples, s.clip.sample_rate_hz);
    const bool crackle = s.sound == SoundLabel::Crackles || s.sound == SoundLabel::Both;
    const bool wheeze = s.sound == SoundLabel::Wheezes || s.sound == SoundLabel::Both;
    std::ostringstream ann;
    ann << "0.000\t" << c.synth.duration_s << '\t' << crackle << '\t' << wheeze << '\n';
    write_file_atomic(audio / (stem + ".txt"), ann.str());
    diag << pid << '\t' << to_string(s.disease) << '\n';
  }
  write_file_atomic(root / "diagnosis.txt", diag.str());

  const auto demo = synth_demographics(clips.size(), c.synth.seed);
  std::ostringstream d;
  d << "patient_id,age,sex,adult_bmi,child_weight,child_height\n";
  for (std::size_t i = 0; i < demo.size(); ++i)
    d << demo[i].patient_id + 100 << ',' << demo[i].age_years << ',' << (demo[i].gender == Gender::Male ? 'M' : 'F')
      << ',' << demo[i].bmi_kg_m2 << ",NA,NA\n";
  write_file_atomic(root / "demographics.txt", d.str());
  std::cout << "wrote " << clips.size() << " clips to " << audio.string() << ", diagnosis.txt and demographics.txt\n";
  return 0;
}

// ---- extract -------------------------------------------------------------------------

int cmd_extract(const RunConfig& c) {
  require_path(c.paths.audio_dir, "audio_dir (--audio-dir)");
  require_path(c.paths.diagnosis_file, "diagnosis_file (--diagnosis)");
  const auto t0 = std::chrono::steady_clock::now();
  Corpus corpus = load_corpus(c.paths.audio_dir, c.paths.diagnosis_file, c.paths.demographics_file,
                              CorpusLoadOptions{c.granularity, c.workers});
  if (corpus.sources.empty()) throw Error(ErrorCode::EmptyFile, c.paths.audio_dir + ": no usable recordings");
  const auto examples = extract_features(corpus.sources, c.mfcc, c.workers);
  write_feature_file(c.paths.feature_file, c.mfcc, examples);
  const double dt = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  std::cout << "recordings found: " << corpus.recording_count << ", cycles: " << corpus.cycle_count
            << ", skipped: " << corpus.skipped.size() << "\n"
            << "wrote " << examples.size() << " feature matrices (" << c.mfcc.n_coefficients << "x"
            << c.mfcc.target_frames << ") to " << c.paths.feature_file << " in " << dt << " s\n";
  return 0;
}

// ---- shared helpers for the NN verbs ----------------------------------------------------

Split make_split(const RunConfig& c, const std::vector<LabeledExample>& ex) {
  if (c.split.patient_wise) {
    std::vector<int> pids;
    for (const auto& e : ex) pids.push_back(e.patient_id);
    return patient_split(pids, c.split.ratio, c.split.seed);
  }
  std::vector<int> labels;
  for (const auto& e : ex) labels.push_back(static_cast<int>(e.sound));
  return stratified_split(ex.size(), labels, c.split.ratio, c.split.seed);
}

std::vector<LabeledExample> pick(const std::vector<LabeledExample>& ex, const std::vector<std::size_t>& idx) {
  std::vector<LabeledExample> out;
  out.reserve(idx.size());
  for (auto i : idx) out.push_back(ex[i]);
  return out;
}

template <typename T>
int train_impl(const RunConfig& c, const Overrides& o) {
  FeatureFile ff = read_feature_file(c.paths.feature_file, c.mfcc);
  if (ff.examples.empty()) throw Error(ErrorCode::EmptyFile, c.paths.feature_file + ": no examples");
  std::vector<LabeledExample> train_set, val_set;
  if (o.no_split) {
    train_set = ff.examples;
  } else {
    const Split s = make_split(c, ff.examples);
    train_set = pick(ff.examples, s.train);
    val_set = pick(ff.examples, s.test);
  }
  const Shape input{1, static_cast<std::size_t>(c.mfcc.n_coefficients), static_cast<std::size_t>(c.mfcc.target_frames)};
  MtlModel<T> model = build_model<T>(c.arch, input, c.train.seed);
  std::cout << "training " << to_string(c.arch) << " (" << (sizeof(T) == 8 ? "float64" : "float32") << ") on "
            << train_set.size() << " examples, validating on " << val_set.size() << "\n";
  const auto history = train(model, train_set, val_set, c.train, c.loss, [](const EpochRecord& r) {
    std::printf("epoch %3d  loss %.4f  sound %.3f  disease %.3f", r.epoch, r.train_loss, r.train_sound_acc,
                r.train_disease_acc);
    if (r.val_loss)
      std::printf("  | val loss %.4f  sound %.3f  disease %.3f", *r.val_loss, *r.val_sound_acc, *r.val_disease_acc);
    std::printf("  (%.2f s)\n", r.wall_time_s);
    std::fflush(stdout);
  });
  const fs::path ckpt = model_path(c);
  save_model(ckpt, model, c.mfcc);
  const fs::path hist = o.history.empty() ? out_path(c, "history.csv") : fs::path(o.history);
  std::vector<std::pair<std::string, std::string>> meta{
      {"arch", std::string(to_string(c.arch))},
      {"epochs", std::to_string(c.train.epochs)},
      {"batch_size", std::to_string(c.train.batch_size)},
      {"seed", std::to_string(c.train.seed)},
      {"lr", json(c.train.lr).dump()},
      {"w_sound", json(c.loss.w_sound).dump()},
      {"w_disease", json(c.loss.w_disease).dump()},
      {"lambda_reg", json(c.loss.lambda_reg).dump()},
      {"split", o.no_split ? "none" : (c.split.patient_wise ? "patient" : "stratified") + std::string(":") +
                                         json(c.split.ratio).dump() + ":" + std::to_string(c.split.seed)},
      {"mfcc_fingerprint", fingerprint_hex(c.mfcc.fingerprint())},
      {"accuracy_columns", val_set.empty() ? "train" : "validation"}};
  write_file_atomic(hist, history_dump(history, meta));
  const auto& last = history.back();
  std::cout << "final: train loss " << last.train_loss;
  if (last.val_loss)
    std::cout << ", val sound acc " << *last.val_sound_acc << ", val disease acc " << *last.val_disease_acc;
  else
    std::cout << ", train sound acc " << last.train_sound_acc << ", train disease acc " << last.train_disease_acc;
  std::cout << "\ncheckpoint: " << ckpt.string() << "\nhistory: " << hist.string() << "\n";
  return 0;
}

int cmd_train(const RunConfig& c, const Overrides& o) {
  return c.float64 ? train_impl<double>(c, o) : train_impl<float>(c, o);
}

template <typename T>
void emit_head(const RunConfig& c, const std::string& head, std::span<const int> truth, const std::vector<int>& pred,
               const Tensor<T>& probs, const std::vector<std::string>& names, double wall) {
  const ConfusionMatrix cm = confusion(truth, pred, static_cast<int>(names.size()));
  const EvalReport rep = report(cm, wall, names);
  const RocCurve roc = roc_auc(truth, probs);
  std::cout << format_report(rep, head + " head");
  std::cout << "macro AUC: " << (roc.macro_auc ? json(*roc.macro_auc).dump() : std::string("n/a")) << "\n\n";
  write_file_atomic(out_path(c, head + "_report.csv"), report_csv(rep));
  write_file_atomic(out_path(c, head + "_confusion.csv"), confusion_csv(cm, names));
  write_file_atomic(out_path(c, head + "_roc.csv"), roc_csv(roc, names));
}

template <typename T>
int eval_impl(const RunConfig& c, const Overrides& o) {
  LoadedModel<T> loaded = load_model<T>(model_path(c));
  FeatureFile ff = read_feature_file(c.paths.feature_file, loaded.mfcc);
  std::vector<LabeledExample> subset;
  if (o.subset == "all") {
    subset = ff.examples;
  } else {
    const Split s = make_split(c, ff.examples);
    subset = pick(ff.examples, o.subset == "train" ? s.train : s.test);
  }
  if (subset.empty()) throw Error(ErrorCode::EmptyMatrix, "evaluation subset '" + o.subset + "' is empty");
  const auto t0 = std::chrono::steady_clock::now();
  const Prediction<T> p = predict(loaded.model, std::span<const LabeledExample>(subset));
  const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  std::vector<int> st, dt;
  for (const auto& e : subset) {
    st.push_back(static_cast<int>(e.sound));
    dt.push_back(static_cast<int>(e.disease));
  }
  std::cout << "evaluating " << model_path(c).string() << " on " << subset.size() << " examples (" << o.subset << ")\n\n";
  emit_head(c, "sound", st, p.sound, p.sound_probs, sound_class_names(), wall);
  emit_head(c, "disease", dt, p.disease, p.disease_probs, disease_class_names(), wall);
  std::cout << "reports, confusion matrices and ROC points written to " << c.paths.out_dir << "\n";
  return 0;
}

int cmd_eval(const RunConfig& c, const Overrides& o) {
  if (o.subset != "test" && o.subset != "train" && o.subset != "all")
    throw Error(ErrorCode::InvalidArgument, "--subset must be test, train or all");
  return c.float64 ? eval_impl<double>(c, o) : eval_impl<float>(c, o);
}

template <typename T>
int predict_impl(const RunConfig& c, const Overrides& o) {
  LoadedModel<T> loaded = load_model<T>(model_path(c));
  const AudioClip clip = read_wav(o.wav);
  const FeatureMatrix fm = extract_mfcc(clip, loaded.mfcc);
  const FeatureMatrix* ptr = &fm;
  const Prediction<T> p = predict(loaded.model, stack_features<T>(std::span<const FeatureMatrix* const>(&ptr, 1)));
  auto probs = [](const Tensor<T>& t) {
    std::vector<double> v(t.data.begin(), t.data.end());
    return v;
  };
  json out{{"file", o.wav},
           {"sound", std::string(to_string(static_cast<SoundLabel>(p.sound[0])))},
           {"disease", std::string(to_string(static_cast<DiseaseLabel>(p.disease[0])))},
           {"sound_probs", probs(p.sound_probs)},
           {"disease_probs", probs(p.disease_probs)},
           {"sound_classes", sound_class_names()},
           {"disease_classes", disease_class_names()}};
  std::cout << out.dump() << "\n";
  return 0;
}

int cmd_predict(const RunConfig& c, const Overrides& o) {
  return c.float64 ? predict_impl<double>(c, o) : predict_impl<float>(c, o);
}

// ---- risk ------------------------------------------------------------------------------

RiskLabels labeled_demographics(const RunConfig& c) {
  require_path(c.paths.demographics_file, "demographics_file (--demographics)");
  const DemographicsLoad load = read_demographics(c.paths.demographics_file);
  if (!load.excluded_patients.empty())
    warn(c.paths.demographics_file + ": " + std::to_string(load.excluded_patients.size()) +
         " record(s) without usable age/BMI skipped");
  return label_records(load.records);
}

std::string predictions_csv(const RiskLabels& l, const std::vector<int>* predicted) {
  std::ostringstream out;
  out << "patient_id,age,gender,bmi,risk_level" << (predicted ? ",predicted" : "") << '\n';
  for (std::size_t i = 0; i < l.records.size(); ++i) {
    const auto& r = l.records[i];
    out << r.patient_id << ',' << json(r.age_years).dump() << ',' << static_cast<int>(r.gender) << ','
        << json(r.bmi_kg_m2).dump() << ',' << l.levels[i];
    if (predicted) out << ',' << (*predicted)[i];
    out << '\n';
  }
  return out.str();
}

fs::path risk_checkpoint(const RunConfig& c, const Overrides& o) {
  return o.checkpoint.empty() ? out_path(c, "risk_model.json") : fs::path(c.paths.checkpoint);
}

int cmd_risk_label(const RunConfig& c) {
  const RiskLabels l = labeled_demographics(c);
  const std::string csv = predictions_csv(l, nullptr);
  write_file_atomic(out_path(c, "risk_labels.csv"), csv);
  std::cout << csv;
  return 0;
}

int cmd_risk_fit(const RunConfig& c, const Overrides& o) {
  const RiskLabels l = labeled_demographics(c);
  const Split s = stratified_split(l.records.size(), l.levels, c.split.ratio, c.split.seed);
  std::vector<DemographicRecord> rtr, rte;
  std::vector<int> ytr, yte;
  for (auto i : s.train) rtr.push_back(l.records[i]), ytr.push_back(l.levels[i]);
  for (auto i : s.test) rte.push_back(l.records[i]), yte.push_back(l.levels[i]);
  const Samples Xtr = risk_features(rtr), Xte = risk_features(rte);

  RiskModel model;
  if (c.risk.model == "forest") {
    model = fit_forest(Xtr, ytr, kRiskClasses, c.risk.forest);
    std::cout << "random forest: " << c.risk.forest.n_estimators << " trees, seed " << c.risk.forest.seed << "\n";
  } else if (c.risk.model == "logreg") {
    const auto m = fit_softmax_regression(Xtr, ytr, kRiskClasses, c.risk.logreg);
    std::cout << "softmax regression: " << m.iterations << " iterations, "
              << (m.converged ? "converged" : "stopped at max_iter") << "\n";
    model = m;
  } else {
    const auto m = fit_rbf_svm(Xtr, ytr, kRiskClasses, c.risk.svm);
    std::cout << "RBF SVM: C " << m.C << ", gamma " << m.gamma << " (1/" << m.n_features
              << " features), max KKT residual " << m.max_kkt_residual() << "\n";
    model = m;
  }
  const fs::path ckpt = risk_checkpoint(c, o);
  save_risk_model(ckpt, model);
  const RiskPrediction p = predict_risk(model, Xte, yte);
  std::cout << format_report(p.report, "risk level (held-out " + std::to_string(yte.size()) + " records)");
  write_file_atomic(out_path(c, "risk_report.csv"), report_csv(p.report));
  std::cout << "model: " << ckpt.string() << "\n";
  return 0;
}

int cmd_risk_predict(const RunConfig& c, const Overrides& o) {
  const RiskModel model = load_risk_model(risk_checkpoint(c, o));
  const RiskLabels l = labeled_demographics(c);
  const RiskPrediction p = predict_risk(model, risk_features(l.records), l.levels);
  const std::string csv = predictions_csv(l, &p.levels);
  write_file_atomic(out_path(c, "risk_predictions.csv"), csv);
  std::cout << csv << '\n' << format_report(p.report, std::string("risk level (") + std::string(risk_model_kind(model)) + ")");
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Lung sound / disease multi-task classifier and COPD risk tools"};
  app.require_subcommand(1);
  Overrides o;
  std::uint64_t seed = 0;
  unsigned workers = 0;
  app.add_option("--config", o.config_path, "JSON run configuration")->check(CLI::ExistingFile);
  auto* seed_opt = app.add_option("--seed", seed, "seed for every seeded stage");
  auto* workers_opt = app.add_option("--workers", workers, "worker threads (0 = all cores)");
  app.add_flag("--float64", o.float64, "train and infer in 64-bit precision");
  app.fallthrough();

  auto* synth = app.add_subcommand("synth", "write a synthetic corpus in the ICBHI layout");
  synth->add_option("--out", o.out_dir, "output directory");
  synth->add_option("--n-per-class", o.n_per_class, "clips per sound class");

  auto* extract = app.add_subcommand("extract", "compute MFCC features for a corpus");
  extract->add_option("--audio-dir", o.audio_dir, "directory of .wav/.txt pairs");
  extract->add_option("--diagnosis", o.diagnosis_file, "patient diagnosis table");
  extract->add_option("--demographics", o.demographics_file, "patient demographics table");
  extract->add_option("--features", o.feature_file, "output feature file");
  extract->add_option("--granularity", o.granularity, "recording or cycle");

  auto* trn = app.add_subcommand("train", "train a multi-task model");
  trn->add_option("--features", o.feature_file, "feature file");
  trn->add_option("--checkpoint", o.checkpoint, "output checkpoint");
  trn->add_option("--history", o.history, "output history CSV (default OUT/history.csv)");
  trn->add_option("--out", o.out_dir, "output directory");
  trn->add_option("--arch", o.arch, "MobileNetMtl or Cnn2dMtl");
  trn->add_option("--epochs", o.epochs, "epochs");
  trn->add_option("--batch-size", o.batch_size, "batch size");
  trn->add_option("--split-ratio", o.split_ratio, "training fraction");
  trn->add_flag("--patient-wise", o.patient_wise, "split by patient instead of stratifying recordings");
  trn->add_flag("--no-split", o.no_split, "train on every example, no validation set");

  auto* ev = app.add_subcommand("eval", "evaluate a checkpoint on a feature file");
  ev->add_option("--features", o.feature_file, "feature file");
  ev->add_option("--checkpoint", o.checkpoint, "checkpoint");
  ev->add_option("--out", o.out_dir, "output directory for reports");
  ev->add_option("--subset", o.subset, "test (default), train or all");
  ev->add_option("--split-ratio", o.split_ratio, "training fraction used at train time");
  ev->add_flag("--patient-wise", o.patient_wise, "split by patient");

  auto* pr = app.add_subcommand("predict", "classify one recording");
  pr->add_option("wav", o.wav, "recording")->required();
  pr->add_option("--checkpoint", o.checkpoint, "checkpoint");

  auto* risk = app.add_subcommand("risk", "COPD risk levels from demographics");
  risk->require_subcommand(1);
  auto add_risk_opts = [&](CLI::App* sub) {
    sub->add_option("--demographics", o.demographics_file, "patient demographics table");
    sub->add_option("--out", o.out_dir, "output directory");
  };
  auto* rlabel = risk->add_subcommand("label", "apply the risk rubric");
  add_risk_opts(rlabel);
  auto* rfit = risk->add_subcommand("fit", "fit a classifier on rubric labels (80:20 split)");
  add_risk_opts(rfit);
  rfit->add_option("--model", o.risk_model, "forest, logreg or svm");
  rfit->add_option("--checkpoint", o.checkpoint, "output model (default OUT/risk_model.json)");
  auto* rpred = risk->add_subcommand("predict", "predict risk levels with a fitted classifier");
  add_risk_opts(rpred);
  rpred->add_option("--checkpoint", o.checkpoint, "fitted model (default OUT/risk_model.json)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }
  if (*seed_opt) o.seed = seed;
  if (*workers_opt) o.workers = workers;

  try {
    const RunConfig c = resolve(o);
    if (*synth) return cmd_synth(c);
    if (*extract) return cmd_extract(c);
    if (*trn) return cmd_train(c, o);
    if (*ev) return cmd_eval(c, o);
    if (*pr) return cmd_predict(c, o);
    if (*rlabel) return cmd_risk_label(c);
    if (*rfit) return cmd_risk_fit(c, o);
    if (*rpred) return cmd_risk_predict(c, o);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}
