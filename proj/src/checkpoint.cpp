#include "lungmtl/checkpoint.hpp"

#include <fstream>
#include <map>
#include <sstream>

#include "lungmtl/json_io.hpp"

namespace lungmtl {

using nlohmann::json;

std::string read_text_file(const std::filesystem::path& path, ErrorCode missing) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(missing, "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

namespace {

constexpr const char* kFormat = "lungmtl-checkpoint";

[[noreturn]] void unreadable(const std::string& context, const std::string& why) {
  throw Error(ErrorCode::UnreadableCheckpoint, context + ": " + why);
}

std::string_view heads_name(HeadSet h) {
  switch (h) {
    case HeadSet::Both: return "both";
    case HeadSet::SoundOnly: return "sound";
    case HeadSet::DiseaseOnly: return "disease";
  }
  return "?";
}

HeadSet heads_from_name(const std::string& s) {
  if (s == "both") return HeadSet::Both;
  if (s == "sound") return HeadSet::SoundOnly;
  if (s == "disease") return HeadSet::DiseaseOnly;
  throw Error(ErrorCode::UnreadableCheckpoint, "unknown head set '" + s + "'");
}

template <typename T>
constexpr const char* dtype_name() {
  return sizeof(T) == 4 ? "float32" : "float64";
}

template <typename T>
json tensor_json(const Tensor<T>& t) {
  json values = json::array();
  for (T v : t.data) values.push_back(static_cast<double>(v));
  return json{{"shape", t.shape}, {"values", std::move(values)}};
}

template <typename T>
void tensor_from_json(const json& j, Tensor<T>& t, const std::string& name) {
  const Shape shape = j.at("shape").get<Shape>();
  if (shape != t.shape)
    throw Error(ErrorCode::UnreadableCheckpoint, "tensor '" + name + "' has shape " + shape_string(shape) +
                                                     ", the architecture expects " + shape_string(t.shape));
  const auto& values = j.at("values");
  if (values.size() != t.size())
    throw Error(ErrorCode::UnreadableCheckpoint, "tensor '" + name + "' value count differs from its shape");
  for (std::size_t i = 0; i < t.size(); ++i) t.data[i] = static_cast<T>(values[i].get<double>());
}

json parse_document(const std::string& text, const std::string& context, CheckpointKind expect) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::exception& e) {
    unreadable(context, std::string("not a checkpoint document (") + e.what() + ")");
  }
  if (!doc.is_object() || doc.value("format", "") != kFormat) unreadable(context, "not a lungmtl checkpoint");
  const int version = doc.value("format_version", 0);
  if (version != kCheckpointVersion)
    unreadable(context, "format_version " + std::to_string(version) + " is not supported (expected " +
                            std::to_string(kCheckpointVersion) + ")");
  const std::string kind = doc.value("kind", "");
  const std::string want = expect == CheckpointKind::NnModel ? "NnModel" : "RiskModel";
  if (kind != want) unreadable(context, "holds a " + kind + ", expected a " + want);
  return doc;
}

std::string load_text(const std::filesystem::path& path) {
  return read_text_file(path, ErrorCode::UnreadableCheckpoint);
}

}  // namespace

template <typename T>
std::string serialize_model(MtlModel<T>& model, const MfccConfig& mfcc) {
  const ModelDescription& d = model.description();
  json specs = json::object();
  specs["trunk"] = d.trunk;
  specs["sound_head"] = d.sound_head;
  specs["disease_head"] = d.disease_head;
  json tensors = json::object();
  for (auto& p : model.named_params()) tensors[p.name] = tensor_json(p.param->value);
  for (auto& b : model.named_buffers()) tensors[b.name] = tensor_json(*b.tensor);
  json doc{{"format", kFormat},
           {"format_version", kCheckpointVersion},
           {"kind", "NnModel"},
           {"arch", std::string(to_string(d.arch))},
           {"heads", std::string(heads_name(d.heads))},
           {"input_shape", d.input_shape},
           {"dtype", dtype_name<T>()},
           {"layers", std::move(specs)},
           {"mfcc", mfcc},
           {"mfcc_fingerprint", fingerprint_hex(mfcc.fingerprint())},
           {"tensors", std::move(tensors)}};
  return doc.dump(1) + "\n";
}

template <typename T>
void save_model(const std::filesystem::path& path, MtlModel<T>& model, const MfccConfig& mfcc) {
  write_file_atomic(path, serialize_model(model, mfcc));
}

template <typename T>
LoadedModel<T> deserialize_model(const std::string& text, const std::string& context) {
  const json doc = parse_document(text, context, CheckpointKind::NnModel);
  try {
    ModelDescription d;
    d.arch = arch_from_string(doc.at("arch").get<std::string>());
    d.heads = heads_from_name(doc.at("heads").get<std::string>());
    d.input_shape = doc.at("input_shape").get<Shape>();
    const auto& layers = doc.at("layers");
    d.trunk = layers.at("trunk").get<std::vector<LayerSpec>>();
    d.sound_head = layers.at("sound_head").get<std::vector<LayerSpec>>();
    d.disease_head = layers.at("disease_head").get<std::vector<LayerSpec>>();
    LoadedModel<T> out{MtlModel<T>(std::move(d)), doc.at("mfcc").get<MfccConfig>()};
    const auto& tensors = doc.at("tensors");
    std::size_t used = 0;
    auto fill = [&](const std::string& name, Tensor<T>& t) {
      auto it = tensors.find(name);
      if (it == tensors.end()) unreadable(context, "missing tensor '" + name + "'");
      tensor_from_json(*it, t, name);
      ++used;
    };
    for (auto& p : out.model.named_params()) fill(p.name, p.param->value);
    for (auto& b : out.model.named_buffers()) fill(b.name, *b.tensor);
    if (used != tensors.size()) unreadable(context, "holds tensors the architecture does not use");
    return out;
  } catch (const json::exception& e) {
    unreadable(context, e.what());
  } catch (const Error& e) {
    if (e.code() == ErrorCode::UnreadableCheckpoint) throw;
    unreadable(context, e.message());
  }
}

template <typename T>
LoadedModel<T> load_model(const std::filesystem::path& path) {
  return deserialize_model<T>(load_text(path), path.string());
}

// ---- risk models ------------------------------------------------------------------

namespace {

json samples_json(const Samples& s) { return json{{"d", s.d}, {"x", s.x}}; }
Samples samples_from(const json& j) { return Samples{j.at("d").get<std::size_t>(), j.at("x").get<std::vector<double>>()}; }

json risk_json(const ForestModel& m) {
  json trees = json::array();
  for (const auto& t : m.trees) {
    json nodes = json::array();
    for (const auto& n : t.nodes)
      nodes.push_back(json{{"feature", n.feature},
                           {"threshold", n.threshold},
                           {"left", n.left},
                           {"right", n.right},
                           {"distribution", n.distribution}});
    trees.push_back(std::move(nodes));
  }
  return json{{"n_classes", m.n_classes}, {"n_features", m.n_features}, {"seed", m.seed}, {"trees", std::move(trees)}};
}

json risk_json(const SoftmaxRegressionModel& m) {
  return json{{"n_classes", m.n_classes}, {"n_features", m.n_features}, {"mean", m.mean},
              {"scale", m.scale},         {"weights", m.weights},       {"iterations", m.iterations},
              {"converged", m.converged}};
}

json risk_json(const RbfSvmModel& m) {
  json machines = json::array();
  for (const auto& b : m.machines)
    machines.push_back(json{{"support", samples_json(b.support)},
                            {"coef", b.coef},
                            {"bias", b.bias},
                            {"max_kkt_residual", b.max_kkt_residual},
                            {"dual_objective", b.dual_objective},
                            {"iterations", b.iterations}});
  return json{{"n_classes", m.n_classes}, {"n_features", m.n_features}, {"C", m.C},
              {"gamma", m.gamma},         {"tol", m.tol},               {"machines", std::move(machines)}};
}

ForestModel forest_from(const json& j) {
  ForestModel m;
  m.n_classes = j.at("n_classes");
  m.n_features = j.at("n_features");
  m.seed = j.at("seed");
  for (const auto& jt : j.at("trees")) {
    DecisionTree t;
    for (const auto& jn : jt) {
      TreeNode n;
      n.feature = jn.at("feature");
      n.threshold = jn.at("threshold");
      n.left = jn.at("left");
      n.right = jn.at("right");
      n.distribution = jn.at("distribution").get<std::vector<double>>();
      const int count = static_cast<int>(jt.size());
      if (n.feature >= 0 && (n.left <= 0 || n.right <= 0 || n.left >= count || n.right >= count ||
                             n.feature >= static_cast<int>(m.n_features)))
        throw Error(ErrorCode::UnreadableCheckpoint, "tree node links outside the tree");
      t.nodes.push_back(std::move(n));
    }
    m.trees.push_back(std::move(t));
  }
  return m;
}

SoftmaxRegressionModel logreg_from(const json& j) {
  SoftmaxRegressionModel m;
  m.n_classes = j.at("n_classes");
  m.n_features = j.at("n_features");
  m.mean = j.at("mean").get<std::vector<double>>();
  m.scale = j.at("scale").get<std::vector<double>>();
  m.weights = j.at("weights").get<std::vector<double>>();
  m.iterations = j.at("iterations");
  m.converged = j.at("converged");
  if (m.weights.size() != static_cast<std::size_t>(m.n_classes) * (m.n_features + 1) ||
      m.mean.size() != m.n_features || m.scale.size() != m.n_features)
    throw Error(ErrorCode::UnreadableCheckpoint, "softmax regression parameter sizes disagree");
  return m;
}

RbfSvmModel svm_from(const json& j) {
  RbfSvmModel m;
  m.n_classes = j.at("n_classes");
  m.n_features = j.at("n_features");
  m.C = j.at("C");
  m.gamma = j.at("gamma");
  m.tol = j.at("tol");
  for (const auto& jm : j.at("machines")) {
    BinarySvm b;
    b.support = samples_from(jm.at("support"));
    b.coef = jm.at("coef").get<std::vector<double>>();
    b.bias = jm.at("bias");
    b.max_kkt_residual = jm.at("max_kkt_residual");
    b.dual_objective = jm.at("dual_objective");
    b.iterations = jm.at("iterations");
    if (b.support.d != m.n_features || b.support.n() != b.coef.size())
      throw Error(ErrorCode::UnreadableCheckpoint, "SVM support vectors disagree with coefficients");
    m.machines.push_back(std::move(b));
  }
  return m;
}

}  // namespace

std::string serialize_risk_model(const RiskModel& model) {
  json doc{{"format", kFormat},
           {"format_version", kCheckpointVersion},
           {"kind", "RiskModel"},
           {"model", std::string(risk_model_kind(model))},
           {"features", {"age_years", "gender", "bmi_kg_m2"}},
           {"params", std::visit([](const auto& m) { return risk_json(m); }, model)}};
  return doc.dump(1) + "\n";
}

void save_risk_model(const std::filesystem::path& path, const RiskModel& model) {
  write_file_atomic(path, serialize_risk_model(model));
}

RiskModel deserialize_risk_model(const std::string& text, const std::string& context) {
  const json doc = parse_document(text, context, CheckpointKind::RiskModel);
  try {
    const std::string kind = doc.at("model").get<std::string>();
    const auto& p = doc.at("params");
    if (kind == "forest") return forest_from(p);
    if (kind == "logreg") return logreg_from(p);
    if (kind == "svm") return svm_from(p);
    unreadable(context, "unknown risk model '" + kind + "'");
  } catch (const json::exception& e) {
    unreadable(context, e.what());
  } catch (const Error& e) {
    if (e.code() == ErrorCode::UnreadableCheckpoint) throw;
    unreadable(context, e.message());
  }
}

RiskModel load_risk_model(const std::filesystem::path& path) {
  return deserialize_risk_model(load_text(path), path.string());
}

CheckpointInfo peek_checkpoint(const std::filesystem::path& path) {
  const std::string text = load_text(path);
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::exception& e) {
    unreadable(path.string(), e.what());
  }
  const std::string kind = doc.is_object() ? doc.value("kind", "") : "";
  CheckpointInfo info;
  info.kind = kind == "RiskModel" ? CheckpointKind::RiskModel : CheckpointKind::NnModel;
  parse_document(text, path.string(), info.kind);
  info.format_version = doc.at("format_version");
  info.dtype = doc.value("dtype", "");
  info.model_kind = info.kind == CheckpointKind::NnModel ? doc.value("arch", "") : doc.value("model", "");
  return info;
}

#define LUNGMTL_INSTANTIATE(T)                                                                         \
  template std::string serialize_model<T>(MtlModel<T>&, const MfccConfig&);                            \
  template void save_model<T>(const std::filesystem::path&, MtlModel<T>&, const MfccConfig&);          \
  template LoadedModel<T> deserialize_model<T>(const std::string&, const std::string&);                \
  template LoadedModel<T> load_model<T>(const std::filesystem::path&);

LUNGMTL_INSTANTIATE(float)
LUNGMTL_INSTANTIATE(double)

#undef LUNGMTL_INSTANTIATE

}  // namespace lungmtl
