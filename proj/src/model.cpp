#include "lungmtl/model.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

namespace lungmtl {

std::string_view to_string(ArchId arch) {
  switch (arch) {
    case ArchId::MobileNetMtl: return "MobileNetMtl";
    case ArchId::Cnn2dMtl: return "Cnn2dMtl";
  }
  return "?";
}

ArchId arch_from_string(std::string_view name) {
  if (name == "MobileNetMtl" || name == "mobilenet") return ArchId::MobileNetMtl;
  if (name == "Cnn2dMtl" || name == "cnn2d") return ArchId::Cnn2dMtl;
  throw Error(ErrorCode::UnknownArch, "'" + std::string(name) + "' (expected MobileNetMtl or Cnn2dMtl)");
}

namespace {

void add_bottleneck(std::vector<LayerSpec>& out, int in_c, int filters, int stride) {
  out.push_back(depthwise_spec(in_c, 3, stride, 1));
  out.push_back(batchnorm_spec(in_c));
  out.push_back(relu_spec());
  out.push_back(pointwise_spec(in_c, filters));
  out.push_back(batchnorm_spec(filters));
  out.push_back(relu_spec());
}

std::vector<LayerSpec> head(int trunk_width, int hidden, int classes) {
  return {dense_spec(trunk_width, hidden), relu_spec(), dense_spec(hidden, classes), softmax_spec()};
}

}  // namespace

ModelDescription describe_model(ArchId arch, const Shape& input_shape, HeadSet heads, const ArchOptions& opt) {
  ModelDescription d;
  d.arch = arch;
  d.heads = heads;
  d.input_shape = input_shape;
  const int in_c = input_shape.empty() ? 1 : static_cast<int>(input_shape[0]);
  int width = 0;
  switch (arch) {
    case ArchId::MobileNetMtl: {
      if (opt.block_filters.empty()) throw Error(ErrorCode::InvalidArgument, "MobileNetMtl needs bottleneck widths");
      d.trunk.push_back(conv2d_spec(in_c, opt.stem_filters, 3, 2, 1));
      int c = opt.stem_filters;
      for (int f : opt.block_filters) {
        add_bottleneck(d.trunk, c, f, 2);
        c = f;
      }
      d.trunk.push_back(conv2d_spec(c, opt.tail_filters, 3, 1, 1));
      add_bottleneck(d.trunk, opt.tail_filters, opt.tail_filters, 1);
      d.trunk.push_back(gap_spec());
      width = opt.tail_filters;
      break;
    }
    case ArchId::Cnn2dMtl: {
      d.trunk = {conv2d_spec(in_c, opt.stem_filters, 3, 1, 1), relu_spec(),
                 conv2d_spec(opt.stem_filters, 2 * opt.stem_filters, 3, 2, 1), relu_spec(),
                 conv2d_spec(2 * opt.stem_filters, 4 * opt.stem_filters, 3, 2, 1), relu_spec(), gap_spec()};
      width = 4 * opt.stem_filters;
      break;
    }
  }
  if (heads != HeadSet::DiseaseOnly) d.sound_head = head(width, opt.head_hidden, kSoundClasses);
  if (heads != HeadSet::SoundOnly) d.disease_head = head(width, opt.head_hidden, kDiseaseClasses);
  return d;
}

std::uint64_t flop_count(const ModelDescription& desc) {
  if (desc.input_shape.empty()) throw Error(ErrorCode::UnresolvedShape, "model has no input shape");
  std::uint64_t total = 0;
  Shape shape = desc.input_shape;
  for (const auto& s : desc.trunk) {
    total += spec_macs(s, shape);
    shape = spec_output_shape(s, shape);
  }
  for (const auto* h : {&desc.sound_head, &desc.disease_head}) {
    Shape hs = shape;
    for (const auto& s : *h) {
      total += spec_macs(s, hs);
      hs = spec_output_shape(s, hs);
    }
  }
  return total;
}

// ---- MtlModel ---------------------------------------------------------------

template <typename T>
MtlModel<T>::MtlModel(ModelDescription desc) : desc_(std::move(desc)) {
  // Resolving shapes up front rejects inconsistent descriptions before any allocation.
  flop_count(desc_);
  for (const auto& s : desc_.trunk) trunk_.push_back(make_layer<T>(s));
  for (const auto& s : desc_.sound_head) sound_.push_back(make_layer<T>(s));
  for (const auto& s : desc_.disease_head) disease_.push_back(make_layer<T>(s));
}

template <typename T>
void MtlModel<T>::init(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  for (Stack* stack : {&trunk_, &sound_, &disease_})
    for (auto& layer : *stack) layer->init(rng);
}

template <typename T>
Tensor<T> MtlModel<T>::run(Stack& stack, Tensor<T> x, Mode mode, std::size_t stop) {
  for (std::size_t i = 0; i < stop; ++i) x = stack[i]->forward(x, mode);
  return x;
}

template <typename T>
Tensor<T> MtlModel<T>::run_back(Stack& stack, Tensor<T> dy, std::size_t from) {
  for (std::size_t i = from; i-- > 0;) dy = stack[i]->backward(dy);
  return dy;
}

template <typename T>
ModelOutput<T> MtlModel<T>::forward(const Tensor<T>& x, Mode mode) {
  Shape expected{x.rank() ? x.dim(0) : 0};
  expected.insert(expected.end(), desc_.input_shape.begin(), desc_.input_shape.end());
  if (x.shape != expected)
    throw Error(ErrorCode::ShapeMismatch, "model input " + shape_string(x.shape) + ", expected [N]" +
                                              shape_string(desc_.input_shape));
  Tensor<T> features = run(trunk_, x, mode, trunk_.size());
  ModelOutput<T> out;
  if (!sound_.empty()) out.sound_logits = run(sound_, features, mode, sound_.size() - 1);
  if (!disease_.empty()) out.disease_logits = run(disease_, features, mode, disease_.size() - 1);
  return out;
}

template <typename T>
void MtlModel<T>::backward(const Tensor<T>* d_sound, const Tensor<T>* d_disease) {
  Tensor<T> d_features;
  auto head_back = [&](Stack& stack, const Tensor<T>* dy) {
    if (stack.empty()) return;
    if (!dy) {
      for (auto& layer : stack)
        for (auto* p : layer->params()) p->grad.fill(T(0));
      return;
    }
    Tensor<T> g = run_back(stack, *dy, stack.size() - 1);
    if (d_features.data.empty()) {
      d_features = std::move(g);
    } else {
      for (std::size_t i = 0; i < g.size(); ++i) d_features[i] += g[i];
    }
  };
  head_back(sound_, d_sound);
  head_back(disease_, d_disease);
  if (d_features.data.empty()) {
    for (auto& layer : trunk_)
      for (auto* p : layer->params()) p->grad.fill(T(0));
    return;
  }
  run_back(trunk_, std::move(d_features), trunk_.size());
}

template <typename T>
std::vector<NamedParam<T>> MtlModel<T>::named_params() {
  std::vector<NamedParam<T>> out;
  auto collect = [&](Stack& stack, const std::string& prefix) {
    for (std::size_t i = 0; i < stack.size(); ++i)
      for (auto* p : stack[i]->params()) out.push_back({prefix + "." + std::to_string(i) + "." + p->name, p});
  };
  collect(trunk_, "trunk");
  collect(sound_, "sound");
  collect(disease_, "disease");
  return out;
}

template <typename T>
std::vector<NamedBuffer<T>> MtlModel<T>::named_buffers() {
  std::vector<NamedBuffer<T>> out;
  auto collect = [&](Stack& stack, const std::string& prefix) {
    for (std::size_t i = 0; i < stack.size(); ++i)
      for (auto& [name, t] : stack[i]->buffers()) out.push_back({prefix + "." + std::to_string(i) + "." + name, t});
  };
  collect(trunk_, "trunk");
  collect(sound_, "sound");
  collect(disease_, "disease");
  return out;
}

template <typename T>
std::vector<Param<T>*> MtlModel<T>::params() {
  std::vector<Param<T>*> out;
  for (auto& np : named_params()) out.push_back(np.param);
  return out;
}

template <typename T>
Tensor<T> MtlModel<T>::softmax_sound(const Tensor<T>& logits) {
  return sound_.back()->forward(logits, Mode::Infer);
}

template <typename T>
Tensor<T> MtlModel<T>::softmax_disease(const Tensor<T>& logits) {
  return disease_.back()->forward(logits, Mode::Infer);
}

template <typename T>
MtlModel<T> build_model(ArchId arch, const Shape& input_shape, std::uint64_t seed, HeadSet heads,
                        const ArchOptions& options) {
  if (input_shape.size() != 3 || input_shape[0] != 1)
    throw Error(ErrorCode::ShapeMismatch, "input shape must be (1, n_coefficients, target_frames), got " +
                                              shape_string(input_shape));
  MtlModel<T> model(describe_model(arch, input_shape, heads, options));
  model.init(seed);
  return model;
}

// ---- loss ---------------------------------------------------------------------

void JointLossConfig::validate() const {
  if (!(w_sound > 0.0 && w_disease > 0.0)) throw Error(ErrorCode::InvalidArgument, "task weights must be positive");
  if (!(lambda_reg >= 0.0)) throw Error(ErrorCode::InvalidArgument, "lambda_reg must be >= 0");
}

template <typename T>
double weight_norm_sq(MtlModel<T>& model) {
  double acc = 0.0;
  for (auto* p : model.params())
    if (p->regularized)
      for (T v : p->value.data) acc += static_cast<double>(v) * v;
  return acc;
}

template <typename T>
void add_weight_decay(MtlModel<T>& model, double lambda) {
  if (lambda == 0.0) return;
  for (auto* p : model.params())
    if (p->regularized)
      for (std::size_t i = 0; i < p->value.size(); ++i)
        p->grad[i] = static_cast<T>(p->grad[i] + 2.0 * lambda * p->value[i]);
}

template <typename T>
JointLoss<T> joint_loss(const ModelOutput<T>& out, std::span<const int> sound_targets,
                        std::span<const int> disease_targets, MtlModel<T>& model, const JointLossConfig& cfg) {
  JointLoss<T> jl;
  const bool has_s = model.has_sound_head(), has_d = model.has_disease_head();
  if (has_s && has_d && out.sound_logits.dim(0) != out.disease_logits.dim(0))
    throw Error(ErrorCode::ShapeMismatch, "head batch sizes differ");
  if (has_s) {
    jl.sound = softmax_cross_entropy(out.sound_logits, sound_targets, cfg.w_sound);
    jl.sound_ce = jl.sound.loss;
  }
  if (has_d) {
    jl.disease = softmax_cross_entropy(out.disease_logits, disease_targets, cfg.w_disease);
    jl.disease_ce = jl.disease.loss;
  }
  jl.reg = cfg.lambda_reg > 0.0 ? weight_norm_sq(model) : 0.0;
  jl.total = cfg.w_sound * jl.sound_ce + cfg.w_disease * jl.disease_ce + cfg.lambda_reg * jl.reg;
  return jl;
}

// ---- training -----------------------------------------------------------------

void TrainConfig::validate() const {
  if (epochs < 1) throw Error(ErrorCode::InvalidArgument, "epochs must be >= 1");
  if (batch_size < 1) throw Error(ErrorCode::InvalidArgument, "batch_size must be >= 1");
  if (!(lr > 0.0)) throw Error(ErrorCode::InvalidArgument, "learning rate must be positive");
}

template <typename T>
std::vector<int> argmax_rows(const Tensor<T>& scores) {
  if (scores.rank() != 2) throw Error(ErrorCode::ShapeMismatch, "argmax expects [N, K]");
  const std::size_t n = scores.dim(0), k = scores.dim(1);
  std::vector<int> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    const T* row = scores.ptr() + i * k;
    out[i] = static_cast<int>(std::max_element(row, row + k) - row);
  }
  return out;
}

namespace {

std::size_t count_equal(const std::vector<int>& a, std::span<const int> b) {
  std::size_t hits = 0;
  for (std::size_t i = 0; i < a.size(); ++i) hits += a[i] == b[i];
  return hits;
}

}  // namespace

template <typename T>
double evaluate_loss(MtlModel<T>& model, std::span<const LabeledExample> examples, const JointLossConfig& cfg,
                     std::size_t chunk) {
  if (examples.empty()) return 0.0;
  double sound = 0.0, disease = 0.0;
  for (std::size_t start = 0; start < examples.size(); start += chunk) {
    const std::size_t stop = std::min(examples.size(), start + chunk);
    std::vector<std::size_t> idx(stop - start);
    std::iota(idx.begin(), idx.end(), start);
    auto batch = make_batch<T>(examples, idx);
    auto out = model.forward(batch.inputs, Mode::Infer);
    const double n = static_cast<double>(idx.size());
    if (model.has_sound_head()) sound += n * cross_entropy(softmax_forward(out.sound_logits), batch.sound);
    if (model.has_disease_head()) disease += n * cross_entropy(softmax_forward(out.disease_logits), batch.disease);
  }
  const double n = static_cast<double>(examples.size());
  return cfg.w_sound * sound / n + cfg.w_disease * disease / n + cfg.lambda_reg * weight_norm_sq(model);
}

template <typename T>
std::vector<EpochRecord> train(MtlModel<T>& model, std::span<const LabeledExample> train_set,
                               std::span<const LabeledExample> val_set, const TrainConfig& train_cfg,
                               const JointLossConfig& loss_cfg, const EpochCallback& on_epoch) {
  train_cfg.validate();
  loss_cfg.validate();
  if (train_set.empty()) throw Error(ErrorCode::EmptyTrainingSet, "no training examples");

  AdamState<T> adam;
  adam.lr = train_cfg.lr;
  adam.beta1 = train_cfg.beta1;
  adam.beta2 = train_cfg.beta2;
  adam.eps = train_cfg.eps;
  auto params = model.params();

  std::mt19937_64 rng(train_cfg.seed);
  std::vector<std::size_t> order(train_set.size());
  std::iota(order.begin(), order.end(), 0);
  const auto batch = static_cast<std::size_t>(train_cfg.batch_size);

  std::vector<EpochRecord> history;
  for (int epoch = 1; epoch <= train_cfg.epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    std::shuffle(order.begin(), order.end(), rng);
    EpochRecord rec;
    rec.epoch = epoch;
    double loss_sum = 0.0;
    std::size_t sound_hits = 0, disease_hits = 0;
    for (std::size_t start = 0; start < order.size(); start += batch) {
      std::span<const std::size_t> idx(order.data() + start, std::min(batch, order.size() - start));
      auto b = make_batch<T>(train_set, idx);
      auto out = model.forward(b.inputs, Mode::Train);
      auto jl = joint_loss(out, b.sound, b.disease, model, loss_cfg);
      // ReLU maps NaN to 0, so a poisoned input or weight can hide behind a finite loss.
      if (!std::isfinite(jl.total) || !b.inputs.all_finite() || !out.sound_logits.all_finite() ||
          !out.disease_logits.all_finite())
        throw Error(ErrorCode::DivergenceError,
                    "non-finite joint loss at epoch " + std::to_string(epoch) + ", step " +
                        std::to_string(rec.steps + 1) + "; last good epoch " + std::to_string(epoch - 1));
      model.backward(model.has_sound_head() ? &jl.sound.dlogits : nullptr,
                     model.has_disease_head() ? &jl.disease.dlogits : nullptr);
      add_weight_decay(model, loss_cfg.lambda_reg);
      adam_step<T>(params, adam);
      ++rec.steps;
      loss_sum += jl.total * static_cast<double>(idx.size());
      if (model.has_sound_head()) sound_hits += count_equal(argmax_rows(jl.sound.probs), b.sound);
      if (model.has_disease_head()) disease_hits += count_equal(argmax_rows(jl.disease.probs), b.disease);
    }
    const double n = static_cast<double>(train_set.size());
    rec.train_loss = loss_sum / n;
    rec.train_sound_acc = static_cast<double>(sound_hits) / n;
    rec.train_disease_acc = static_cast<double>(disease_hits) / n;
    if (!val_set.empty()) {
      auto pred = predict(model, val_set);
      std::vector<int> vs, vd;
      for (const auto& e : val_set) {
        vs.push_back(static_cast<int>(e.sound));
        vd.push_back(static_cast<int>(e.disease));
      }
      rec.val_loss = evaluate_loss(model, val_set, loss_cfg);
      rec.val_sound_acc = static_cast<double>(count_equal(pred.sound, vs)) / static_cast<double>(vs.size());
      rec.val_disease_acc = static_cast<double>(count_equal(pred.disease, vd)) / static_cast<double>(vd.size());
    }
    rec.wall_time_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    history.push_back(rec);
    if (on_epoch) on_epoch(rec);
  }
  return history;
}

template <typename T>
Prediction<T> predict(MtlModel<T>& model, const Tensor<T>& inputs) {
  auto out = model.forward(inputs, Mode::Infer);
  Prediction<T> p;
  if (model.has_sound_head()) {
    p.sound_probs = model.softmax_sound(out.sound_logits);
    p.sound = argmax_rows(p.sound_probs);
  }
  if (model.has_disease_head()) {
    p.disease_probs = model.softmax_disease(out.disease_logits);
    p.disease = argmax_rows(p.disease_probs);
  }
  return p;
}

template <typename T>
Prediction<T> predict(MtlModel<T>& model, std::span<const LabeledExample> examples, std::size_t chunk) {
  Prediction<T> all;
  auto append = [](Tensor<T>& dst, const Tensor<T>& src) {
    if (src.data.empty()) return;
    if (dst.data.empty()) {
      dst = src;
      return;
    }
    dst.shape[0] += src.shape[0];
    dst.data.insert(dst.data.end(), src.data.begin(), src.data.end());
  };
  for (std::size_t start = 0; start < examples.size(); start += chunk) {
    const std::size_t stop = std::min(examples.size(), start + chunk);
    std::vector<std::size_t> idx(stop - start);
    std::iota(idx.begin(), idx.end(), start);
    auto p = predict(model, make_batch<T>(examples, idx).inputs);
    append(all.sound_probs, p.sound_probs);
    append(all.disease_probs, p.disease_probs);
    all.sound.insert(all.sound.end(), p.sound.begin(), p.sound.end());
    all.disease.insert(all.disease.end(), p.disease.begin(), p.disease.end());
  }
  return all;
}

#define LUNGMTL_INSTANTIATE(T)                                                                                    \
  template class MtlModel<T>;                                                                                     \
  template MtlModel<T> build_model<T>(ArchId, const Shape&, std::uint64_t, HeadSet, const ArchOptions&);          \
  template double weight_norm_sq(MtlModel<T>&);                                                                   \
  template void add_weight_decay(MtlModel<T>&, double);                                                           \
  template JointLoss<T> joint_loss(const ModelOutput<T>&, std::span<const int>, std::span<const int>,             \
                                   MtlModel<T>&, const JointLossConfig&);                                         \
  template std::vector<EpochRecord> train(MtlModel<T>&, std::span<const LabeledExample>,                         \
                                          std::span<const LabeledExample>, const TrainConfig&,                    \
                                          const JointLossConfig&, const EpochCallback&);                          \
  template Prediction<T> predict(MtlModel<T>&, const Tensor<T>&);                                                 \
  template Prediction<T> predict(MtlModel<T>&, std::span<const LabeledExample>, std::size_t);                     \
  template double evaluate_loss(MtlModel<T>&, std::span<const LabeledExample>, const JointLossConfig&,            \
                                std::size_t);                                                                     \
  template std::vector<int> argmax_rows(const Tensor<T>&);

LUNGMTL_INSTANTIATE(float)
LUNGMTL_INSTANTIATE(double)

#undef LUNGMTL_INSTANTIATE

}  // namespace lungmtl
