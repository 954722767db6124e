#pragma once

#include <chrono>
#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "lungmtl/dataset.hpp"
#include "lungmtl/layers.hpp"

namespace lungmtl {

enum class ArchId { MobileNetMtl, Cnn2dMtl };
enum class HeadSet { Both, SoundOnly, DiseaseOnly };

std::string_view to_string(ArchId arch);
ArchId arch_from_string(std::string_view name);  // throws UnknownArch

// Channel widths. The defaults are the full-size architectures; tests shrink them.
struct ArchOptions {
  int stem_filters = 16;
  std::vector<int> block_filters{32, 64, 128, 256};
  int tail_filters = 256;
  int head_hidden = 128;
};

// Everything needed to rebuild a model without its weights.
struct ModelDescription {
  ArchId arch = ArchId::MobileNetMtl;
  HeadSet heads = HeadSet::Both;
  Shape input_shape;  // per example: {1, n_coefficients, target_frames}
  std::vector<LayerSpec> trunk;
  std::vector<LayerSpec> sound_head;    // ends in Softmax; empty when absent
  std::vector<LayerSpec> disease_head;  // ends in Softmax; empty when absent
};

ModelDescription describe_model(ArchId arch, const Shape& input_shape, HeadSet heads = HeadSet::Both,
                                const ArchOptions& options = {});

// Multiply-accumulates of one forward pass for one example; throws UnresolvedShape when the
// input shape is missing.
std::uint64_t flop_count(const ModelDescription& desc);

template <typename T>
struct ModelOutput {
  Tensor<T> sound_logits;
  Tensor<T> disease_logits;
};

template <typename T>
struct NamedParam {
  std::string name;
  Param<T>* param;
};

template <typename T>
struct NamedBuffer {
  std::string name;
  Tensor<T>* tensor;
};

// Shared trunk feeding two task heads (hard parameter sharing).
template <typename T>
class MtlModel {
 public:
  explicit MtlModel(ModelDescription desc);

  const ModelDescription& description() const { return desc_; }
  bool has_sound_head() const { return !sound_.empty(); }
  bool has_disease_head() const { return !disease_.empty(); }

  void init(std::uint64_t seed);

  // Logits of both heads; the trailing softmax layers are not applied.
  ModelOutput<T> forward(const Tensor<T>& x, Mode mode);
  // Backpropagates head gradients (either may be null) through the heads and the trunk,
  // overwriting every parameter gradient. A null head gets zero gradients.
  void backward(const Tensor<T>* d_sound_logits, const Tensor<T>* d_disease_logits);

  std::vector<NamedParam<T>> named_params();
  std::vector<NamedBuffer<T>> named_buffers();
  std::vector<Param<T>*> params();

  Tensor<T> softmax_sound(const Tensor<T>& logits);
  Tensor<T> softmax_disease(const Tensor<T>& logits);

 private:
  using Stack = std::vector<std::unique_ptr<Layer<T>>>;
  static Tensor<T> run(Stack& stack, Tensor<T> x, Mode mode, std::size_t stop);
  static Tensor<T> run_back(Stack& stack, Tensor<T> dy, std::size_t from);

  ModelDescription desc_;
  Stack trunk_, sound_, disease_;
};

template <typename T>
MtlModel<T> build_model(ArchId arch, const Shape& input_shape, std::uint64_t seed, HeadSet heads = HeadSet::Both,
                        const ArchOptions& options = {});

struct JointLossConfig {
  double w_sound = 1.0;
  double w_disease = 1.0;
  double lambda_reg = 1e-4;
  void validate() const;
};

template <typename T>
struct JointLoss {
  double total = 0.0;
  double sound_ce = 0.0;
  double disease_ce = 0.0;
  double reg = 0.0;  // sum of squared regularized weights, before lambda
  SoftmaxCrossEntropy<T> sound;
  SoftmaxCrossEntropy<T> disease;
};

// Sum of squared entries of every regularized parameter (kernels and dense weights).
template <typename T>
double weight_norm_sq(MtlModel<T>& model);
// Adds 2 * lambda * W to the gradient of every regularized parameter.
template <typename T>
void add_weight_decay(MtlModel<T>& model, double lambda);

// L = w_s * CE_sound + w_d * CE_disease + lambda * ||W||^2. Gradients are with respect to the
// logits of each head, already scaled by the task weights.
template <typename T>
JointLoss<T> joint_loss(const ModelOutput<T>& out, std::span<const int> sound_targets,
                        std::span<const int> disease_targets, MtlModel<T>& model, const JointLossConfig& cfg);

struct TrainConfig {
  int epochs = 20;
  int batch_size = 16;
  std::uint64_t seed = 0;
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  void validate() const;
};

struct EpochRecord {
  int epoch = 0;
  double train_loss = 0.0;
  double train_sound_acc = 0.0;
  double train_disease_acc = 0.0;
  std::optional<double> val_loss;
  std::optional<double> val_sound_acc;
  std::optional<double> val_disease_acc;
  std::size_t steps = 0;
  double wall_time_s = 0.0;
};

using EpochCallback = std::function<void(const EpochRecord&)>;

// Seeded shuffle -> batch -> forward -> joint loss -> backward -> Adam, for every epoch.
// The model is left at its final-epoch weights. Non-finite losses raise DivergenceError.
template <typename T>
std::vector<EpochRecord> train(MtlModel<T>& model, std::span<const LabeledExample> train_set,
                               std::span<const LabeledExample> val_set, const TrainConfig& train_cfg,
                               const JointLossConfig& loss_cfg, const EpochCallback& on_epoch = {});

template <typename T>
struct Prediction {
  Tensor<T> sound_probs;    // [N, 4]
  Tensor<T> disease_probs;  // [N, 6]
  std::vector<int> sound;   // argmax, ties to the lower index
  std::vector<int> disease;
};

template <typename T>
Prediction<T> predict(MtlModel<T>& model, const Tensor<T>& inputs);
template <typename T>
Prediction<T> predict(MtlModel<T>& model, std::span<const LabeledExample> examples, std::size_t chunk = 32);

// Mean joint loss (task terms plus regularizer) in inference mode.
template <typename T>
double evaluate_loss(MtlModel<T>& model, std::span<const LabeledExample> examples, const JointLossConfig& cfg,
                     std::size_t chunk = 32);

// Row-wise argmax of an [N, K] tensor; ties go to the lower index.
template <typename T>
std::vector<int> argmax_rows(const Tensor<T>& scores);

}  // namespace lungmtl
