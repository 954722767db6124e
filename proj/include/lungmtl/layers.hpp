#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "lungmtl/tensor.hpp"

namespace lungmtl {

enum class LayerKind { Conv2D, DepthwiseConv2D, PointwiseConv2D, BatchNorm, ReLU, GlobalAvgPool, Dense, Softmax };

std::string_view to_string(LayerKind kind);
LayerKind layer_kind_from_string(std::string_view name);

enum class Mode { Train, Infer };

// Hyperparameters of one layer. Shapes are per example: {C, H, W} for feature maps, {D} for vectors.
struct LayerSpec {
  LayerKind kind = LayerKind::ReLU;
  int in_channels = 0;   // C (conv, batchnorm) or input width (dense)
  int out_channels = 0;  // F (conv) or output width (dense)
  int kernel = 1;
  int stride = 1;
  int padding = 0;
  double eps = 1e-5;
  double momentum = 0.9;

  bool operator==(const LayerSpec&) const = default;
};

// Throws ShapeMismatch when `in` is not acceptable, UnresolvedShape when it has a zero extent.
Shape spec_output_shape(const LayerSpec& spec, const Shape& in);
// Multiply-accumulates for one example. BatchNorm/ReLU/pooling/softmax count as zero.
std::uint64_t spec_macs(const LayerSpec& spec, const Shape& in);

template <typename T>
struct Param {
  std::string name;
  Tensor<T> value;
  Tensor<T> grad;
  bool regularized = false;  // kernels and dense weights; biases and batch-norm affine are not
};

// A layer caches what its backward pass needs during forward. backward() overwrites the
// gradients of its parameters and returns the gradient with respect to its input.
template <typename T>
class Layer {
 public:
  explicit Layer(LayerSpec spec) : spec_(spec) {}
  virtual ~Layer() = default;

  const LayerSpec& spec() const { return spec_; }
  LayerKind kind() const { return spec_.kind; }

  virtual Tensor<T> forward(const Tensor<T>& x, Mode mode) = 0;
  virtual Tensor<T> backward(const Tensor<T>& dy) = 0;

  virtual std::vector<Param<T>*> params() { return {}; }
  // Non-trainable state that must survive a checkpoint (batch-norm running statistics).
  virtual std::vector<std::pair<std::string, Tensor<T>*>> buffers() { return {}; }
  virtual void init(std::mt19937_64& rng) { (void)rng; }

  void clear_cache() { cached_ = false; }

 protected:
  void require_cache(const Tensor<T>& dy, const Shape& expected) const;
  void mark_cached(Shape out_shape) {
    cached_ = true;
    out_shape_ = std::move(out_shape);
  }

  LayerSpec spec_;
  bool cached_ = false;
  Shape out_shape_;
};

template <typename T>
std::unique_ptr<Layer<T>> make_layer(const LayerSpec& spec);

LayerSpec conv2d_spec(int in_c, int out_c, int kernel, int stride, int padding);
LayerSpec depthwise_spec(int channels, int kernel, int stride, int padding);
LayerSpec pointwise_spec(int in_c, int out_c);
LayerSpec batchnorm_spec(int channels);
LayerSpec relu_spec();
LayerSpec gap_spec();
LayerSpec dense_spec(int in, int out);
LayerSpec softmax_spec();

// ---- stateless kernels ----------------------------------------------------
// These are the forward maps the layers use, exposed for direct testing.

template <typename T>
Tensor<T> conv2d_forward(const Tensor<T>& x, const Tensor<T>& kernels, const Tensor<T>& bias, int stride, int padding);
template <typename T>
Tensor<T> depthwise_conv2d_forward(const Tensor<T>& x, const Tensor<T>& kernels, int stride, int padding);
template <typename T>
Tensor<T> pointwise_conv2d_forward(const Tensor<T>& x, const Tensor<T>& kernels);
template <typename T>
Tensor<T> relu_forward(const Tensor<T>& x);
template <typename T>
Tensor<T> global_avg_pool_forward(const Tensor<T>& x);
template <typename T>
Tensor<T> dense_forward(const Tensor<T>& x, const Tensor<T>& weights, const Tensor<T>& bias);
template <typename T>
Tensor<T> softmax_forward(const Tensor<T>& logits);

template <typename T>
struct BatchNormState {
  Tensor<T> running_mean;
  Tensor<T> running_var;
  double momentum = 0.9;
};

// Train mode normalizes by batch statistics and folds them into `state`; infer mode uses
// the running statistics.
template <typename T>
Tensor<T> batchnorm_forward(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta, double eps, Mode mode,
                            BatchNormState<T>& state);

// ---- losses ---------------------------------------------------------------

// -(1/N) sum ln(p[i, t_i] + 1e-12). Throws BadTarget for an index outside [0, K).
template <typename T>
double cross_entropy(const Tensor<T>& probs, std::span<const int> targets);

template <typename T>
struct SoftmaxCrossEntropy {
  double loss = 0.0;
  Tensor<T> probs;
  Tensor<T> dlogits;  // (probs - onehot) / N, scaled by `weight`
};

template <typename T>
SoftmaxCrossEntropy<T> softmax_cross_entropy(const Tensor<T>& logits, std::span<const int> targets, double weight = 1.0);

// ---- optimizer --------------------------------------------------------------

template <typename T>
struct AdamState {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::uint64_t t = 0;
  std::vector<Tensor<T>> m;
  std::vector<Tensor<T>> v;
};

// One bias-corrected Adam update over `params` (matched to state slots by position).
template <typename T>
void adam_step(std::span<Param<T>* const> params, AdamState<T>& state);

}  // namespace lungmtl
