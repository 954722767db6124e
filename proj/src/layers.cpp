#include "lungmtl/layers.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <sstream>

namespace lungmtl {

std::string shape_string(const Shape& shape) {
  std::ostringstream ss;
  ss << '(';
  for (std::size_t i = 0; i < shape.size(); ++i) ss << (i ? "," : "") << shape[i];
  ss << ')';
  return ss.str();
}

std::string_view to_string(LayerKind kind) {
  switch (kind) {
    case LayerKind::Conv2D: return "Conv2D";
    case LayerKind::DepthwiseConv2D: return "DepthwiseConv2D";
    case LayerKind::PointwiseConv2D: return "PointwiseConv2D";
    case LayerKind::BatchNorm: return "BatchNorm";
    case LayerKind::ReLU: return "ReLU";
    case LayerKind::GlobalAvgPool: return "GlobalAvgPool";
    case LayerKind::Dense: return "Dense";
    case LayerKind::Softmax: return "Softmax";
  }
  return "?";
}

LayerKind layer_kind_from_string(std::string_view name) {
  for (auto k : {LayerKind::Conv2D, LayerKind::DepthwiseConv2D, LayerKind::PointwiseConv2D, LayerKind::BatchNorm,
                 LayerKind::ReLU, LayerKind::GlobalAvgPool, LayerKind::Dense, LayerKind::Softmax})
    if (to_string(k) == name) return k;
  throw Error(ErrorCode::InvalidArgument, "unknown layer kind '" + std::string(name) + "'");
}

LayerSpec conv2d_spec(int in_c, int out_c, int kernel, int stride, int padding) {
  return {LayerKind::Conv2D, in_c, out_c, kernel, stride, padding};
}
LayerSpec depthwise_spec(int channels, int kernel, int stride, int padding) {
  return {LayerKind::DepthwiseConv2D, channels, channels, kernel, stride, padding};
}
LayerSpec pointwise_spec(int in_c, int out_c) { return {LayerKind::PointwiseConv2D, in_c, out_c}; }
LayerSpec batchnorm_spec(int channels) { return {LayerKind::BatchNorm, channels, channels}; }
LayerSpec relu_spec() { return {LayerKind::ReLU}; }
LayerSpec gap_spec() { return {LayerKind::GlobalAvgPool}; }
LayerSpec dense_spec(int in, int out) { return {LayerKind::Dense, in, out}; }
LayerSpec softmax_spec() { return {LayerKind::Softmax}; }

namespace {

[[noreturn]] void mismatch(const std::string& what) { throw Error(ErrorCode::ShapeMismatch, what); }

std::size_t conv_out(std::size_t in, int kernel, int stride, int padding) {
  const long span = static_cast<long>(in) + 2L * padding - kernel;
  if (span < 0 || stride < 1) mismatch("kernel larger than padded input");
  return static_cast<std::size_t>(span / stride + 1);
}

}  // namespace

Shape spec_output_shape(const LayerSpec& s, const Shape& in) {
  if (in.empty() || std::any_of(in.begin(), in.end(), [](std::size_t d) { return d == 0; }))
    throw Error(ErrorCode::UnresolvedShape, std::string(to_string(s.kind)) + " input shape " + shape_string(in));
  auto need_map = [&] {
    if (in.size() != 3) mismatch(std::string(to_string(s.kind)) + " expects {C,H,W}, got " + shape_string(in));
  };
  switch (s.kind) {
    case LayerKind::Conv2D:
    case LayerKind::DepthwiseConv2D:
      need_map();
      if (in[0] != static_cast<std::size_t>(s.in_channels)) mismatch("conv channel count " + shape_string(in));
      return {static_cast<std::size_t>(s.out_channels), conv_out(in[1], s.kernel, s.stride, s.padding),
              conv_out(in[2], s.kernel, s.stride, s.padding)};
    case LayerKind::PointwiseConv2D:
      need_map();
      if (in[0] != static_cast<std::size_t>(s.in_channels)) mismatch("pointwise channel count " + shape_string(in));
      return {static_cast<std::size_t>(s.out_channels), in[1], in[2]};
    case LayerKind::BatchNorm:
      if (in[0] != static_cast<std::size_t>(s.in_channels)) mismatch("batchnorm channel count " + shape_string(in));
      return in;
    case LayerKind::ReLU:
    case LayerKind::Softmax:
      return in;
    case LayerKind::GlobalAvgPool:
      need_map();
      return {in[0]};
    case LayerKind::Dense:
      if (in.size() != 1 || in[0] != static_cast<std::size_t>(s.in_channels))
        mismatch("dense expects {" + std::to_string(s.in_channels) + "}, got " + shape_string(in));
      return {static_cast<std::size_t>(s.out_channels)};
  }
  mismatch("unknown layer");
}

std::uint64_t spec_macs(const LayerSpec& s, const Shape& in) {
  const Shape out = spec_output_shape(s, in);
  const std::uint64_t k2 = static_cast<std::uint64_t>(s.kernel) * s.kernel;
  switch (s.kind) {
    case LayerKind::Conv2D:
      return k2 * in[0] * out[0] * out[1] * out[2];
    case LayerKind::DepthwiseConv2D:
      return k2 * in[0] * out[1] * out[2];
    case LayerKind::PointwiseConv2D:
      return static_cast<std::uint64_t>(in[0]) * out[0] * out[1] * out[2];
    case LayerKind::Dense:
      return static_cast<std::uint64_t>(in[0]) * out[0];
    default:
      return 0;
  }
}

// ---- stateless kernels ----------------------------------------------------

namespace {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MapMat = Eigen::Map<RowMat<T>>;
template <typename T>
using CMapMat = Eigen::Map<const RowMat<T>>;

struct ConvGeom {
  std::size_t n, c, h, w, kh, kw, oh, ow;
  int stride, pad;
  std::size_t patch() const { return c * kh * kw; }
  std::size_t pixels() const { return oh * ow; }
};

template <typename T>
ConvGeom conv_geom(const Tensor<T>& x, std::size_t kc, std::size_t kh, std::size_t kw, int stride, int pad) {
  if (x.rank() != 4) mismatch("conv input must be [N,C,H,W], got " + shape_string(x.shape));
  if (x.dim(1) != kc) mismatch("conv kernel channels differ from input " + shape_string(x.shape));
  if (stride < 1 || pad < 0) mismatch("stride must be >= 1 and padding >= 0");
  if (kh > x.dim(2) + 2 * static_cast<std::size_t>(pad) || kw > x.dim(3) + 2 * static_cast<std::size_t>(pad))
    mismatch("kernel larger than padded input");
  ConvGeom g{x.dim(0), x.dim(1), x.dim(2), x.dim(3), kh, kw, 0, 0, stride, pad};
  g.oh = (g.h + 2 * pad - kh) / stride + 1;
  g.ow = (g.w + 2 * pad - kw) / stride + 1;
  return g;
}

// cols is [C*kh*kw, OH*OW] for one example.
template <typename T>
void im2col(const T* x, const ConvGeom& g, T* cols) {
  for (std::size_t c = 0; c < g.c; ++c)
    for (std::size_t i = 0; i < g.kh; ++i)
      for (std::size_t j = 0; j < g.kw; ++j) {
        T* row = cols + ((c * g.kh + i) * g.kw + j) * g.pixels();
        for (std::size_t oy = 0; oy < g.oh; ++oy) {
          const long y = static_cast<long>(oy * g.stride + i) - g.pad;
          for (std::size_t ox = 0; ox < g.ow; ++ox) {
            const long xx = static_cast<long>(ox * g.stride + j) - g.pad;
            row[oy * g.ow + ox] = (y < 0 || y >= static_cast<long>(g.h) || xx < 0 || xx >= static_cast<long>(g.w))
                                      ? T(0)
                                      : x[(c * g.h + static_cast<std::size_t>(y)) * g.w + static_cast<std::size_t>(xx)];
          }
        }
      }
}

template <typename T>
void col2im_add(const T* cols, const ConvGeom& g, T* dx) {
  for (std::size_t c = 0; c < g.c; ++c)
    for (std::size_t i = 0; i < g.kh; ++i)
      for (std::size_t j = 0; j < g.kw; ++j) {
        const T* row = cols + ((c * g.kh + i) * g.kw + j) * g.pixels();
        for (std::size_t oy = 0; oy < g.oh; ++oy) {
          const long y = static_cast<long>(oy * g.stride + i) - g.pad;
          if (y < 0 || y >= static_cast<long>(g.h)) continue;
          for (std::size_t ox = 0; ox < g.ow; ++ox) {
            const long xx = static_cast<long>(ox * g.stride + j) - g.pad;
            if (xx < 0 || xx >= static_cast<long>(g.w)) continue;
            dx[(c * g.h + static_cast<std::size_t>(y)) * g.w + static_cast<std::size_t>(xx)] += row[oy * g.ow + ox];
          }
        }
      }
}

template <typename T>
void depthwise_accumulate(const T* x, const T* k, const ConvGeom& g, T* out) {
  for (std::size_t c = 0; c < g.c; ++c) {
    const T* xc = x + c * g.h * g.w;
    const T* kc = k + c * g.kh * g.kw;
    T* oc = out + c * g.pixels();
    for (std::size_t oy = 0; oy < g.oh; ++oy)
      for (std::size_t ox = 0; ox < g.ow; ++ox) {
        T acc = 0;
        for (std::size_t i = 0; i < g.kh; ++i) {
          const long y = static_cast<long>(oy * g.stride + i) - g.pad;
          if (y < 0 || y >= static_cast<long>(g.h)) continue;
          for (std::size_t j = 0; j < g.kw; ++j) {
            const long xx = static_cast<long>(ox * g.stride + j) - g.pad;
            if (xx < 0 || xx >= static_cast<long>(g.w)) continue;
            acc += xc[static_cast<std::size_t>(y) * g.w + static_cast<std::size_t>(xx)] * kc[i * g.kw + j];
          }
        }
        oc[oy * g.ow + ox] = acc;
      }
  }
}

}  // namespace

template <typename T>
Tensor<T> conv2d_forward(const Tensor<T>& x, const Tensor<T>& kernels, const Tensor<T>& bias, int stride, int padding) {
  if (kernels.rank() != 4) mismatch("conv kernels must be [F,C,kh,kw]");
  const ConvGeom g = conv_geom(x, kernels.dim(1), kernels.dim(2), kernels.dim(3), stride, padding);
  const std::size_t f = kernels.dim(0);
  if (bias.size() != f) mismatch("conv bias length differs from filter count");
  Tensor<T> out({g.n, f, g.oh, g.ow});
  std::vector<T> cols(g.patch() * g.pixels());
  CMapMat<T> w(kernels.ptr(), f, g.patch());
  for (std::size_t n = 0; n < g.n; ++n) {
    im2col(x.ptr() + n * g.c * g.h * g.w, g, cols.data());
    MapMat<T> o(out.ptr() + n * f * g.pixels(), f, g.pixels());
    o.noalias() = w * CMapMat<T>(cols.data(), g.patch(), g.pixels());
    for (std::size_t k = 0; k < f; ++k) o.row(k).array() += bias[k];
  }
  return out;
}

template <typename T>
Tensor<T> depthwise_conv2d_forward(const Tensor<T>& x, const Tensor<T>& kernels, int stride, int padding) {
  if (kernels.rank() != 3) mismatch("depthwise kernels must be [C,kh,kw]");
  const ConvGeom g = conv_geom(x, kernels.dim(0), kernels.dim(1), kernels.dim(2), stride, padding);
  Tensor<T> out({g.n, g.c, g.oh, g.ow});
  for (std::size_t n = 0; n < g.n; ++n)
    depthwise_accumulate(x.ptr() + n * g.c * g.h * g.w, kernels.ptr(), g, out.ptr() + n * g.c * g.pixels());
  return out;
}

template <typename T>
Tensor<T> pointwise_conv2d_forward(const Tensor<T>& x, const Tensor<T>& kernels) {
  if (x.rank() != 4) mismatch("pointwise input must be [N,C,H,W], got " + shape_string(x.shape));
  if (kernels.rank() != 2 || kernels.dim(1) != x.dim(1)) mismatch("pointwise kernels must be [F,C]");
  const std::size_t n = x.dim(0), c = x.dim(1), hw = x.dim(2) * x.dim(3), f = kernels.dim(0);
  Tensor<T> out({n, f, x.dim(2), x.dim(3)});
  CMapMat<T> w(kernels.ptr(), f, c);
  for (std::size_t i = 0; i < n; ++i)
    MapMat<T>(out.ptr() + i * f * hw, f, hw).noalias() = w * CMapMat<T>(x.ptr() + i * c * hw, c, hw);
  return out;
}

template <typename T>
Tensor<T> relu_forward(const Tensor<T>& x) {
  Tensor<T> y = x;
  for (auto& v : y.data) v = v > T(0) ? v : T(0);
  return y;
}

template <typename T>
Tensor<T> global_avg_pool_forward(const Tensor<T>& x) {
  if (x.rank() != 4) mismatch("global average pool expects [N,C,H,W], got " + shape_string(x.shape));
  const std::size_t n = x.dim(0), c = x.dim(1), hw = x.dim(2) * x.dim(3);
  Tensor<T> y({n, c});
  for (std::size_t i = 0; i < n * c; ++i) {
    double acc = 0.0;
    for (std::size_t k = 0; k < hw; ++k) acc += x[i * hw + k];
    y[i] = static_cast<T>(acc / static_cast<double>(hw));
  }
  return y;
}

template <typename T>
Tensor<T> dense_forward(const Tensor<T>& x, const Tensor<T>& weights, const Tensor<T>& bias) {
  if (x.rank() != 2 || weights.rank() != 2 || weights.dim(0) != x.dim(1) || bias.size() != weights.dim(1))
    mismatch("dense: x " + shape_string(x.shape) + " vs W " + shape_string(weights.shape));
  const std::size_t n = x.dim(0), in = x.dim(1), out = weights.dim(1);
  Tensor<T> y({n, out});
  MapMat<T> ym(y.ptr(), n, out);
  ym.noalias() = CMapMat<T>(x.ptr(), n, in) * CMapMat<T>(weights.ptr(), in, out);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < out; ++j) ym(i, j) += bias[j];
  return y;
}

template <typename T>
Tensor<T> softmax_forward(const Tensor<T>& logits) {
  if (logits.rank() != 2) mismatch("softmax expects [N,K], got " + shape_string(logits.shape));
  const std::size_t n = logits.dim(0), k = logits.dim(1);
  Tensor<T> p(logits.shape);
  for (std::size_t i = 0; i < n; ++i) {
    const T* row = logits.ptr() + i * k;
    const T mx = *std::max_element(row, row + k);
    double sum = 0.0;
    for (std::size_t j = 0; j < k; ++j) sum += std::exp(static_cast<double>(row[j] - mx));
    for (std::size_t j = 0; j < k; ++j) p[i * k + j] = static_cast<T>(std::exp(static_cast<double>(row[j] - mx)) / sum);
  }
  return p;
}

namespace {

struct ChannelGeom {
  std::size_t n, c, inner;
};

template <typename T>
ChannelGeom channel_geom(const Tensor<T>& x) {
  if (x.rank() == 4) return {x.dim(0), x.dim(1), x.dim(2) * x.dim(3)};
  if (x.rank() == 2) return {x.dim(0), x.dim(1), 1};
  mismatch("batchnorm expects [N,C,H,W] or [N,C], got " + shape_string(x.shape));
}

template <typename T>
struct BatchNormPass {
  Tensor<T> y;
  Tensor<T> xhat;
  std::vector<double> inv_std;
};

template <typename T>
BatchNormPass<T> batchnorm_pass(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta, double eps,
                                Mode mode, BatchNormState<T>& state) {
  const ChannelGeom g = channel_geom(x);
  if (gamma.size() != g.c || beta.size() != g.c) mismatch("batchnorm gamma/beta length differs from channels");
  if (state.running_mean.size() != g.c || state.running_var.size() != g.c)
    mismatch("batchnorm running statistics length differs from channels");
  BatchNormPass<T> out{Tensor<T>(x.shape), Tensor<T>(x.shape), std::vector<double>(g.c)};
  const double m = static_cast<double>(g.n * g.inner);
  for (std::size_t c = 0; c < g.c; ++c) {
    double mean = 0.0, var = 0.0;
    if (mode == Mode::Train) {
      for (std::size_t i = 0; i < g.n; ++i)
        for (std::size_t k = 0; k < g.inner; ++k) mean += x[(i * g.c + c) * g.inner + k];
      mean /= m;
      for (std::size_t i = 0; i < g.n; ++i)
        for (std::size_t k = 0; k < g.inner; ++k) {
          const double d = x[(i * g.c + c) * g.inner + k] - mean;
          var += d * d;
        }
      var /= m;
      const double mom = state.momentum;
      state.running_mean[c] = static_cast<T>(mom * state.running_mean[c] + (1.0 - mom) * mean);
      state.running_var[c] = static_cast<T>(mom * state.running_var[c] + (1.0 - mom) * var);
    } else {
      mean = state.running_mean[c];
      var = state.running_var[c];
    }
    const double inv = 1.0 / std::sqrt(var + eps);
    out.inv_std[c] = inv;
    for (std::size_t i = 0; i < g.n; ++i)
      for (std::size_t k = 0; k < g.inner; ++k) {
        const std::size_t at = (i * g.c + c) * g.inner + k;
        const double xh = (x[at] - mean) * inv;
        out.xhat[at] = static_cast<T>(xh);
        out.y[at] = static_cast<T>(gamma[c] * xh + beta[c]);
      }
  }
  return out;
}

}  // namespace

template <typename T>
Tensor<T> batchnorm_forward(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta, double eps, Mode mode,
                            BatchNormState<T>& state) {
  return batchnorm_pass(x, gamma, beta, eps, mode, state).y;
}

// ---- losses ---------------------------------------------------------------

namespace {

void check_targets(std::size_t n, std::size_t k, std::span<const int> targets) {
  if (targets.size() != n) mismatch("target count differs from batch size");
  for (int t : targets)
    if (t < 0 || static_cast<std::size_t>(t) >= k)
      throw Error(ErrorCode::BadTarget, "class index " + std::to_string(t) + " outside [0, " + std::to_string(k) + ")");
}

}  // namespace

template <typename T>
double cross_entropy(const Tensor<T>& probs, std::span<const int> targets) {
  if (probs.rank() != 2) mismatch("cross entropy expects [N,K]");
  const std::size_t n = probs.dim(0), k = probs.dim(1);
  check_targets(n, k, targets);
  double loss = 0.0;
  for (std::size_t i = 0; i < n; ++i) loss -= std::log(static_cast<double>(probs[i * k + targets[i]]) + 1e-12);
  return n ? loss / static_cast<double>(n) : 0.0;
}

template <typename T>
SoftmaxCrossEntropy<T> softmax_cross_entropy(const Tensor<T>& logits, std::span<const int> targets, double weight) {
  SoftmaxCrossEntropy<T> out;
  out.probs = softmax_forward(logits);
  out.loss = cross_entropy(out.probs, targets);
  const std::size_t n = logits.dim(0), k = logits.dim(1);
  out.dlogits = out.probs;
  const double scale = n ? weight / static_cast<double>(n) : 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < k; ++j) {
      const double onehot = static_cast<std::size_t>(targets[i]) == j ? 1.0 : 0.0;
      out.dlogits[i * k + j] = static_cast<T>((out.probs[i * k + j] - onehot) * scale);
    }
  }
  return out;
}

// ---- optimizer --------------------------------------------------------------

template <typename T>
void adam_step(std::span<Param<T>* const> params, AdamState<T>& state) {
  if (state.m.size() != params.size()) {
    state.m.clear();
    state.v.clear();
    for (auto* p : params) {
      state.m.emplace_back(p->value.shape);
      state.v.emplace_back(p->value.shape);
    }
  }
  ++state.t;
  const double c1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.t));
  const double c2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.t));
  for (std::size_t i = 0; i < params.size(); ++i) {
    Param<T>& p = *params[i];
    if (p.grad.shape != p.value.shape || state.m[i].shape != p.value.shape)
      mismatch("adam: gradient/moment shape differs for " + p.name);
    auto& m = state.m[i].data;
    auto& v = state.v[i].data;
    for (std::size_t j = 0; j < p.value.size(); ++j) {
      const double g = p.grad[j];
      const double mj = state.beta1 * m[j] + (1.0 - state.beta1) * g;
      const double vj = state.beta2 * v[j] + (1.0 - state.beta2) * g * g;
      m[j] = static_cast<T>(mj);
      v[j] = static_cast<T>(vj);
      p.value[j] = static_cast<T>(p.value[j] - state.lr * (mj / c1) / (std::sqrt(vj / c2) + state.eps));
    }
  }
}

// ---- layers -------------------------------------------------------------------

template <typename T>
void Layer<T>::require_cache(const Tensor<T>& dy, const Shape& expected) const {
  if (!cached_)
    throw Error(ErrorCode::StaleCache, std::string(to_string(spec_.kind)) + ": backward without a forward pass");
  if (dy.shape != expected)
    throw Error(ErrorCode::StaleCache, std::string(to_string(spec_.kind)) + ": gradient shape " +
                                           shape_string(dy.shape) + " does not match cached output " +
                                           shape_string(expected));
}

namespace {

template <typename T>
void kaiming_uniform(Tensor<T>& w, std::size_t fan_in, std::mt19937_64& rng) {
  const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
  std::uniform_real_distribution<double> dist(-bound, bound);
  for (auto& v : w.data) v = static_cast<T>(dist(rng));
}

template <typename T>
class Conv2DLayer final : public Layer<T> {
 public:
  explicit Conv2DLayer(const LayerSpec& s) : Layer<T>(s) {
    const std::size_t f = s.out_channels, c = s.in_channels, k = s.kernel;
    kernel_ = {"kernel", Tensor<T>({f, c, k, k}), Tensor<T>({f, c, k, k}), true};
    bias_ = {"bias", Tensor<T>({f}), Tensor<T>({f}), false};
  }

  Tensor<T> forward(const Tensor<T>& x, Mode) override {
    const auto& s = this->spec_;
    geom_ = conv_geom(x, kernel_.value.dim(1), s.kernel, s.kernel, s.stride, s.padding);
    const std::size_t f = kernel_.value.dim(0);
    cols_.resize(geom_.n * geom_.patch() * geom_.pixels());
    Tensor<T> out({geom_.n, f, geom_.oh, geom_.ow});
    CMapMat<T> w(kernel_.value.ptr(), f, geom_.patch());
    for (std::size_t n = 0; n < geom_.n; ++n) {
      T* cols = cols_.data() + n * geom_.patch() * geom_.pixels();
      im2col(x.ptr() + n * geom_.c * geom_.h * geom_.w, geom_, cols);
      MapMat<T> o(out.ptr() + n * f * geom_.pixels(), f, geom_.pixels());
      o.noalias() = w * CMapMat<T>(cols, geom_.patch(), geom_.pixels());
      for (std::size_t k = 0; k < f; ++k) o.row(k).array() += bias_.value[k];
    }
    this->mark_cached(out.shape);
    return out;
  }

  Tensor<T> backward(const Tensor<T>& dy) override {
    this->require_cache(dy, this->out_shape_);
    const std::size_t f = kernel_.value.dim(0), patch = geom_.patch(), px = geom_.pixels();
    kernel_.grad.fill(0);
    bias_.grad.fill(0);
    Tensor<T> dx({geom_.n, geom_.c, geom_.h, geom_.w});
    std::vector<T> dcols(patch * px);
    MapMat<T> dw(kernel_.grad.ptr(), f, patch);
    CMapMat<T> w(kernel_.value.ptr(), f, patch);
    for (std::size_t n = 0; n < geom_.n; ++n) {
      CMapMat<T> g(dy.ptr() + n * f * px, f, px);
      CMapMat<T> cols(cols_.data() + n * patch * px, patch, px);
      dw.noalias() += g * cols.transpose();
      for (std::size_t k = 0; k < f; ++k) bias_.grad[k] += g.row(k).sum();
      MapMat<T>(dcols.data(), patch, px).noalias() = w.transpose() * g;
      col2im_add(dcols.data(), geom_, dx.ptr() + n * geom_.c * geom_.h * geom_.w);
    }
    return dx;
  }

  std::vector<Param<T>*> params() override { return {&kernel_, &bias_}; }
  void init(std::mt19937_64& rng) override {
    kaiming_uniform(kernel_.value, kernel_.value.size() / kernel_.value.dim(0), rng);
    bias_.value.fill(0);
  }

 private:
  Param<T> kernel_, bias_;
  ConvGeom geom_{};
  std::vector<T> cols_;
};

template <typename T>
class DepthwiseLayer final : public Layer<T> {
 public:
  explicit DepthwiseLayer(const LayerSpec& s) : Layer<T>(s) {
    const std::size_t c = s.in_channels, k = s.kernel;
    kernel_ = {"kernel", Tensor<T>({c, k, k}), Tensor<T>({c, k, k}), true};
  }

  Tensor<T> forward(const Tensor<T>& x, Mode) override {
    x_ = x;
    Tensor<T> out = depthwise_conv2d_forward(x, kernel_.value, this->spec_.stride, this->spec_.padding);
    this->mark_cached(out.shape);
    return out;
  }

  Tensor<T> backward(const Tensor<T>& dy) override {
    this->require_cache(dy, this->out_shape_);
    const ConvGeom g = conv_geom(x_, kernel_.value.dim(0), this->spec_.kernel, this->spec_.kernel,
                                 this->spec_.stride, this->spec_.padding);
    kernel_.grad.fill(0);
    Tensor<T> dx(x_.shape);
    for (std::size_t n = 0; n < g.n; ++n)
      for (std::size_t c = 0; c < g.c; ++c) {
        const T* xc = x_.ptr() + (n * g.c + c) * g.h * g.w;
        T* dxc = dx.ptr() + (n * g.c + c) * g.h * g.w;
        const T* kc = kernel_.value.ptr() + c * g.kh * g.kw;
        T* dkc = kernel_.grad.ptr() + c * g.kh * g.kw;
        const T* gc = dy.ptr() + (n * g.c + c) * g.pixels();
        for (std::size_t oy = 0; oy < g.oh; ++oy)
          for (std::size_t ox = 0; ox < g.ow; ++ox) {
            const T go = gc[oy * g.ow + ox];
            for (std::size_t i = 0; i < g.kh; ++i) {
              const long y = static_cast<long>(oy * g.stride + i) - g.pad;
              if (y < 0 || y >= static_cast<long>(g.h)) continue;
              for (std::size_t j = 0; j < g.kw; ++j) {
                const long xx = static_cast<long>(ox * g.stride + j) - g.pad;
                if (xx < 0 || xx >= static_cast<long>(g.w)) continue;
                const std::size_t at = static_cast<std::size_t>(y) * g.w + static_cast<std::size_t>(xx);
                dkc[i * g.kw + j] += go * xc[at];
                dxc[at] += go * kc[i * g.kw + j];
              }
            }
          }
      }
    return dx;
  }

  std::vector<Param<T>*> params() override { return {&kernel_}; }
  void init(std::mt19937_64& rng) override {
    kaiming_uniform(kernel_.value, static_cast<std::size_t>(this->spec_.kernel * this->spec_.kernel), rng);
  }

 private:
  Param<T> kernel_;
  Tensor<T> x_;
};

template <typename T>
class PointwiseLayer final : public Layer<T> {
 public:
  explicit PointwiseLayer(const LayerSpec& s) : Layer<T>(s) {
    const std::size_t f = s.out_channels, c = s.in_channels;
    kernel_ = {"kernel", Tensor<T>({f, c}), Tensor<T>({f, c}), true};
  }

  Tensor<T> forward(const Tensor<T>& x, Mode) override {
    x_ = x;
    Tensor<T> out = pointwise_conv2d_forward(x, kernel_.value);
    this->mark_cached(out.shape);
    return out;
  }

  Tensor<T> backward(const Tensor<T>& dy) override {
    this->require_cache(dy, this->out_shape_);
    const std::size_t n = x_.dim(0), c = x_.dim(1), hw = x_.dim(2) * x_.dim(3), f = kernel_.value.dim(0);
    kernel_.grad.fill(0);
    Tensor<T> dx(x_.shape);
    MapMat<T> dw(kernel_.grad.ptr(), f, c);
    CMapMat<T> w(kernel_.value.ptr(), f, c);
    for (std::size_t i = 0; i < n; ++i) {
      CMapMat<T> g(dy.ptr() + i * f * hw, f, hw);
      dw.noalias() += g * CMapMat<T>(x_.ptr() + i * c * hw, c, hw).transpose();
      MapMat<T>(dx.ptr() + i * c * hw, c, hw).noalias() = w.transpose() * g;
    }
    return dx;
  }

  std::vector<Param<T>*> params() override { return {&kernel_}; }
  void init(std::mt19937_64& rng) override { kaiming_uniform(kernel_.value, kernel_.value.dim(1), rng); }

 private:
  Param<T> kernel_;
  Tensor<T> x_;
};

template <typename T>
class BatchNormLayer final : public Layer<T> {
 public:
  explicit BatchNormLayer(const LayerSpec& s) : Layer<T>(s) {
    const std::size_t c = s.in_channels;
    gamma_ = {"gamma", Tensor<T>({c}, T(1)), Tensor<T>({c}), false};
    beta_ = {"beta", Tensor<T>({c}), Tensor<T>({c}), false};
    state_.running_mean = Tensor<T>({c});
    state_.running_var = Tensor<T>({c}, T(1));
    state_.momentum = s.momentum;
  }

  Tensor<T> forward(const Tensor<T>& x, Mode mode) override {
    auto pass = batchnorm_pass(x, gamma_.value, beta_.value, this->spec_.eps, mode, state_);
    xhat_ = std::move(pass.xhat);
    inv_std_ = std::move(pass.inv_std);
    mode_ = mode;
    this->mark_cached(pass.y.shape);
    return std::move(pass.y);
  }

  Tensor<T> backward(const Tensor<T>& dy) override {
    this->require_cache(dy, this->out_shape_);
    const ChannelGeom g = channel_geom(dy);
    const double m = static_cast<double>(g.n * g.inner);
    Tensor<T> dx(dy.shape);
    for (std::size_t c = 0; c < g.c; ++c) {
      double sum_dy = 0.0, sum_dy_xhat = 0.0;
      for (std::size_t i = 0; i < g.n; ++i)
        for (std::size_t k = 0; k < g.inner; ++k) {
          const std::size_t at = (i * g.c + c) * g.inner + k;
          sum_dy += dy[at];
          sum_dy_xhat += dy[at] * xhat_[at];
        }
      gamma_.grad[c] = static_cast<T>(sum_dy_xhat);
      beta_.grad[c] = static_cast<T>(sum_dy);
      const double scale = gamma_.value[c] * inv_std_[c];
      for (std::size_t i = 0; i < g.n; ++i)
        for (std::size_t k = 0; k < g.inner; ++k) {
          const std::size_t at = (i * g.c + c) * g.inner + k;
          dx[at] = static_cast<T>(mode_ == Mode::Train
                                      ? scale * (dy[at] - sum_dy / m - xhat_[at] * sum_dy_xhat / m)
                                      : scale * dy[at]);
        }
    }
    return dx;
  }

  std::vector<Param<T>*> params() override { return {&gamma_, &beta_}; }
  std::vector<std::pair<std::string, Tensor<T>*>> buffers() override {
    return {{"running_mean", &state_.running_mean}, {"running_var", &state_.running_var}};
  }
  void init(std::mt19937_64&) override {
    gamma_.value.fill(T(1));
    beta_.value.fill(T(0));
    state_.running_mean.fill(T(0));
    state_.running_var.fill(T(1));
  }

 private:
  Param<T> gamma_, beta_;
  BatchNormState<T> state_;
  Tensor<T> xhat_;
  std::vector<double> inv_std_;
  Mode mode_ = Mode::Train;
};

template <typename T>
class ReluLayer final : public Layer<T> {
 public:
  using Layer<T>::Layer;
  Tensor<T> forward(const Tensor<T>& x, Mode) override {
    x_ = x;
    this->mark_cached(x.shape);
    return relu_forward(x);
  }
  // Derivative at exactly zero is taken as zero.
  Tensor<T> backward(const Tensor<T>& dy) override {
    this->require_cache(dy, this->out_shape_);
    Tensor<T> dx(dy.shape);
    for (std::size_t i = 0; i < dy.size(); ++i) dx[i] = x_[i] > T(0) ? dy[i] : T(0);
    return dx;
  }

 private:
  Tensor<T> x_;
};

template <typename T>
class GapLayer final : public Layer<T> {
 public:
  using Layer<T>::Layer;
  Tensor<T> forward(const Tensor<T>& x, Mode) override {
    in_shape_ = x.shape;
    Tensor<T> y = global_avg_pool_forward(x);
    this->mark_cached(y.shape);
    return y;
  }
  Tensor<T> backward(const Tensor<T>& dy) override {
    this->require_cache(dy, this->out_shape_);
    Tensor<T> dx(in_shape_);
    const std::size_t hw = in_shape_[2] * in_shape_[3];
    const T scale = T(1) / static_cast<T>(hw);
    for (std::size_t i = 0; i < dy.size(); ++i)
      for (std::size_t k = 0; k < hw; ++k) dx[i * hw + k] = dy[i] * scale;
    return dx;
  }

 private:
  Shape in_shape_;
};

template <typename T>
class DenseLayer final : public Layer<T> {
 public:
  explicit DenseLayer(const LayerSpec& s) : Layer<T>(s) {
    const std::size_t in = s.in_channels, out = s.out_channels;
    weights_ = {"weights", Tensor<T>({in, out}), Tensor<T>({in, out}), true};
    bias_ = {"bias", Tensor<T>({out}), Tensor<T>({out}), false};
  }
  Tensor<T> forward(const Tensor<T>& x, Mode) override {
    x_ = x;
    Tensor<T> y = dense_forward(x, weights_.value, bias_.value);
    this->mark_cached(y.shape);
    return y;
  }
  Tensor<T> backward(const Tensor<T>& dy) override {
    this->require_cache(dy, this->out_shape_);
    const std::size_t n = x_.dim(0), in = x_.dim(1), out = weights_.value.dim(1);
    CMapMat<T> g(dy.ptr(), n, out);
    CMapMat<T> x(x_.ptr(), n, in);
    MapMat<T>(weights_.grad.ptr(), in, out).noalias() = x.transpose() * g;
    for (std::size_t j = 0; j < out; ++j) bias_.grad[j] = g.col(j).sum();
    Tensor<T> dx(x_.shape);
    MapMat<T>(dx.ptr(), n, in).noalias() = g * CMapMat<T>(weights_.value.ptr(), in, out).transpose();
    return dx;
  }
  std::vector<Param<T>*> params() override { return {&weights_, &bias_}; }
  void init(std::mt19937_64& rng) override {
    kaiming_uniform(weights_.value, weights_.value.dim(0), rng);
    bias_.value.fill(0);
  }

 private:
  Param<T> weights_, bias_;
  Tensor<T> x_;
};

template <typename T>
class SoftmaxLayer final : public Layer<T> {
 public:
  using Layer<T>::Layer;
  Tensor<T> forward(const Tensor<T>& x, Mode) override {
    y_ = softmax_forward(x);
    this->mark_cached(y_.shape);
    return y_;
  }
  Tensor<T> backward(const Tensor<T>& dy) override {
    this->require_cache(dy, this->out_shape_);
    const std::size_t n = y_.dim(0), k = y_.dim(1);
    Tensor<T> dx(dy.shape);
    for (std::size_t i = 0; i < n; ++i) {
      double dot = 0.0;
      for (std::size_t j = 0; j < k; ++j) dot += dy[i * k + j] * y_[i * k + j];
      for (std::size_t j = 0; j < k; ++j) dx[i * k + j] = static_cast<T>(y_[i * k + j] * (dy[i * k + j] - dot));
    }
    return dx;
  }

 private:
  Tensor<T> y_;
};

}  // namespace

template <typename T>
std::unique_ptr<Layer<T>> make_layer(const LayerSpec& spec) {
  switch (spec.kind) {
    case LayerKind::Conv2D: return std::make_unique<Conv2DLayer<T>>(spec);
    case LayerKind::DepthwiseConv2D:
      if (spec.in_channels != spec.out_channels)
        mismatch("depthwise convolution has one filter per input channel");
      return std::make_unique<DepthwiseLayer<T>>(spec);
    case LayerKind::PointwiseConv2D: return std::make_unique<PointwiseLayer<T>>(spec);
    case LayerKind::BatchNorm: return std::make_unique<BatchNormLayer<T>>(spec);
    case LayerKind::ReLU: return std::make_unique<ReluLayer<T>>(spec);
    case LayerKind::GlobalAvgPool: return std::make_unique<GapLayer<T>>(spec);
    case LayerKind::Dense: return std::make_unique<DenseLayer<T>>(spec);
    case LayerKind::Softmax: return std::make_unique<SoftmaxLayer<T>>(spec);
  }
  mismatch("unknown layer kind");
}

#define LUNGMTL_INSTANTIATE(T)                                                                                    \
  template class Layer<T>;                                                                                        \
  template std::unique_ptr<Layer<T>> make_layer<T>(const LayerSpec&);                                             \
  template Tensor<T> conv2d_forward(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, int, int);              \
  template Tensor<T> depthwise_conv2d_forward(const Tensor<T>&, const Tensor<T>&, int, int);                      \
  template Tensor<T> pointwise_conv2d_forward(const Tensor<T>&, const Tensor<T>&);                                \
  template Tensor<T> relu_forward(const Tensor<T>&);                                                              \
  template Tensor<T> global_avg_pool_forward(const Tensor<T>&);                                                   \
  template Tensor<T> dense_forward(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&);                         \
  template Tensor<T> softmax_forward(const Tensor<T>&);                                                           \
  template Tensor<T> batchnorm_forward(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, double, Mode,        \
                                       BatchNormState<T>&);                                                       \
  template double cross_entropy(const Tensor<T>&, std::span<const int>);                                          \
  template SoftmaxCrossEntropy<T> softmax_cross_entropy(const Tensor<T>&, std::span<const int>, double);          \
  template void adam_step(std::span<Param<T>* const>, AdamState<T>&);

LUNGMTL_INSTANTIATE(float)
LUNGMTL_INSTANTIATE(double)

#undef LUNGMTL_INSTANTIATE

}  // namespace lungmtl
