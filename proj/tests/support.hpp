#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "lungmtl/dsp.hpp"
#include "lungmtl/layers.hpp"
#include "lungmtl/tensor.hpp"

namespace testing {

using lungmtl::Shape;
using lungmtl::Tensor;

inline Tensor<double> random_tensor(Shape shape, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
  Tensor<double> t(std::move(shape));
  std::uniform_real_distribution<double> u(lo, hi);
  for (auto& v : t.data) v = u(rng);
  return t;
}

inline Tensor<double> normal_tensor(Shape shape, std::mt19937_64& rng, double mean = 0.0, double sd = 1.0) {
  Tensor<double> t(std::move(shape));
  std::normal_distribution<double> g(mean, sd);
  for (auto& v : t.data) v = g(rng);
  return t;
}

inline std::vector<double> random_vector(std::size_t n, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
  std::vector<double> v(n);
  std::uniform_real_distribution<double> u(lo, hi);
  for (auto& x : v) x = u(rng);
  return v;
}

inline double max_abs_diff(const std::vector<double>& a, const std::vector<double>& b) {
  double m = a.size() == b.size() ? 0.0 : INFINITY;
  for (std::size_t i = 0; i < std::min(a.size(), b.size()); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

inline double rel_err(double analytic, double numeric, double floor = 1e-6) {
  return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), floor});
}

inline double dot(const Tensor<double>& a, const Tensor<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

// Picks up to `limit` indices spread over [0, n).
inline std::vector<std::size_t> probe_indices(std::size_t n, std::size_t limit, std::mt19937_64& rng) {
  std::vector<std::size_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = i;
  if (n > limit) {
    std::shuffle(idx.begin(), idx.end(), rng);
    idx.resize(limit);
  }
  return idx;
}

// Central differences of L = <layer(x), R> against the layer's backward pass, over the input and
// every parameter. Returns the largest relative error seen.
inline double layer_gradient_error(lungmtl::Layer<double>& layer, Tensor<double> x, std::mt19937_64& rng,
                                   lungmtl::Mode mode = lungmtl::Mode::Train, double h = 1e-5,
                                   std::size_t probes = 40) {
  const Tensor<double> y = layer.forward(x, mode);
  const Tensor<double> r = normal_tensor(y.shape, rng);
  const Tensor<double> dx = layer.backward(r);
  std::vector<Tensor<double>> grads;
  for (auto* p : layer.params()) grads.push_back(p->grad);

  auto loss = [&] { return dot(layer.forward(x, mode), r); };
  double worst = 0.0;
  for (std::size_t i : probe_indices(x.size(), probes, rng)) {
    const double keep = x[i];
    x[i] = keep + h;
    const double up = loss();
    x[i] = keep - h;
    const double down = loss();
    x[i] = keep;
    worst = std::max(worst, rel_err(dx[i], (up - down) / (2 * h)));
  }
  auto params = layer.params();
  for (std::size_t p = 0; p < params.size(); ++p) {
    auto& v = params[p]->value;
    for (std::size_t i : probe_indices(v.size(), probes, rng)) {
      const double keep = v[i];
      v[i] = keep + h;
      const double up = loss();
      v[i] = keep - h;
      const double down = loss();
      v[i] = keep;
      worst = std::max(worst, rel_err(grads[p][i], (up - down) / (2 * h)));
    }
  }
  return worst;
}

// Six-loop cross-correlation with zero padding; kernels [F, C, kh, kw].
inline Tensor<double> naive_conv2d(const Tensor<double>& x, const Tensor<double>& k, const Tensor<double>& bias,
                                   int stride, int pad) {
  const std::size_t n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  const std::size_t f = k.dim(0), kh = k.dim(2), kw = k.dim(3);
  const std::size_t oh = (h + 2 * pad - kh) / stride + 1, ow = (w + 2 * pad - kw) / stride + 1;
  Tensor<double> y({n, f, oh, ow});
  for (std::size_t b = 0; b < n; ++b)
    for (std::size_t o = 0; o < f; ++o)
      for (std::size_t i = 0; i < oh; ++i)
        for (std::size_t j = 0; j < ow; ++j) {
          double s = bias.size() ? bias[o] : 0.0;
          for (std::size_t ch = 0; ch < c; ++ch)
            for (std::size_t u = 0; u < kh; ++u)
              for (std::size_t v = 0; v < kw; ++v) {
                const long r = static_cast<long>(i * stride + u) - pad;
                const long q = static_cast<long>(j * stride + v) - pad;
                if (r < 0 || q < 0 || r >= static_cast<long>(h) || q >= static_cast<long>(w)) continue;
                s += x[((b * c + ch) * h + r) * w + q] * k[((o * c + ch) * kh + u) * kw + v];
              }
          y[((b * f + o) * oh + i) * ow + j] = s;
        }
  return y;
}

inline std::vector<std::complex<double>> naive_dft(const std::vector<double>& x) {
  const std::size_t n = x.size();
  std::vector<std::complex<double>> out(n);
  for (std::size_t k = 0; k < n; ++k) {
    std::complex<double> s = 0.0;
    for (std::size_t t = 0; t < n; ++t) s += x[t] * std::polar(1.0, -2.0 * M_PI * double(k * t % n) / double(n));
    out[k] = s;
  }
  return out;
}

inline std::vector<double> naive_dct(const std::vector<double>& e, std::size_t n_out) {
  const std::size_t n = e.size();
  std::vector<double> c(n_out);
  for (std::size_t k = 0; k < n_out; ++k) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += e[i] * std::cos(M_PI * k * (2.0 * i + 1) / (2.0 * n));
    c[k] = s * std::sqrt((k == 0 ? 1.0 : 2.0) / n);
  }
  return c;
}

// pre-emphasis -> frames -> power -> log-mel -> DCT, column by column, without extract_mfcc.
inline lungmtl::FeatureMatrix staged_mfcc(const lungmtl::AudioClip& clip, const lungmtl::MfccConfig& cfg) {
  auto x = lungmtl::resample_linear(clip.samples, clip.sample_rate_hz, cfg.target_sample_rate_hz);
  auto emph = lungmtl::pre_emphasis(x, cfg.pre_emphasis_alpha);
  auto frames = lungmtl::frame_and_window(emph, cfg.target_sample_rate_hz, cfg.frame_len_ms, cfg.hop_ms);
  auto filters = lungmtl::mel_filterbank(cfg.n_mel_filters, cfg.n_fft, cfg.target_sample_rate_hz, cfg.fmin_hz, cfg.fmax_hz);
  lungmtl::FeatureMatrix m;
  m.rows = cfg.n_coefficients;
  m.cols = cfg.target_frames;
  m.values.assign(static_cast<std::size_t>(m.rows) * m.cols, 0.0);
  auto pad = lungmtl::floor_mfcc_column(cfg);
  for (int c = 0; c < m.cols; ++c) {
    std::vector<double> col = pad;
    if (c < static_cast<int>(frames.size()))
      col = lungmtl::dct_ii(lungmtl::log_mel_energies(lungmtl::power_spectrum(frames[c], cfg.n_fft), filters), cfg.n_coefficients);
    for (int r = 0; r < m.rows; ++r) m.at(r, c) = col[r];
  }
  return m;
}

// A fresh directory under the system temp dir, removed on scope exit.
struct TempDir {
  std::filesystem::path path;
  explicit TempDir(const std::string& tag) {
    std::random_device rd;
    path = std::filesystem::temp_directory_path() / ("lungmtl-" + tag + "-" + std::to_string(rd()));
    std::filesystem::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path, ec);
  }
  std::filesystem::path operator/(const std::string& name) const { return path / name; }
};

}  // namespace testing
