#include "lungmtl/dsp.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

#include "lungmtl/error.hpp"

namespace lungmtl {

namespace {

std::size_t ms_to_samples(double ms, int sample_rate_hz) {
  return static_cast<std::size_t>(std::llround(ms * sample_rate_hz / 1000.0));
}

}  // namespace

void MfccConfig::validate() const {
  auto fail = [](const std::string& what) { throw Error(ErrorCode::InvalidArgument, "MfccConfig: " + what); };
  if (!(pre_emphasis_alpha >= 0.0 && pre_emphasis_alpha < 1.0)) fail("pre_emphasis_alpha must be in [0, 1)");
  if (target_sample_rate_hz <= 0) fail("target_sample_rate_hz must be positive");
  if (ms_to_samples(frame_len_ms, target_sample_rate_hz) < 1) fail("frame shorter than one sample");
  if (ms_to_samples(hop_ms, target_sample_rate_hz) < 1) fail("hop shorter than one sample");
  if (n_fft <= 0 || !is_power_of_two(static_cast<std::size_t>(n_fft))) fail("n_fft must be a power of two");
  if (static_cast<std::size_t>(n_fft) < ms_to_samples(frame_len_ms, target_sample_rate_hz))
    fail("n_fft shorter than the frame");
  if (n_mel_filters < 1 || n_coefficients < 1 || n_coefficients > n_mel_filters)
    fail("need 1 <= n_coefficients <= n_mel_filters");
  if (!(fmin_hz >= 0.0 && fmin_hz < fmax_hz && fmax_hz <= target_sample_rate_hz / 2.0))
    fail("need 0 <= fmin_hz < fmax_hz <= target_sample_rate_hz / 2");
  if (target_frames < 1) fail("target_frames must be >= 1");
}

std::uint64_t MfccConfig::fingerprint() const {
  std::ostringstream ss;
  ss.precision(17);
  ss << pre_emphasis_alpha << '|' << frame_len_ms << '|' << hop_ms << '|' << n_fft << '|' << n_mel_filters << '|'
     << n_coefficients << '|' << fmin_hz << '|' << fmax_hz << '|' << target_frames << '|' << target_sample_rate_hz;
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : ss.str()) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::vector<double> pre_emphasis(std::span<const double> x, double alpha) {
  if (!(alpha >= 0.0 && alpha < 1.0)) throw Error(ErrorCode::InvalidArgument, "pre-emphasis alpha must be in [0, 1)");
  std::vector<double> y(x.size());
  if (x.empty()) return y;
  y[0] = x[0];
  for (std::size_t t = 1; t < x.size(); ++t) y[t] = x[t] - alpha * x[t - 1];
  return y;
}

std::vector<double> hamming_window(std::size_t length) {
  std::vector<double> w(length, 1.0);
  if (length == 1) return w;
  const double denom = static_cast<double>(length - 1);
  for (std::size_t k = 0; k < length; ++k) w[k] = 0.54 - 0.46 * std::cos(2.0 * std::numbers::pi * k / denom);
  return w;
}

std::vector<std::vector<double>> frame_and_window_samples(std::span<const double> x, std::size_t frame_len,
                                                          std::size_t hop) {
  if (frame_len < 1 || hop < 1) throw Error(ErrorCode::InvalidArgument, "frame length and hop must be >= 1 sample");
  const auto window = hamming_window(frame_len);
  const std::size_t count = x.size() >= frame_len ? 1 + (x.size() - frame_len) / hop : 1;
  std::vector<std::vector<double>> frames(count, std::vector<double>(frame_len, 0.0));
  for (std::size_t f = 0; f < count; ++f) {
    const std::size_t start = f * hop;
    for (std::size_t k = 0; k < frame_len && start + k < x.size(); ++k) frames[f][k] = x[start + k] * window[k];
  }
  return frames;
}

std::vector<std::vector<double>> frame_and_window(std::span<const double> x, int sample_rate_hz, double frame_len_ms,
                                                  double hop_ms) {
  return frame_and_window_samples(x, ms_to_samples(frame_len_ms, sample_rate_hz), ms_to_samples(hop_ms, sample_rate_hz));
}

bool is_power_of_two(std::size_t n) { return n > 0 && (n & (n - 1)) == 0; }

void fft_inplace(std::vector<std::complex<double>>& data) {
  const std::size_t n = data.size();
  if (!is_power_of_two(n)) throw Error(ErrorCode::BadFftSize, "FFT size " + std::to_string(n) + " is not a power of two");

  for (std::size_t i = 1, j = 0; i < n; ++i) {
    std::size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(data[i], data[j]);
  }
  for (std::size_t len = 2; len <= n; len <<= 1) {
    const double angle = -2.0 * std::numbers::pi / static_cast<double>(len);
    const std::size_t half = len / 2;
    for (std::size_t i = 0; i < n; i += len) {
      for (std::size_t k = 0; k < half; ++k) {
        // Twiddles evaluated directly rather than by recurrence; keeps error at O(eps log n).
        const std::complex<double> w(std::cos(angle * k), std::sin(angle * k));
        const auto u = data[i + k];
        const auto v = data[i + k + half] * w;
        data[i + k] = u + v;
        data[i + k + half] = u - v;
      }
    }
  }
}

std::vector<double> power_spectrum(std::span<const double> frame, int n_fft) {
  if (n_fft <= 0 || !is_power_of_two(static_cast<std::size_t>(n_fft)))
    throw Error(ErrorCode::BadFftSize, "n_fft " + std::to_string(n_fft) + " is not a power of two");
  if (frame.size() > static_cast<std::size_t>(n_fft))
    throw Error(ErrorCode::BadFftSize, "frame of " + std::to_string(frame.size()) + " samples exceeds n_fft");
  std::vector<std::complex<double>> buf(static_cast<std::size_t>(n_fft));
  std::copy(frame.begin(), frame.end(), buf.begin());
  fft_inplace(buf);
  std::vector<double> p(static_cast<std::size_t>(n_fft / 2 + 1));
  for (std::size_t k = 0; k < p.size(); ++k) p[k] = std::norm(buf[k]) / n_fft;
  return p;
}

double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

std::vector<std::vector<double>> mel_filterbank(int n_filters, int n_fft, int sample_rate_hz, double fmin_hz,
                                                double fmax_hz) {
  if (n_filters < 1) throw Error(ErrorCode::InvalidArgument, "n_filters must be >= 1");
  if (n_fft <= 0 || !is_power_of_two(static_cast<std::size_t>(n_fft)))
    throw Error(ErrorCode::BadFftSize, "n_fft " + std::to_string(n_fft) + " is not a power of two");
  const int n_bins = n_fft / 2 + 1;
  const double mel_lo = hz_to_mel(fmin_hz), mel_hi = hz_to_mel(fmax_hz);

  std::vector<int> edge(static_cast<std::size_t>(n_filters) + 2);
  for (int i = 0; i < n_filters + 2; ++i) {
    const double hz = mel_to_hz(mel_lo + (mel_hi - mel_lo) * i / (n_filters + 1));
    edge[i] = std::min(n_bins - 1, static_cast<int>(std::floor((n_fft + 1) * hz / sample_rate_hz)));
  }

  std::vector<std::vector<double>> bank(static_cast<std::size_t>(n_filters), std::vector<double>(n_bins, 0.0));
  for (int m = 0; m < n_filters; ++m) {
    const int left = edge[m], center = edge[m + 1], right = edge[m + 2];
    if (left >= center || center >= right)
      throw Error(ErrorCode::DegenerateFilter,
                  "filter " + std::to_string(m) + " has coinciding edge bins (" + std::to_string(left) + ", " +
                      std::to_string(center) + ", " + std::to_string(right) +
                      "); reduce n_mel_filters or raise n_fft");
    for (int k = left; k <= center; ++k) bank[m][k] = static_cast<double>(k - left) / (center - left);
    for (int k = center; k <= right; ++k) bank[m][k] = static_cast<double>(right - k) / (right - center);
  }
  return bank;
}

std::vector<double> log_mel_energies(std::span<const double> power, const std::vector<std::vector<double>>& filters) {
  std::vector<double> e(filters.size());
  for (std::size_t i = 0; i < filters.size(); ++i) {
    if (filters[i].size() != power.size())
      throw Error(ErrorCode::ShapeMismatch, "filter width differs from power spectrum length");
    double acc = 0.0;
    for (std::size_t k = 0; k < power.size(); ++k) acc += filters[i][k] * power[k];
    e[i] = std::log(std::max(acc, kLogEnergyFloor));
  }
  return e;
}

std::vector<double> dct_ii(std::span<const double> e, int n_out) {
  const std::size_t n = e.size();
  if (n_out < 0 || static_cast<std::size_t>(n_out) > n)
    throw Error(ErrorCode::InvalidArgument, "dct_ii: n_out exceeds input length");
  std::vector<double> c(static_cast<std::size_t>(n_out));
  const double s0 = std::sqrt(1.0 / n), sk = std::sqrt(2.0 / n);
  for (int k = 0; k < n_out; ++k) {
    double acc = 0.0;
    for (std::size_t j = 0; j < n; ++j) acc += e[j] * std::cos(std::numbers::pi * k * (2.0 * j + 1.0) / (2.0 * n));
    c[k] = (k == 0 ? s0 : sk) * acc;
  }
  return c;
}

std::vector<double> resample_linear(std::span<const double> x, int from_hz, int to_hz) {
  if (from_hz <= 0 || to_hz <= 0) throw Error(ErrorCode::InvalidArgument, "sample rates must be positive");
  if (from_hz == to_hz || x.empty()) return {x.begin(), x.end()};
  const auto n_out = static_cast<std::size_t>(
      std::max<long long>(1, std::llround(static_cast<double>(x.size()) * to_hz / from_hz)));
  std::vector<double> y(n_out);
  const double step = static_cast<double>(from_hz) / to_hz;
  for (std::size_t i = 0; i < n_out; ++i) {
    const double pos = i * step;
    const auto i0 = static_cast<std::size_t>(pos);
    if (i0 + 1 >= x.size()) {
      y[i] = x.back();
      continue;
    }
    const double frac = pos - static_cast<double>(i0);
    y[i] = x[i0] + frac * (x[i0 + 1] - x[i0]);
  }
  return y;
}

std::size_t raw_frame_count(std::size_t samples, const MfccConfig& cfg) {
  const auto frame_len = ms_to_samples(cfg.frame_len_ms, cfg.target_sample_rate_hz);
  const auto hop = ms_to_samples(cfg.hop_ms, cfg.target_sample_rate_hz);
  return samples >= frame_len ? 1 + (samples - frame_len) / hop : 1;
}

std::vector<double> floor_mfcc_column(const MfccConfig& cfg) {
  std::vector<double> floor_energy(static_cast<std::size_t>(cfg.n_mel_filters), std::log(kLogEnergyFloor));
  return dct_ii(floor_energy, cfg.n_coefficients);
}

FeatureMatrix extract_mfcc(const AudioClip& clip, const MfccConfig& cfg) {
  cfg.validate();
  if (clip.samples.empty()) throw Error(ErrorCode::EmptyAudio, clip.recording_id + ": no samples");
  if (clip.sample_rate_hz <= 0) throw Error(ErrorCode::InvalidArgument, clip.recording_id + ": bad sample rate");

  const auto signal = resample_linear(clip.samples, clip.sample_rate_hz, cfg.target_sample_rate_hz);
  const auto emphasized = pre_emphasis(signal, cfg.pre_emphasis_alpha);
  const auto frames = frame_and_window(emphasized, cfg.target_sample_rate_hz, cfg.frame_len_ms, cfg.hop_ms);
  const auto filters =
      mel_filterbank(cfg.n_mel_filters, cfg.n_fft, cfg.target_sample_rate_hz, cfg.fmin_hz, cfg.fmax_hz);

  FeatureMatrix out;
  out.rows = cfg.n_coefficients;
  out.cols = cfg.target_frames;
  out.config_fingerprint = cfg.fingerprint();
  out.values.assign(static_cast<std::size_t>(out.rows) * out.cols, 0.0);

  const std::size_t used = std::min<std::size_t>(frames.size(), static_cast<std::size_t>(cfg.target_frames));
  for (std::size_t f = 0; f < used; ++f) {
    const auto coeffs = dct_ii(log_mel_energies(power_spectrum(frames[f], cfg.n_fft), filters), cfg.n_coefficients);
    for (int r = 0; r < out.rows; ++r) out.at(r, static_cast<int>(f)) = coeffs[r];
  }
  if (used < static_cast<std::size_t>(cfg.target_frames)) {
    const auto pad = floor_mfcc_column(cfg);
    for (int c = static_cast<int>(used); c < out.cols; ++c)
      for (int r = 0; r < out.rows; ++r) out.at(r, c) = pad[r];
  }
  return out;
}

}  // namespace lungmtl
