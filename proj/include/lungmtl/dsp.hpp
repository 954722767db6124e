#pragma once

#include <complex>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "lungmtl/corpus.hpp"

namespace lungmtl {

struct MfccConfig {
  double pre_emphasis_alpha = 0.97;
  double frame_len_ms = 25.0;
  double hop_ms = 10.0;
  int n_fft = 512;
  int n_mel_filters = 26;
  int n_coefficients = 20;
  double fmin_hz = 20.0;
  double fmax_hz = 2000.0;
  int target_frames = 498;
  int target_sample_rate_hz = 4000;

  // Throws InvalidArgument when an invariant between the fields is broken.
  void validate() const;
  // FNV-1a over a canonical text rendering of every field.
  std::uint64_t fingerprint() const;

  bool operator==(const MfccConfig&) const = default;
};

// Row-major [rows x cols]; rows are cepstral coefficients, cols are frames.
struct FeatureMatrix {
  int rows = 0;
  int cols = 0;
  std::vector<double> values;
  std::uint64_t config_fingerprint = 0;

  double at(int r, int c) const { return values[static_cast<std::size_t>(r) * cols + c]; }
  double& at(int r, int c) { return values[static_cast<std::size_t>(r) * cols + c]; }
};

inline constexpr double kLogEnergyFloor = 1e-10;

std::vector<double> pre_emphasis(std::span<const double> x, double alpha);

// Frame length and hop are rounded to whole samples. Short inputs yield one zero-padded frame.
std::vector<std::vector<double>> frame_and_window(std::span<const double> x, int sample_rate_hz, double frame_len_ms,
                                                  double hop_ms);
std::vector<std::vector<double>> frame_and_window_samples(std::span<const double> x, std::size_t frame_len,
                                                          std::size_t hop);
std::vector<double> hamming_window(std::size_t length);

bool is_power_of_two(std::size_t n);
// In-place iterative radix-2 Cooley-Tukey. Size must be a power of two.
void fft_inplace(std::vector<std::complex<double>>& data);
// One-sided |X[k]|^2 / n_fft for k = 0..n_fft/2; frame is zero-padded to n_fft.
std::vector<double> power_spectrum(std::span<const double> frame, int n_fft);

double hz_to_mel(double hz);
double mel_to_hz(double mel);
// [n_filters x (n_fft/2 + 1)], row-major.
std::vector<std::vector<double>> mel_filterbank(int n_filters, int n_fft, int sample_rate_hz, double fmin_hz,
                                                double fmax_hz);

std::vector<double> log_mel_energies(std::span<const double> power, const std::vector<std::vector<double>>& filters);

// Orthonormal DCT-II truncated to the first n_out coefficients.
std::vector<double> dct_ii(std::span<const double> e, int n_out);

std::vector<double> resample_linear(std::span<const double> x, int from_hz, int to_hz);

// Number of frames before pad/truncate for a signal of `samples` length at cfg's target rate.
std::size_t raw_frame_count(std::size_t samples, const MfccConfig& cfg);

FeatureMatrix extract_mfcc(const AudioClip& clip, const MfccConfig& cfg);

// The per-column value used for padding short clips: the MFCC of an all-floor frame.
std::vector<double> floor_mfcc_column(const MfccConfig& cfg);

}  // namespace lungmtl
