#include <doctest.h>

#include "lungmtl/dsp.hpp"
#include "lungmtl/error.hpp"
#include "support.hpp"

using namespace lungmtl;

TEST_SUITE("dsp") {
  TEST_CASE("pre-emphasis") {
    std::vector<double> ones{1, 1, 1};
    auto y = pre_emphasis(ones, 0.97);
    CHECK(y[0] == 1.0);
    CHECK(y[1] == doctest::Approx(0.03).epsilon(1e-12));
    CHECK(y[2] == doctest::Approx(0.03).epsilon(1e-12));
    CHECK(pre_emphasis(ones, 0.0) == ones);
    CHECK(pre_emphasis(std::vector<double>{}, 0.97).empty());

    std::mt19937_64 rng(1);
    auto x = testing::random_vector(1000, rng);
    auto z = pre_emphasis(x, 0.97);
    double worst = std::abs(z[0] - x[0]);
    for (std::size_t n = 1; n < x.size(); ++n) worst = std::max(worst, std::abs(z[n] - (x[n] - 0.97 * x[n - 1])));
    CHECK(worst <= 1e-12);
  }

  TEST_CASE("frame counts and Hamming window") {
    CHECK(frame_and_window_samples(std::vector<double>(400, 1.0), 400, 160).size() == 1);
    CHECK(frame_and_window_samples(std::vector<double>(720, 1.0), 400, 160).size() == 3);
    auto w = frame_and_window_samples(std::vector<double>(5, 1.0), 5, 5);
    REQUIRE(w.size() == 1);
    const double expect[] = {0.08, 0.54, 1.0, 0.54, 0.08};
    for (int i = 0; i < 5; ++i) CHECK(w[0][i] == doctest::Approx(expect[i]).epsilon(1e-12));
    CHECK(hamming_window(5) == w[0]);
  }

  TEST_CASE("power spectrum closed forms") {
    std::vector<double> impulse(8, 0.0);
    impulse[0] = 1.0;
    for (double p : power_spectrum(impulse, 8)) CHECK(p == doctest::Approx(1.0 / 8).epsilon(1e-14));

    std::vector<double> cosine(64);
    for (int t = 0; t < 64; ++t) cosine[t] = std::cos(2 * M_PI * 3 * t / 64.0);
    auto p = power_spectrum(cosine, 64);
    CHECK(p.size() == 33);
    CHECK(p[3] == doctest::Approx(16.0).epsilon(1e-12));
    for (std::size_t k = 0; k < p.size(); ++k)
      if (k != 3) CHECK(p[k] < 1e-20);

    CHECK_THROWS_AS(power_spectrum(cosine, 48), Error);
    try {
      power_spectrum(cosine, 48);
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::BadFftSize);
    }
  }

  TEST_CASE("power spectrum matches a naive DFT and satisfies Parseval") {
    std::mt19937_64 rng(2);
    for (int trial = 0; trial < 20; ++trial) {
      auto x = testing::random_vector(256, rng);
      auto p = power_spectrum(x, 256);
      auto ref = testing::naive_dft(x);
      double worst = 0.0;
      for (std::size_t k = 0; k < p.size(); ++k)
        worst = std::max(worst, testing::rel_err(p[k], std::norm(ref[k]) / 256, 1e-12));
      CHECK(worst <= 1e-9);

      double energy = 0.0, spectral = p.front() + p.back();
      for (double v : x) energy += v * v;
      for (std::size_t k = 1; k + 1 < p.size(); ++k) spectral += 2 * p[k];
      CHECK(testing::rel_err(energy, spectral) <= 1e-9);
    }
  }

  TEST_CASE("fft round trip on a complex sequence") {
    std::mt19937_64 rng(3);
    std::vector<std::complex<double>> z(128);
    for (auto& v : z) v = {testing::random_vector(1, rng)[0], testing::random_vector(1, rng)[0]};
    auto f = z;
    fft_inplace(f);
    for (auto& v : f) v = std::conj(v);
    fft_inplace(f);
    double worst = 0.0;
    for (std::size_t i = 0; i < z.size(); ++i) worst = std::max(worst, std::abs(std::conj(f[i]) / 128.0 - z[i]));
    CHECK(worst < 1e-13);
    CHECK(is_power_of_two(1));
    CHECK_FALSE(is_power_of_two(0));
    CHECK_FALSE(is_power_of_two(96));
  }

  TEST_CASE("mel scale and filterbank shape") {
    CHECK(hz_to_mel(0.0) == 0.0);
    CHECK(hz_to_mel(700.0) == doctest::Approx(2595 * std::log10(2.0)).epsilon(1e-12));
    CHECK(hz_to_mel(700.0) == doctest::Approx(781.17).epsilon(1e-5));
    CHECK(mel_to_hz(hz_to_mel(1234.5)) == doctest::Approx(1234.5).epsilon(1e-12));

    auto fb = mel_filterbank(26, 512, 4000, 20, 2000);
    REQUIRE(fb.size() == 26);
    for (auto& row : fb) {
      REQUIRE(row.size() == 257);
      auto peak = std::max_element(row.begin(), row.end());
      CHECK(*peak == doctest::Approx(1.0));
      for (auto it = row.begin(); it != row.end(); ++it) {
        CHECK(*it >= 0.0);
        if (it < peak) CHECK(*it <= *(it + 1));
        if (it > peak) CHECK(*it <= *(it - 1));
      }
    }
    try {
      mel_filterbank(200, 64, 4000, 20, 2000);
      FAIL("expected DegenerateFilter");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::DegenerateFilter);
    }
  }

  TEST_CASE("log-mel energies") {
    std::vector<double> zeros(257, 0.0);
    auto fb = mel_filterbank(26, 512, 4000, 20, 2000);
    for (double e : log_mel_energies(zeros, fb)) CHECK(e == std::log(kLogEnergyFloor));

    std::vector<std::vector<double>> indicator{std::vector<double>(9, 0.0)};
    indicator[0][4] = 1.0;
    std::vector<double> p(9, 0.0);
    p[4] = std::exp(1.0);
    CHECK(log_mel_energies(p, indicator)[0] == doctest::Approx(1.0).epsilon(1e-15));

    std::mt19937_64 rng(4);
    auto power = testing::random_vector(257, rng, 0.0, 3.0);
    auto e = log_mel_energies(power, fb);
    double worst = 0.0;
    for (std::size_t i = 0; i < fb.size(); ++i) {
      double s = 0.0;
      for (std::size_t k = 0; k < power.size(); ++k) s += fb[i][k] * power[k];
      worst = std::max(worst, std::abs(e[i] - std::log(std::max(s, kLogEnergyFloor))));
    }
    CHECK(worst <= 1e-12);
  }

  TEST_CASE("DCT-II cases and naive oracle") {
    std::vector<double> c(7, 2.5);
    auto d = dct_ii(c, 7);
    CHECK(d[0] == doctest::Approx(2.5 * std::sqrt(7.0)).epsilon(1e-14));
    for (int k = 1; k < 7; ++k) CHECK(std::abs(d[k]) < 1e-13);

    auto two = dct_ii(std::vector<double>{1, -1}, 2);
    CHECK(std::abs(two[0]) < 1e-15);
    CHECK(two[1] == doctest::Approx(std::sqrt(2.0)).epsilon(1e-14));

    std::mt19937_64 rng(5);
    for (int trial = 0; trial < 50; ++trial) {
      auto e = testing::random_vector(26, rng, -5, 5);
      CHECK(testing::max_abs_diff(dct_ii(e, 20), testing::naive_dct(e, 20)) <= 1e-12);
    }
  }

  TEST_CASE("DCT-II is orthonormal") {
    const int n = 26;
    std::vector<std::vector<double>> basis(n);
    for (int i = 0; i < n; ++i) {
      std::vector<double> unit(n, 0.0);
      unit[i] = 1.0;
      basis[i] = dct_ii(unit, n);  // column i of the transform matrix
    }
    std::mt19937_64 rng(6);
    auto x = testing::random_vector(n, rng);
    auto y = dct_ii(x, n);
    std::vector<double> back(n, 0.0);
    for (int i = 0; i < n; ++i)
      for (int k = 0; k < n; ++k) back[i] += basis[i][k] * y[k];
    CHECK(testing::max_abs_diff(back, x) <= 1e-10);
  }

  TEST_CASE("extract_mfcc equals the staged composition") {
    MfccConfig cfg;
    std::mt19937_64 rng(7);
    for (double seconds : {0.3, 2.0, 6.0}) {
      AudioClip clip;
      clip.sample_rate_hz = 8000;
      clip.samples = testing::random_vector(static_cast<std::size_t>(seconds * 8000), rng, -0.5, 0.5);
      auto m = extract_mfcc(clip, cfg);
      CHECK(m.rows == 20);
      CHECK(m.cols == 498);
      CHECK(m.config_fingerprint == cfg.fingerprint());
      CHECK(testing::max_abs_diff(m.values, testing::staged_mfcc(clip, cfg).values) <= 1e-9);
      CHECK(extract_mfcc(clip, cfg).values == m.values);
      for (double v : m.values) CHECK(std::isfinite(v));
    }
  }

  TEST_CASE("silence gives identical floor columns") {
    MfccConfig cfg;
    AudioClip clip;
    clip.sample_rate_hz = 4000;
    clip.samples.assign(4000, 0.0);
    auto m = extract_mfcc(clip, cfg);
    std::vector<double> fl(cfg.n_mel_filters, std::log(kLogEnergyFloor));
    auto expect = dct_ii(fl, cfg.n_coefficients);
    CHECK(floor_mfcc_column(cfg) == expect);
    double worst = 0.0;
    for (int c = 0; c < m.cols; ++c)
      for (int r = 0; r < m.rows; ++r) worst = std::max(worst, std::abs(m.at(r, c) - expect[r]));
    CHECK(worst <= 1e-9);
  }

  TEST_CASE("ten seconds at defaults gives 998 raw frames") {
    MfccConfig cfg;
    CHECK(raw_frame_count(40000, cfg) == 998);
  }

  TEST_CASE("config validation and fingerprint") {
    MfccConfig cfg;
    CHECK_NOTHROW(cfg.validate());
    MfccConfig bad = cfg;
    bad.n_coefficients = 30;
    CHECK_THROWS_AS(bad.validate(), Error);
    bad = cfg;
    bad.fmax_hz = 3000;
    CHECK_THROWS_AS(bad.validate(), Error);
    bad = cfg;
    bad.n_fft = 64;
    CHECK_THROWS_AS(bad.validate(), Error);
    MfccConfig other = cfg;
    other.hop_ms = 11;
    CHECK(other.fingerprint() != cfg.fingerprint());
  }

  TEST_CASE("linear resampling") {
    std::vector<double> ramp(9);
    for (int i = 0; i < 9; ++i) ramp[i] = i;
    auto up = resample_linear(ramp, 4000, 8000);
    CHECK(up[1] == doctest::Approx(0.5));
    CHECK(up[4] == doctest::Approx(2.0));
    CHECK(resample_linear(ramp, 4000, 4000) == ramp);
  }
}
