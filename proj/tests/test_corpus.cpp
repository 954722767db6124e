#include <doctest.h>

#include <cstring>
#include <fstream>
#include <set>

#include "lungmtl/corpus.hpp"
#include "lungmtl/dsp.hpp"
#include "lungmtl/error.hpp"
#include "support.hpp"

using namespace lungmtl;

namespace {

void put16(std::vector<std::uint8_t>& b, std::uint16_t v) {
  b.push_back(v & 0xff);
  b.push_back(v >> 8);
}
void put32(std::vector<std::uint8_t>& b, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) b.push_back((v >> (8 * i)) & 0xff);
}

std::vector<std::uint8_t> wav_bytes(std::uint16_t format, std::uint16_t bits, std::uint16_t channels, std::uint32_t rate,
                                    const std::vector<std::uint8_t>& payload) {
  std::vector<std::uint8_t> b;
  auto tag = [&](const char* s) { b.insert(b.end(), s, s + 4); };
  tag("RIFF");
  put32(b, 36 + static_cast<std::uint32_t>(payload.size()));
  tag("WAVE");
  tag("fmt ");
  put32(b, 16);
  put16(b, format);
  put16(b, channels);
  put32(b, rate);
  put32(b, rate * channels * bits / 8);
  put16(b, channels * bits / 8);
  put16(b, bits);
  tag("data");
  put32(b, static_cast<std::uint32_t>(payload.size()));
  b.insert(b.end(), payload.begin(), payload.end());
  return b;
}

std::vector<std::uint8_t> pcm16(std::initializer_list<std::int16_t> v) {
  std::vector<std::uint8_t> b;
  for (auto s : v) put16(b, static_cast<std::uint16_t>(s));
  return b;
}

ErrorCode code_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected an Error");
  return ErrorCode::InvalidArgument;
}

}  // namespace

TEST_SUITE("corpus") {
  TEST_CASE("pcm16 decodes by 1/32768 scaling") {
    auto clip = decode_wav(wav_bytes(1, 16, 1, 8000, pcm16({0, 16384, -32768})));
    CHECK(clip.sample_rate_hz == 8000);
    REQUIRE(clip.samples.size() == 3);
    CHECK(clip.samples[0] == 0.0);
    CHECK(clip.samples[1] == 0.5);
    CHECK(clip.samples[2] == -1.0);
    CHECK(clip.duration_s() == doctest::Approx(3.0 / 8000));
  }

  TEST_CASE("stereo is averaged to mono") {
    std::vector<std::uint8_t> payload;
    float l = 1.0f, r = 0.0f;
    for (float f : {l, r}) {
      std::uint32_t u;
      std::memcpy(&u, &f, 4);
      put32(payload, u);
    }
    auto clip = decode_wav(wav_bytes(3, 32, 2, 4000, payload));
    REQUIRE(clip.samples.size() == 1);
    CHECK(clip.samples[0] == 0.5);
  }

  TEST_CASE("wav errors") {
    CHECK(code_of([] { decode_wav(std::vector<std::uint8_t>{'n', 'o', 'p', 'e'}); }) == ErrorCode::MalformedHeader);
    CHECK(code_of([] { decode_wav(wav_bytes(2, 4, 1, 8000, pcm16({1, 2}))); }) == ErrorCode::UnsupportedEncoding);
    CHECK(code_of([] { decode_wav(wav_bytes(1, 16, 1, 8000, {})); }) == ErrorCode::EmptyAudio);
    CHECK(code_of([] { read_wav("/nonexistent/x.wav"); }) == ErrorCode::IoError);
  }

  TEST_CASE("wav round trip within one quantization step on 100 random signals") {
    testing::TempDir dir("wav");
    std::mt19937_64 rng(11);
    double worst = 0.0;
    for (int trial = 0; trial < 100; ++trial) {
      auto x = testing::random_vector(50 + trial * 7, rng);
      write_wav(dir / "a.wav", x, 8000);
      auto first = read_wav(dir / "a.wav");
      write_wav(dir / "b.wav", first.samples, first.sample_rate_hz);
      auto second = read_wav(dir / "b.wav");
      CHECK(second.samples == first.samples);
      worst = std::max(worst, testing::max_abs_diff(first.samples, x));
    }
    CHECK(worst <= 1.0 / 32768);
  }

  TEST_CASE("annotation rows") {
    auto rows = parse_icbhi_annotations_text("0.364 2.436 0 0\n2.436\t4.2\t1\t1\n");
    REQUIRE(rows.size() == 2);
    CHECK(rows[0].start_s == 0.364);
    CHECK(rows[0].end_s == 2.436);
    CHECK_FALSE(rows[0].crackle);
    CHECK_FALSE(rows[0].wheeze);
    CHECK(sound_label_from_flags(rows[1].crackle, rows[1].wheeze) == SoundLabel::Both);
    CHECK(sound_label_from_flags(true, false) == SoundLabel::Crackles);
    CHECK(sound_label_from_flags(false, true) == SoundLabel::Wheezes);
    CHECK(sound_label_from_flags(false, false) == SoundLabel::Healthy);
    CHECK(code_of([] { parse_icbhi_annotations_text("1.0 0.5 0 0\n"); }) == ErrorCode::MalformedRow);
    CHECK(code_of([] { parse_icbhi_annotations_text("a b 0 0\n"); }) == ErrorCode::MalformedRow);
    CHECK(code_of([] { parse_icbhi_annotations_text("\n"); }) == ErrorCode::EmptyFile);
  }

  TEST_CASE("recording label takes the most severe cycle") {
    std::vector<CycleAnnotation> c{{0, 1, false, false}, {1, 2, false, true}};
    CHECK(recording_sound_label(c) == SoundLabel::Wheezes);
    c.push_back({2, 3, true, false});
    CHECK(recording_sound_label(c) == SoundLabel::Crackles);
    c.push_back({3, 4, true, true});
    CHECK(recording_sound_label(c) == SoundLabel::Both);
  }

  TEST_CASE("filename tokens") {
    auto n = parse_filename("101_1b1_Al_sc_Meditron.wav");
    CHECK(n.patient_id == 101);
    CHECK(n.recording_index == "1b1");
    CHECK(n.chest_location == "Al");
    CHECK(n.acquisition_mode == "sc");
    CHECK(n.equipment == "Meditron");
    CHECK(parse_filename("226_1b1_Pl_sc_LittC2SE.wav").patient_id == 226);
    CHECK(code_of([] { parse_filename("bad_name.wav"); }) == ErrorCode::BadTokenCount);
  }

  TEST_CASE("disease names parse case-insensitively") {
    CHECK(parse_disease("copd") == DiseaseLabel::COPD);
    CHECK(parse_disease("URTI") == DiseaseLabel::URTI);
    CHECK(parse_disease("Healthy") == DiseaseLabel::Healthy);
    CHECK_FALSE(parse_disease("Asthma").has_value());
  }

  TEST_CASE("demographics derive child BMI and exclude unusable rows") {
    auto d = parse_demographics_text(
        "101 3 F NA 19 99\n"
        "102 0.75 F NA 9.8 73\n"
        "103 70 F 28.47 NA NA\n"
        "104 NA M NA NA NA\n");
    REQUIRE(d.records.size() == 3);
    CHECK(d.records[0].bmi_kg_m2 == doctest::Approx(19.0 / (0.99 * 0.99)));
    CHECK(d.records[2].gender == Gender::Female);
    CHECK(d.records[2].bmi_kg_m2 == 28.47);
    CHECK(d.excluded_patients == std::vector<int>{104});
  }

  TEST_CASE("empty directory gives an empty corpus") {
    testing::TempDir dir("empty");
    auto c = load_corpus(dir.path, {}, {});
    CHECK(c.sources.empty());
    CHECK(c.recording_count == 0);
  }

  TEST_CASE("corpus loads paired files and skips unknown diagnoses") {
    testing::TempDir dir("corpus");
    std::vector<double> x(800, 0.1);
    write_wav(dir / "101_1b1_Al_sc_Meditron.wav", x, 8000);
    write_wav(dir / "102_1b1_Al_sc_Meditron.wav", x, 8000);
    std::ofstream(dir / "101_1b1_Al_sc_Meditron.txt") << "0.0 0.05 1 0\n0.05 0.1 0 0\n";
    std::ofstream(dir / "102_1b1_Al_sc_Meditron.txt") << "0.0 0.1 0 0\n";
    std::ofstream(dir / "diag.txt") << "101\tCOPD\n102\tAsthma\n";
    std::vector<std::string> warnings;
    static std::vector<std::string>* sink = &warnings;
    set_warning_sink([](std::string_view m) { sink->emplace_back(m); });
    auto c = load_corpus(dir.path, dir / "diag.txt", {});
    set_warning_sink(nullptr);
    CHECK(c.recording_count == 2);
    CHECK(c.cycle_count == 3);
    REQUIRE(c.sources.size() == 1);
    CHECK(c.sources[0].sound == SoundLabel::Crackles);
    CHECK(c.sources[0].disease == DiseaseLabel::COPD);
    CHECK(c.skipped.size() == 1);
    CHECK(warnings.size() == 1);

    auto cycles = load_corpus(dir.path, dir / "diag.txt", {}, {Granularity::Cycle, 1});
    CHECK(cycles.sources.size() == 2);
  }

  TEST_CASE("stratified split cardinality and balance") {
    std::vector<int> same(10, 0);
    auto s = stratified_split(10, same, 0.8, 7);
    CHECK(s.train.size() == 8);
    CHECK(s.test.size() == 2);

    std::vector<int> ab(100);
    for (int i = 0; i < 100; ++i) ab[i] = i % 2;
    auto t = stratified_split(100, ab, 0.8, 3);
    int a = 0, b = 0;
    for (auto i : t.train) (ab[i] ? b : a)++;
    CHECK(a == 40);
    CHECK(b == 40);
  }

  TEST_CASE("split properties over 20 seeds") {
    std::mt19937_64 rng(5);
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
      const std::size_t n = 30 + seed * 3;
      std::vector<int> labels(n);
      for (auto& l : labels) l = static_cast<int>(rng() % 4);
      auto s = stratified_split(n, labels, 0.8, seed);
      auto again = stratified_split(n, labels, 0.8, seed);
      CHECK(again.train == s.train);
      CHECK(again.test == s.test);
      std::set<std::size_t> tr(s.train.begin(), s.train.end()), te(s.test.begin(), s.test.end());
      CHECK(tr.size() + te.size() == n);
      for (auto i : te) CHECK(tr.count(i) == 0);
      CHECK(s.train.size() == static_cast<std::size_t>(std::llround(0.8 * n)));
      for (int k = 0; k < 4; ++k) {
        double members = std::count(labels.begin(), labels.end(), k);
        double in_train = 0;
        for (auto i : s.train) in_train += labels[i] == k;
        CHECK(std::abs(in_train - 0.8 * members) <= 1.0);
      }
    }
  }

  TEST_CASE("patient split keeps patients whole") {
    std::vector<int> pids;
    for (int p = 0; p < 20; ++p)
      for (int r = 0; r <= p % 3; ++r) pids.push_back(p);
    auto s = patient_split(pids, 0.8, 9);
    std::set<int> train_p, test_p;
    for (auto i : s.train) train_p.insert(pids[i]);
    for (auto i : s.test) test_p.insert(pids[i]);
    for (int p : test_p) CHECK(train_p.count(p) == 0);
    CHECK(s.train.size() + s.test.size() == pids.size());
  }

  TEST_CASE("synthetic corpus cardinality and determinism") {
    auto c = synth_corpus(2, 42);
    REQUIRE(c.size() == 8);
    int per[4] = {};
    for (auto& s : c) per[static_cast<int>(s.sound)]++;
    for (int k = 0; k < 4; ++k) CHECK(per[k] == 2);
    auto again = synth_corpus(2, 42);
    for (std::size_t i = 0; i < c.size(); ++i) CHECK(again[i].clip.samples == c[i].clip.samples);
    for (auto& s : c) CHECK((s.disease == synth_disease(s.sound, 0) || s.disease == synth_disease(s.sound, 1)));
  }

  TEST_CASE("wheeze clips peak inside the wheeze band") {
    for (auto& s : synth_corpus(3, 42)) {
      if (s.sound != SoundLabel::Wheezes) continue;
      const auto& x = s.clip.samples;
      std::size_t n = 1;
      while (n < x.size()) n <<= 1;
      auto p = power_spectrum(x, static_cast<int>(n));
      auto peak = std::max_element(p.begin() + 1, p.end()) - p.begin();
      const double hz = static_cast<double>(peak) * s.clip.sample_rate_hz / n;
      CHECK(hz >= 200.0);
      CHECK(hz <= 800.0);
    }
  }
}
