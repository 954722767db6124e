#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace lungmtl {

struct AudioClip {
  std::vector<double> samples;  // mono, normalized to [-1, 1]
  int sample_rate_hz = 0;
  int patient_id = 0;
  std::string recording_id;

  double duration_s() const {
    return sample_rate_hz > 0 ? static_cast<double>(samples.size()) / sample_rate_hz : 0.0;
  }
};

struct CycleAnnotation {
  double start_s = 0.0;
  double end_s = 0.0;
  bool crackle = false;
  bool wheeze = false;
};

enum class SoundLabel : int { Crackles = 0, Wheezes = 1, Both = 2, Healthy = 3 };
enum class DiseaseLabel : int {
  Bronchiectasis = 0,
  Bronchiolitis = 1,
  COPD = 2,
  Pneumonia = 3,
  URTI = 4,
  Healthy = 5,
};
enum class Gender : int { Female = 0, Male = 1 };

inline constexpr int kSoundClasses = 4;
inline constexpr int kDiseaseClasses = 6;

SoundLabel sound_label_from_flags(bool crackle, bool wheeze);
// Both > Crackles > Wheezes > Healthy over a recording's cycles.
SoundLabel recording_sound_label(std::span<const CycleAnnotation> cycles);
std::optional<DiseaseLabel> parse_disease(std::string_view name);  // case-insensitive
std::string_view to_string(SoundLabel label);
std::string_view to_string(DiseaseLabel label);

struct DemographicRecord {
  int patient_id = 0;
  double age_years = 0.0;
  Gender gender = Gender::Female;
  double bmi_kg_m2 = 0.0;
};

struct Split {
  std::vector<std::size_t> train;
  std::vector<std::size_t> test;
  std::uint64_t seed = 0;
};

// ---- WAV ----------------------------------------------------------------

AudioClip read_wav(const std::filesystem::path& path);
AudioClip decode_wav(std::span<const std::uint8_t> bytes, const std::string& context = "<memory>");
// Mono PCM16 little-endian; samples are clamped to [-1, 1] and rounded.
void write_wav(const std::filesystem::path& path, std::span<const double> samples, int sample_rate_hz);
std::vector<std::uint8_t> encode_wav_pcm16(std::span<const double> samples, int sample_rate_hz);

// ---- ICBHI text formats -------------------------------------------------

std::vector<CycleAnnotation> parse_icbhi_annotations(const std::filesystem::path& path);
std::vector<CycleAnnotation> parse_icbhi_annotations_text(std::string_view text,
                                                          const std::string& context = "<memory>");

struct RecordingName {
  int patient_id = 0;
  std::string recording_index;
  std::string chest_location;
  std::string acquisition_mode;
  std::string equipment;
};

RecordingName parse_filename(std::string_view name);

// Maps patient_id -> diagnosis text. Header row optional.
std::vector<std::pair<int, std::string>> read_diagnoses(const std::filesystem::path& path);

struct DemographicsLoad {
  std::vector<DemographicRecord> records;
  std::vector<int> excluded_patients;  // no derivable BMI, or age/BMI out of range
};

// Six columns: patient id, age, sex, adult BMI, child weight (kg), child height (cm).
// Comma or whitespace separated; "NA" or empty fields mean missing. A header row naming
// the columns may reorder them.
DemographicsLoad read_demographics(const std::filesystem::path& path);
DemographicsLoad parse_demographics_text(std::string_view text, const std::string& context = "<memory>");

// ---- corpus -------------------------------------------------------------

enum class Granularity { Recording, Cycle };

struct RecordingSource {
  AudioClip clip;
  SoundLabel sound = SoundLabel::Healthy;
  DiseaseLabel disease = DiseaseLabel::Healthy;
  std::vector<CycleAnnotation> cycles;
};

struct CorpusLoadOptions {
  Granularity granularity = Granularity::Recording;
  unsigned workers = 0;  // 0 = available cores
};

struct Corpus {
  std::vector<RecordingSource> sources;
  std::vector<DemographicRecord> demographics;
  std::vector<std::string> skipped;  // recordings dropped for a missing or unknown diagnosis
  std::size_t recording_count = 0;  // every .wav found, including skipped ones
  std::size_t cycle_count = 0;      // annotated cycles across all recordings found
};

Corpus load_corpus(const std::filesystem::path& audio_dir, const std::filesystem::path& diagnosis_file,
                   const std::filesystem::path& demographics_file, const CorpusLoadOptions& options = {});

// Per-class proportional split. Classes with fewer than 2 members trigger an unstratified
// split with a warning.
Split stratified_split(std::size_t n, std::span<const int> labels, double ratio, std::uint64_t seed);
// Groups by patient so no patient straddles train and test. Labels are not balanced.
Split patient_split(std::span<const int> patient_ids, double ratio, std::uint64_t seed);

// ---- synthetic corpus ---------------------------------------------------

struct SynthClip {
  AudioClip clip;
  SoundLabel sound;
  DiseaseLabel disease;
};

// Disease assigned from (sound class, loudness variant); variant alternates within a class.
DiseaseLabel synth_disease(SoundLabel sound, int variant);

std::vector<SynthClip> synth_corpus(std::size_t n_per_class, std::uint64_t seed, int sample_rate_hz = 8000,
                                    double duration_s = 5.0);

}  // namespace lungmtl
