#include "lungmtl/corpus.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <map>
#include <numeric>
#include <random>
#include <sstream>

#include "lungmtl/error.hpp"
#include "lungmtl/parallel.hpp"

namespace lungmtl {

namespace fs = std::filesystem;

namespace {

std::string lower(std::string_view s) {
  std::string out(s);
  for (auto& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

std::string trim(std::string_view s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return std::string(s.substr(b, e - b));
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoError, "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::vector<std::string> split_fields(const std::string& line) {
  std::vector<std::string> out;
  if (line.find(',') != std::string::npos) {
    std::string field;
    std::istringstream ss(line);
    while (std::getline(ss, field, ',')) out.push_back(trim(field));
    if (!line.empty() && line.back() == ',') out.emplace_back();
  } else {
    std::istringstream ss(line);
    std::string tok;
    while (ss >> tok) out.push_back(tok);
  }
  return out;
}

std::optional<double> parse_real(std::string_view s) {
  std::string t = trim(s);
  if (t.empty() || lower(t) == "na" || lower(t) == "nan") return std::nullopt;
  char* end = nullptr;
  double v = std::strtod(t.c_str(), &end);
  if (end != t.c_str() + t.size() || !std::isfinite(v)) return std::nullopt;
  return v;
}

std::optional<int> parse_int(std::string_view s) {
  std::string t = trim(s);
  int v = 0;
  auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
  if (ec != std::errc() || ptr != t.data() + t.size()) return std::nullopt;
  return v;
}

std::uint16_t rd16(const std::uint8_t* p) { return static_cast<std::uint16_t>(p[0] | (p[1] << 8)); }
std::uint32_t rd32(const std::uint8_t* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

void wr16(std::vector<std::uint8_t>& out, std::uint16_t v) {
  out.push_back(static_cast<std::uint8_t>(v & 0xff));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
}
void wr32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>((v >> (8 * i)) & 0xff));
}

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t index) {
  // splitmix64 finalizer
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (index + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

}  // namespace

SoundLabel sound_label_from_flags(bool crackle, bool wheeze) {
  if (crackle && wheeze) return SoundLabel::Both;
  if (crackle) return SoundLabel::Crackles;
  if (wheeze) return SoundLabel::Wheezes;
  return SoundLabel::Healthy;
}

SoundLabel recording_sound_label(std::span<const CycleAnnotation> cycles) {
  bool any_both = false, any_crackle = false, any_wheeze = false;
  for (const auto& c : cycles) {
    any_both |= c.crackle && c.wheeze;
    any_crackle |= c.crackle;
    any_wheeze |= c.wheeze;
  }
  if (any_both) return SoundLabel::Both;
  if (any_crackle) return SoundLabel::Crackles;
  if (any_wheeze) return SoundLabel::Wheezes;
  return SoundLabel::Healthy;
}

std::optional<DiseaseLabel> parse_disease(std::string_view name) {
  const std::string n = lower(trim(name));
  if (n == "bronchiectasis") return DiseaseLabel::Bronchiectasis;
  if (n == "bronchiolitis") return DiseaseLabel::Bronchiolitis;
  if (n == "copd") return DiseaseLabel::COPD;
  if (n == "pneumonia") return DiseaseLabel::Pneumonia;
  if (n == "urti") return DiseaseLabel::URTI;
  if (n == "healthy") return DiseaseLabel::Healthy;
  return std::nullopt;
}

std::string_view to_string(SoundLabel label) {
  switch (label) {
    case SoundLabel::Crackles: return "Crackles";
    case SoundLabel::Wheezes: return "Wheezes";
    case SoundLabel::Both: return "Both";
    case SoundLabel::Healthy: return "Healthy";
  }
  return "?";
}

std::string_view to_string(DiseaseLabel label) {
  switch (label) {
    case DiseaseLabel::Bronchiectasis: return "Bronchiectasis";
    case DiseaseLabel::Bronchiolitis: return "Bronchiolitis";
    case DiseaseLabel::COPD: return "COPD";
    case DiseaseLabel::Pneumonia: return "Pneumonia";
    case DiseaseLabel::URTI: return "URTI";
    case DiseaseLabel::Healthy: return "Healthy";
  }
  return "?";
}

// ---- WAV ----------------------------------------------------------------

AudioClip decode_wav(std::span<const std::uint8_t> bytes, const std::string& context) {
  if (bytes.size() < 12 || std::memcmp(bytes.data(), "RIFF", 4) != 0 ||
      std::memcmp(bytes.data() + 8, "WAVE", 4) != 0)
    throw Error(ErrorCode::MalformedHeader, context + ": not a RIFF/WAVE file");

  std::uint16_t format = 0, channels = 0, bits = 0;
  std::uint32_t rate = 0;
  bool have_fmt = false;
  const std::uint8_t* data = nullptr;
  std::size_t data_len = 0;

  std::size_t pos = 12;
  while (pos + 8 <= bytes.size()) {
    const std::uint8_t* hdr = bytes.data() + pos;
    std::uint32_t len = rd32(hdr + 4);
    std::size_t body = pos + 8;
    std::size_t avail = bytes.size() - body;
    if (std::memcmp(hdr, "fmt ", 4) == 0) {
      if (len < 16 || avail < 16) throw Error(ErrorCode::MalformedHeader, context + ": short fmt chunk");
      const std::uint8_t* f = bytes.data() + body;
      format = rd16(f);
      channels = rd16(f + 2);
      rate = rd32(f + 4);
      bits = rd16(f + 14);
      if (format == 0xFFFE) {
        if (len < 26 || avail < 26) throw Error(ErrorCode::MalformedHeader, context + ": short extensible fmt");
        format = rd16(f + 24);
      }
      have_fmt = true;
    } else if (std::memcmp(hdr, "data", 4) == 0) {
      data = bytes.data() + body;
      // Streams sometimes carry a bogus length; trust the bytes actually present.
      data_len = std::min<std::size_t>(len, avail);
      break;
    }
    pos = body + len + (len & 1u);
  }
  if (!have_fmt) throw Error(ErrorCode::MalformedHeader, context + ": missing fmt chunk");
  if (channels == 0 || rate == 0) throw Error(ErrorCode::MalformedHeader, context + ": zero channels or rate");
  if (!data) throw Error(ErrorCode::MalformedHeader, context + ": missing data chunk");

  const bool is_pcm = format == 1 && (bits == 8 || bits == 16 || bits == 24 || bits == 32);
  const bool is_float = format == 3 && bits == 32;
  if (!is_pcm && !is_float)
    throw Error(ErrorCode::UnsupportedEncoding,
                context + ": format " + std::to_string(format) + " with " + std::to_string(bits) + " bits");

  const std::size_t bytes_per_sample = bits / 8;
  const std::size_t frame_bytes = bytes_per_sample * channels;
  const std::size_t frames = data_len / frame_bytes;
  if (frames == 0) throw Error(ErrorCode::EmptyAudio, context + ": no samples");

  AudioClip clip;
  clip.sample_rate_hz = static_cast<int>(rate);
  clip.samples.resize(frames);
  for (std::size_t i = 0; i < frames; ++i) {
    double acc = 0.0;
    for (std::size_t c = 0; c < channels; ++c) {
      const std::uint8_t* p = data + i * frame_bytes + c * bytes_per_sample;
      double v = 0.0;
      if (is_float) {
        float f;
        std::uint32_t raw = rd32(p);
        std::memcpy(&f, &raw, 4);
        v = std::clamp(static_cast<double>(f), -1.0, 1.0);
      } else if (bits == 8) {
        v = (static_cast<int>(p[0]) - 128) / 128.0;
      } else if (bits == 16) {
        v = static_cast<std::int16_t>(rd16(p)) / 32768.0;
      } else if (bits == 24) {
        std::int32_t s = static_cast<std::int32_t>((p[0] << 8) | (p[1] << 16) | (static_cast<std::uint32_t>(p[2]) << 24)) >> 8;
        v = s / 8388608.0;
      } else {
        v = static_cast<std::int32_t>(rd32(p)) / 2147483648.0;
      }
      acc += v;
    }
    clip.samples[i] = acc / channels;
  }
  return clip;
}

AudioClip read_wav(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoError, "cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  AudioClip clip = decode_wav(bytes, path.string());
  clip.recording_id = path.stem().string();
  return clip;
}

std::vector<std::uint8_t> encode_wav_pcm16(std::span<const double> samples, int sample_rate_hz) {
  if (sample_rate_hz <= 0) throw Error(ErrorCode::InvalidArgument, "sample rate must be positive");
  const std::uint32_t data_len = static_cast<std::uint32_t>(samples.size() * 2);
  std::vector<std::uint8_t> out;
  out.reserve(44 + data_len);
  out.insert(out.end(), {'R', 'I', 'F', 'F'});
  wr32(out, 36 + data_len);
  out.insert(out.end(), {'W', 'A', 'V', 'E', 'f', 'm', 't', ' '});
  wr32(out, 16);
  wr16(out, 1);
  wr16(out, 1);
  wr32(out, static_cast<std::uint32_t>(sample_rate_hz));
  wr32(out, static_cast<std::uint32_t>(sample_rate_hz) * 2);
  wr16(out, 2);
  wr16(out, 16);
  out.insert(out.end(), {'d', 'a', 't', 'a'});
  wr32(out, data_len);
  for (double x : samples) {
    long v = std::lround(std::clamp(x, -1.0, 1.0) * 32768.0);
    v = std::clamp(v, -32768L, 32767L);
    wr16(out, static_cast<std::uint16_t>(static_cast<std::int16_t>(v)));
  }
  return out;
}

void write_wav(const fs::path& path, std::span<const double> samples, int sample_rate_hz) {
  auto bytes = encode_wav_pcm16(samples, sample_rate_hz);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::IoError, "cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(ErrorCode::IoError, "short write to " + path.string());
}

// ---- ICBHI text formats -------------------------------------------------

std::vector<CycleAnnotation> parse_icbhi_annotations_text(std::string_view text, const std::string& context) {
  std::vector<CycleAnnotation> out;
  std::istringstream in{std::string(text)};
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    std::istringstream ls(line);
    std::string a, b, c, d, extra;
    ls >> a >> b >> c >> d;
    auto start = parse_real(a), end = parse_real(b);
    auto crackle = parse_int(c), wheeze = parse_int(d);
    const std::string where = context + ":" + std::to_string(lineno);
    if (!start || !end || !crackle || !wheeze || (ls >> extra))
      throw Error(ErrorCode::MalformedRow, where + ": expected 'start end crackle wheeze'");
    if (*start < 0.0 || *end <= *start) throw Error(ErrorCode::MalformedRow, where + ": end must exceed start >= 0");
    if ((*crackle != 0 && *crackle != 1) || (*wheeze != 0 && *wheeze != 1))
      throw Error(ErrorCode::MalformedRow, where + ": flags must be 0 or 1");
    out.push_back({*start, *end, *crackle == 1, *wheeze == 1});
  }
  if (out.empty()) throw Error(ErrorCode::EmptyFile, context + ": no annotation rows");
  return out;
}

std::vector<CycleAnnotation> parse_icbhi_annotations(const fs::path& path) {
  return parse_icbhi_annotations_text(read_text(path), path.string());
}

RecordingName parse_filename(std::string_view name) {
  std::string stem = fs::path(std::string(name)).filename().string();
  if (auto dot = stem.rfind('.'); dot != std::string::npos) stem.resize(dot);
  std::vector<std::string> tokens;
  std::size_t start = 0;
  while (true) {
    auto pos = stem.find('_', start);
    tokens.push_back(stem.substr(start, pos - start));
    if (pos == std::string::npos) break;
    start = pos + 1;
  }
  if (tokens.size() != 5)
    throw Error(ErrorCode::BadTokenCount,
                std::string(name) + ": expected 5 underscore-separated tokens, got " + std::to_string(tokens.size()));
  auto id = parse_int(tokens[0]);
  if (!id) throw Error(ErrorCode::BadTokenCount, std::string(name) + ": patient id is not an integer");
  return {*id, tokens[1], tokens[2], tokens[3], tokens[4]};
}

std::vector<std::pair<int, std::string>> read_diagnoses(const fs::path& path) {
  const std::string text = read_text(path);
  std::vector<std::pair<int, std::string>> out;
  std::istringstream in(text);
  std::string line;
  bool first = true;
  while (std::getline(in, line)) {
    if (trim(line).empty()) continue;
    auto fields = split_fields(line);
    auto id = fields.empty() ? std::nullopt : parse_int(fields[0]);
    if (!id || fields.size() < 2) {
      if (first) {
        first = false;
        continue;  // header
      }
      throw Error(ErrorCode::MalformedRow, path.string() + ": bad diagnosis row '" + line + "'");
    }
    first = false;
    out.emplace_back(*id, fields[1]);
  }
  return out;
}

DemographicsLoad parse_demographics_text(std::string_view text, const std::string& context) {
  enum Col { Id, Age, Sex, Bmi, Weight, Height };
  std::array<int, 6> col{0, 1, 2, 3, 4, 5};

  DemographicsLoad out;
  std::istringstream in{std::string(text)};
  std::string line;
  bool first = true;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    auto f = split_fields(line);
    if (first) {
      first = false;
      if (f.empty() || !parse_int(f[0])) {
        for (int i = 0; i < static_cast<int>(f.size()); ++i) {
          const std::string h = lower(f[i]);
          if (h.find("bmi") != std::string::npos) col[Bmi] = i;
          else if (h.find("weight") != std::string::npos) col[Weight] = i;
          else if (h.find("height") != std::string::npos) col[Height] = i;
          else if (h.find("age") != std::string::npos) col[Age] = i;
          else if (h.find("sex") != std::string::npos || h.find("gender") != std::string::npos) col[Sex] = i;
          else if (h.find("id") != std::string::npos || h.find("patient") != std::string::npos) col[Id] = i;
        }
        continue;
      }
    }
    auto field = [&](Col c) -> std::string { return col[c] < static_cast<int>(f.size()) ? f[col[c]] : ""; };
    auto id = parse_int(field(Id));
    if (!id) throw Error(ErrorCode::MalformedRow, context + ":" + std::to_string(lineno) + ": bad patient id");

    auto age = parse_real(field(Age));
    const std::string sex = lower(trim(field(Sex)));
    std::optional<Gender> gender;
    if (sex == "f" || sex == "female" || sex == "0") gender = Gender::Female;
    if (sex == "m" || sex == "male" || sex == "1") gender = Gender::Male;

    std::optional<double> bmi = parse_real(field(Bmi));
    if (!bmi) {
      auto w = parse_real(field(Weight)), h = parse_real(field(Height));
      if (w && h && *h > 0) bmi = *w / ((*h / 100.0) * (*h / 100.0));
    }
    if (!age || !gender || !bmi || *age < 0 || *age > 130 || *bmi <= 5 || *bmi >= 100) {
      out.excluded_patients.push_back(*id);
      continue;
    }
    out.records.push_back({*id, *age, *gender, *bmi});
  }
  return out;
}

DemographicsLoad read_demographics(const fs::path& path) {
  return parse_demographics_text(read_text(path), path.string());
}

// ---- corpus -------------------------------------------------------------

Corpus load_corpus(const fs::path& audio_dir, const fs::path& diagnosis_file, const fs::path& demographics_file,
                   const CorpusLoadOptions& options) {
  Corpus corpus;
  std::map<int, std::string> diagnosis;
  if (!diagnosis_file.empty())
    for (auto& [id, name] : read_diagnoses(diagnosis_file)) diagnosis[id] = name;
  if (!demographics_file.empty()) corpus.demographics = read_demographics(demographics_file).records;

  std::error_code ec;
  if (!fs::is_directory(audio_dir, ec)) throw Error(ErrorCode::IoError, audio_dir.string() + " is not a directory");
  std::vector<fs::path> wavs;
  for (const auto& entry : fs::directory_iterator(audio_dir)) {
    if (entry.is_regular_file() && lower(entry.path().extension().string()) == ".wav") wavs.push_back(entry.path());
  }
  std::sort(wavs.begin(), wavs.end());

  struct Loaded {
    std::vector<RecordingSource> sources;
    std::size_t cycles = 0;
    std::string skip_reason;
  };
  std::vector<Loaded> loaded(wavs.size());

  parallel_for(wavs.size(), options.workers, [&](std::size_t i) {
    const fs::path& wav = wavs[i];
    Loaded& slot = loaded[i];
    RecordingName name = parse_filename(wav.filename().string());
    fs::path ann = wav;
    ann.replace_extension(".txt");
    if (!fs::exists(ann)) {
      slot.skip_reason = wav.filename().string() + ": no annotation file";
      return;
    }
    auto cycles = parse_icbhi_annotations(ann);
    slot.cycles = cycles.size();

    auto it = diagnosis.find(name.patient_id);
    if (it == diagnosis.end()) {
      slot.skip_reason = wav.filename().string() + ": MissingDiagnosis for patient " + std::to_string(name.patient_id);
      return;
    }
    auto disease = parse_disease(it->second);
    if (!disease) {
      slot.skip_reason = wav.filename().string() + ": diagnosis '" + it->second + "' is not one of the six classes";
      return;
    }

    AudioClip clip = read_wav(wav);
    clip.patient_id = name.patient_id;
    if (options.granularity == Granularity::Recording) {
      RecordingSource src;
      src.sound = recording_sound_label(cycles);
      src.disease = *disease;
      src.clip = std::move(clip);
      src.cycles = std::move(cycles);
      slot.sources.push_back(std::move(src));
      return;
    }
    for (std::size_t k = 0; k < cycles.size(); ++k) {
      const auto& c = cycles[k];
      auto b = static_cast<std::size_t>(std::llround(c.start_s * clip.sample_rate_hz));
      auto e = static_cast<std::size_t>(std::llround(c.end_s * clip.sample_rate_hz));
      b = std::min(b, clip.samples.size());
      e = std::min(e, clip.samples.size());
      if (e <= b) continue;
      RecordingSource src;
      src.clip.sample_rate_hz = clip.sample_rate_hz;
      src.clip.patient_id = clip.patient_id;
      src.clip.recording_id = clip.recording_id + "#" + std::to_string(k);
      src.clip.samples.assign(clip.samples.begin() + static_cast<std::ptrdiff_t>(b),
                              clip.samples.begin() + static_cast<std::ptrdiff_t>(e));
      src.sound = sound_label_from_flags(c.crackle, c.wheeze);
      src.disease = *disease;
      src.cycles = {c};
      slot.sources.push_back(std::move(src));
    }
  });

  corpus.recording_count = wavs.size();
  for (auto& slot : loaded) {
    corpus.cycle_count += slot.cycles;
    if (!slot.skip_reason.empty()) {
      warn(slot.skip_reason);
      corpus.skipped.push_back(slot.skip_reason);
    }
    for (auto& s : slot.sources) corpus.sources.push_back(std::move(s));
  }
  return corpus;
}

namespace {

std::size_t train_count(std::size_t n, double ratio) { return static_cast<std::size_t>(std::llround(ratio * n)); }

void check_ratio(double ratio) {
  if (!(ratio > 0.0 && ratio < 1.0)) throw Error(ErrorCode::InvalidArgument, "split ratio must be in (0, 1)");
}

}  // namespace

Split stratified_split(std::size_t n, std::span<const int> labels, double ratio, std::uint64_t seed) {
  check_ratio(ratio);
  if (labels.size() != n) throw Error(ErrorCode::InvalidArgument, "labels length differs from n");
  Split split;
  split.seed = seed;
  std::mt19937_64 rng(seed);
  const std::size_t target = train_count(n, ratio);

  std::map<int, std::vector<std::size_t>> by_class;
  for (std::size_t i = 0; i < n; ++i) by_class[labels[i]].push_back(i);

  bool too_small = false;
  for (auto& [label, idx] : by_class) too_small |= idx.size() < 2;

  std::vector<char> in_train(n, 0);
  if (too_small) {
    warn("ClassTooSmall: a class has fewer than 2 members; falling back to an unstratified split");
    std::vector<std::size_t> all(n);
    std::iota(all.begin(), all.end(), 0);
    std::shuffle(all.begin(), all.end(), rng);
    for (std::size_t i = 0; i < target; ++i) in_train[all[i]] = 1;
  } else {
    // Largest-remainder allocation keeps |train| = round(ratio * n) and each class within one
    // example of its proportional share.
    struct Quota {
      int label;
      std::size_t take;
      double remainder;
    };
    std::vector<Quota> quotas;
    std::size_t assigned = 0;
    for (auto& [label, idx] : by_class) {
      double exact = ratio * static_cast<double>(idx.size());
      auto take = static_cast<std::size_t>(std::floor(exact));
      quotas.push_back({label, take, exact - static_cast<double>(take)});
      assigned += take;
    }
    std::vector<std::size_t> order(quotas.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return quotas[a].remainder > quotas[b].remainder; });
    for (std::size_t k = 0; assigned < target && k < order.size(); ++k, ++assigned) ++quotas[order[k]].take;

    std::size_t q = 0;
    for (auto& [label, idx] : by_class) {
      std::vector<std::size_t> shuffled = idx;
      std::shuffle(shuffled.begin(), shuffled.end(), rng);
      for (std::size_t i = 0; i < quotas[q].take; ++i) in_train[shuffled[i]] = 1;
      ++q;
    }
  }
  for (std::size_t i = 0; i < n; ++i) (in_train[i] ? split.train : split.test).push_back(i);
  return split;
}

Split patient_split(std::span<const int> patient_ids, double ratio, std::uint64_t seed) {
  check_ratio(ratio);
  const std::size_t n = patient_ids.size();
  std::map<int, std::vector<std::size_t>> by_patient;
  for (std::size_t i = 0; i < n; ++i) by_patient[patient_ids[i]].push_back(i);
  std::vector<int> patients;
  for (auto& [p, idx] : by_patient) patients.push_back(p);
  std::mt19937_64 rng(seed);
  std::shuffle(patients.begin(), patients.end(), rng);

  const std::size_t target = train_count(n, ratio);
  std::vector<char> in_train(n, 0);
  std::size_t count = 0;
  for (int p : patients) {
    if (count >= target) break;
    for (auto i : by_patient[p]) in_train[i] = 1;
    count += by_patient[p].size();
  }
  Split split;
  split.seed = seed;
  for (std::size_t i = 0; i < n; ++i) (in_train[i] ? split.train : split.test).push_back(i);
  return split;
}

// ---- synthetic corpus ---------------------------------------------------

DiseaseLabel synth_disease(SoundLabel sound, int variant) {
  const bool loud = (variant % 2) != 0;
  switch (sound) {
    case SoundLabel::Healthy: return loud ? DiseaseLabel::URTI : DiseaseLabel::Healthy;
    case SoundLabel::Crackles: return loud ? DiseaseLabel::Bronchiectasis : DiseaseLabel::Pneumonia;
    case SoundLabel::Wheezes: return loud ? DiseaseLabel::COPD : DiseaseLabel::Bronchiolitis;
    case SoundLabel::Both: return DiseaseLabel::COPD;
  }
  return DiseaseLabel::Healthy;
}

std::vector<SynthClip> synth_corpus(std::size_t n_per_class, std::uint64_t seed, int sample_rate_hz,
                                    double duration_s) {
  if (n_per_class == 0) throw Error(ErrorCode::InvalidArgument, "n_per_class must be >= 1");
  if (sample_rate_hz < 1600 || duration_s <= 0.0)
    throw Error(ErrorCode::InvalidArgument, "synthetic clips need >= 1600 Hz and a positive duration");
  const auto len = static_cast<std::size_t>(std::llround(duration_s * sample_rate_hz));
  const double fs_hz = sample_rate_hz;
  constexpr double kPi = 3.14159265358979323846;

  std::vector<SynthClip> out;
  out.reserve(4 * n_per_class);
  for (std::size_t i = 0; i < n_per_class; ++i) {
    for (int cls = 0; cls < kSoundClasses; ++cls) {
      const auto sound = static_cast<SoundLabel>(cls);
      const int variant = static_cast<int>(i % 2);
      std::mt19937_64 rng(mix_seed(seed, out.size()));
      std::normal_distribution<double> white(0.0, 1.0);
      std::uniform_real_distribution<double> unit(0.0, 1.0);

      // Pink noise: Paul Kellet's economy filter over white noise.
      const double base_amp = variant ? 0.08 : 0.04;
      std::vector<double> x(len);
      double b0 = 0, b1 = 0, b2 = 0;
      for (auto& s : x) {
        double w = white(rng);
        b0 = 0.99765 * b0 + w * 0.0990460;
        b1 = 0.96300 * b1 + w * 0.2965164;
        b2 = 0.57000 * b2 + w * 1.0526913;
        s = base_amp * 0.25 * (b0 + b1 + b2 + w * 0.1848);
      }

      if (sound == SoundLabel::Crackles || sound == SoundLabel::Both) {
        // Poisson arrivals, 5 ms one-sided exponential bursts.
        const double rate_hz = 20.0;
        const auto burst = static_cast<std::size_t>(0.005 * fs_hz);
        const double tau = 0.002 * fs_hz;
        std::exponential_distribution<double> gap(rate_hz);
        for (double t = gap(rng); t < duration_s; t += gap(rng)) {
          const auto at = static_cast<std::size_t>(t * fs_hz);
          const double amp = (unit(rng) < 0.5 ? -1.0 : 1.0) * (0.4 + 0.2 * unit(rng));
          for (std::size_t k = 0; k < burst && at + k < len; ++k) x[at + k] += amp * std::exp(-static_cast<double>(k) / tau);
        }
      }
      if (sound == SoundLabel::Wheezes || sound == SoundLabel::Both) {
        const double f0 = 200.0 + 600.0 * unit(rng);
        const double f_am = 0.25 + 0.25 * unit(rng);
        const double phase = 2.0 * kPi * unit(rng);
        for (std::size_t k = 0; k < len; ++k) {
          const double t = static_cast<double>(k) / fs_hz;
          const double envelope = 0.5 + 0.5 * std::sin(2.0 * kPi * f_am * t + phase);
          x[k] += 0.3 * envelope * std::sin(2.0 * kPi * f0 * t);
        }
      }
      for (auto& s : x) s = std::clamp(s, -1.0, 1.0);

      SynthClip clip;
      clip.clip.samples = std::move(x);
      clip.clip.sample_rate_hz = sample_rate_hz;
      clip.clip.patient_id = static_cast<int>(out.size());
      clip.clip.recording_id = "synth_" + std::string(to_string(sound)) + "_" + std::to_string(i);
      clip.sound = sound;
      clip.disease = synth_disease(sound, variant);
      out.push_back(std::move(clip));
    }
  }
  return out;
}

}  // namespace lungmtl
