#include "lungmtl/json_io.hpp"

#include <cstdio>
#include <fstream>

namespace lungmtl {

using nlohmann::json;

namespace {

// Missing keys keep their defaults so partial config sections are accepted.
template <typename V>
void opt(const json& j, const char* key, V& out) {
  if (auto it = j.find(key); it != j.end()) it->get_to(out);
}

}  // namespace

void to_json(json& j, const MfccConfig& c) {
  j = json{{"pre_emphasis_alpha", c.pre_emphasis_alpha},
           {"frame_len_ms", c.frame_len_ms},
           {"hop_ms", c.hop_ms},
           {"n_fft", c.n_fft},
           {"n_mel_filters", c.n_mel_filters},
           {"n_coefficients", c.n_coefficients},
           {"fmin_hz", c.fmin_hz},
           {"fmax_hz", c.fmax_hz},
           {"target_frames", c.target_frames},
           {"target_sample_rate_hz", c.target_sample_rate_hz}};
}

void from_json(const json& j, MfccConfig& c) {
  opt(j, "pre_emphasis_alpha", c.pre_emphasis_alpha);
  opt(j, "frame_len_ms", c.frame_len_ms);
  opt(j, "hop_ms", c.hop_ms);
  opt(j, "n_fft", c.n_fft);
  opt(j, "n_mel_filters", c.n_mel_filters);
  opt(j, "n_coefficients", c.n_coefficients);
  opt(j, "fmin_hz", c.fmin_hz);
  opt(j, "fmax_hz", c.fmax_hz);
  opt(j, "target_frames", c.target_frames);
  opt(j, "target_sample_rate_hz", c.target_sample_rate_hz);
}

void to_json(json& j, const TrainConfig& c) {
  j = json{{"epochs", c.epochs}, {"batch_size", c.batch_size}, {"seed", c.seed}, {"lr", c.lr},
           {"beta1", c.beta1},   {"beta2", c.beta2},           {"eps", c.eps}};
}

void from_json(const json& j, TrainConfig& c) {
  opt(j, "epochs", c.epochs);
  opt(j, "batch_size", c.batch_size);
  opt(j, "seed", c.seed);
  opt(j, "lr", c.lr);
  opt(j, "beta1", c.beta1);
  opt(j, "beta2", c.beta2);
  opt(j, "eps", c.eps);
}

void to_json(json& j, const JointLossConfig& c) {
  j = json{{"w_sound", c.w_sound}, {"w_disease", c.w_disease}, {"lambda_reg", c.lambda_reg}};
}

void from_json(const json& j, JointLossConfig& c) {
  opt(j, "w_sound", c.w_sound);
  opt(j, "w_disease", c.w_disease);
  opt(j, "lambda_reg", c.lambda_reg);
}

void to_json(json& j, const LayerSpec& s) {
  j = json{{"kind", std::string(to_string(s.kind))}};
  switch (s.kind) {
    case LayerKind::Conv2D:
    case LayerKind::DepthwiseConv2D:
      j["in_channels"] = s.in_channels;
      j["out_channels"] = s.out_channels;
      j["kernel"] = s.kernel;
      j["stride"] = s.stride;
      j["padding"] = s.padding;
      break;
    case LayerKind::PointwiseConv2D:
    case LayerKind::Dense:
      j["in_channels"] = s.in_channels;
      j["out_channels"] = s.out_channels;
      break;
    case LayerKind::BatchNorm:
      j["channels"] = s.in_channels;
      j["eps"] = s.eps;
      j["momentum"] = s.momentum;
      break;
    default:
      break;
  }
}

void from_json(const json& j, LayerSpec& s) {
  s = LayerSpec{};
  s.kind = layer_kind_from_string(j.at("kind").get<std::string>());
  opt(j, "in_channels", s.in_channels);
  opt(j, "out_channels", s.out_channels);
  opt(j, "kernel", s.kernel);
  opt(j, "stride", s.stride);
  opt(j, "padding", s.padding);
  if (s.kind == LayerKind::BatchNorm) {
    s.in_channels = s.out_channels = j.at("channels").get<int>();
    opt(j, "eps", s.eps);
    opt(j, "momentum", s.momentum);
  }
}

std::string fingerprint_hex(std::uint64_t fp) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fp));
  return buf;
}

void write_file_atomic(const std::filesystem::path& path, std::string_view contents) {
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::IoError, "cannot write " + tmp.string());
    out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
    out.flush();
    if (!out) throw Error(ErrorCode::IoError, "short write to " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    std::filesystem::remove(tmp);
    throw Error(ErrorCode::IoError, "cannot rename onto " + path.string() + ": " + ec.message());
  }
}

}  // namespace lungmtl
