#include "passt/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <unordered_map>

#include "passt/json_io.hpp"

namespace passt {

using nlohmann::json;

void to_json(json& j, const MelConfig& c) {
  j = json{{"preset", c.preset},       {"sample_rate", c.sample_rate},
           {"window_length", c.window_length}, {"hop_length", c.hop_length},
           {"n_mels", c.n_mels},       {"fmin", c.fmin},
           {"fmax", c.fmax},           {"log_floor", c.log_floor}};
}

void from_json(const json& j, MelConfig& c) {
  // A bare {"preset": name} expands to the preset's explicit fields; any
  // explicit field overrides.
  if (j.contains("preset") && j["preset"].get<std::string>() != "")
    c = mel_preset(j["preset"].get<std::string>());
  c.sample_rate = j.value("sample_rate", c.sample_rate);
  c.window_length = j.value("window_length", c.window_length);
  c.hop_length = j.value("hop_length", c.hop_length);
  c.n_mels = j.value("n_mels", c.n_mels);
  c.fmin = j.value("fmin", c.fmin);
  c.fmax = j.value("fmax", c.fmax);
  c.log_floor = j.value("log_floor", c.log_floor);
}

void to_json(json& j, const PatchGeometry& g) {
  j = json{{"patch_f", g.patch_f},
           {"patch_t", g.patch_t},
           {"stride_f", g.stride_f},
           {"stride_t", g.stride_t}};
}

void from_json(const json& j, PatchGeometry& g) {
  g.patch_f = j.value("patch_f", g.patch_f);
  g.patch_t = j.value("patch_t", g.patch_t);
  g.stride_f = j.value("stride_f", g.stride_f);
  g.stride_t = j.value("stride_t", g.stride_t);
}

void to_json(json& j, const EncoderConfig& c) {
  j = json{{"d", c.d},
           {"n_layers", c.n_layers},
           {"n_heads", c.n_heads},
           {"mlp_ratio", c.mlp_ratio},
           {"n_classes", c.n_classes},
           {"dropout", c.dropout}};
}

void from_json(const json& j, EncoderConfig& c) {
  c.d = j.value("d", c.d);
  c.n_layers = j.value("n_layers", c.n_layers);
  c.n_heads = j.value("n_heads", c.n_heads);
  c.mlp_ratio = j.value("mlp_ratio", c.mlp_ratio);
  c.n_classes = j.value("n_classes", c.n_classes);
  c.dropout = j.value("dropout", c.dropout);
}

void to_json(json& j, const PatchoutSpec& s) {
  const char* mode = s.mode == PatchoutMode::Off ? "off"
                     : s.mode == PatchoutMode::Structured ? "structured"
                                                          : "unstructured";
  j = json{{"mode", mode},
           {"f_drop", s.f_drop},
           {"t_drop", s.t_drop},
           {"u_drop", s.u_drop}};
}

void from_json(const json& j, PatchoutSpec& s) {
  std::string mode = j.value("mode", "off");
  if (mode == "off") s.mode = PatchoutMode::Off;
  else if (mode == "structured") s.mode = PatchoutMode::Structured;
  else if (mode == "unstructured") s.mode = PatchoutMode::Unstructured;
  else throw Error("usage", "patchout mode must be off|structured|unstructured");
  s.f_drop = j.value("f_drop", 0);
  s.t_drop = j.value("t_drop", 0);
  s.u_drop = j.value("u_drop", 0);
}

void to_json(json& j, const AugmentConfig& a) {
  j = json{{"mixup", a.mixup},
           {"mixup_alpha", a.mixup_alpha},
           {"specaugment", a.specaugment},
           {"time_stripes", a.time_stripes},
           {"time_stripe_frac", a.time_stripe_frac},
           {"freq_stripes", a.freq_stripes},
           {"freq_stripe_bins", a.freq_stripe_bins},
           {"roll", a.roll},
           {"roll_max_frac", a.roll_max_frac},
           {"gain", a.gain},
           {"gain_max_db", a.gain_max_db}};
}

void from_json(const json& j, AugmentConfig& a) {
  a.mixup = j.value("mixup", a.mixup);
  a.mixup_alpha = j.value("mixup_alpha", a.mixup_alpha);
  a.specaugment = j.value("specaugment", a.specaugment);
  a.time_stripes = j.value("time_stripes", a.time_stripes);
  a.time_stripe_frac = j.value("time_stripe_frac", a.time_stripe_frac);
  a.freq_stripes = j.value("freq_stripes", a.freq_stripes);
  a.freq_stripe_bins = j.value("freq_stripe_bins", a.freq_stripe_bins);
  a.roll = j.value("roll", a.roll);
  a.roll_max_frac = j.value("roll_max_frac", a.roll_max_frac);
  a.gain = j.value("gain", a.gain);
  a.gain_max_db = j.value("gain_max_db", a.gain_max_db);
}

namespace {

void write_u32le(std::ofstream& out, std::uint32_t v) {
  std::uint8_t b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<std::uint8_t>(v >> (8 * i));
  out.write(reinterpret_cast<const char*>(b), 4);
}

void write_u64le(std::ofstream& out, std::uint64_t v) {
  std::uint8_t b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<std::uint8_t>(v >> (8 * i));
  out.write(reinterpret_cast<const char*>(b), 8);
}

std::uint32_t read_u32le(std::istream& in) {
  std::uint8_t b[4];
  in.read(reinterpret_cast<char*>(b), 4);
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
  return v;
}

std::uint64_t read_u64le(std::istream& in) {
  std::uint8_t b[8];
  in.read(reinterpret_cast<char*>(b), 8);
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  return v;
}

std::string shape_str(const std::vector<size_t>& s) {
  std::string out = "(";
  for (size_t i = 0; i < s.size(); ++i)
    out += (i ? "," : "") + std::to_string(s[i]);
  return out + ")";
}

}  // namespace

void save_checkpoint(const PasstModel& model, const std::string& path,
                     bool as_f32) {
  auto named = model.named_params();
  json tensors = json::array();
  std::uint64_t offset = 0;
  const char* dtype = as_f32 ? "f32" : "f64";
  size_t elem = as_f32 ? 4 : 8;
  for (const auto& [name, t] : named) {
    tensors.push_back(
        {{"name", name}, {"shape", t.shape()}, {"dtype", dtype}, {"offset", offset}});
    offset += t.numel() * elem;
  }
  json header = {{"config", model.config},
                 {"geometry", model.geometry},
                 {"mel", model.mel},
                 {"grid_f", model.grid_f},
                 {"grid_t_max", model.grid_t_max},
                 {"tensors", tensors}};
  std::string header_str = header.dump();

  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("io", "cannot write " + path);
  out.write(kCheckpointMagic, 8);
  write_u32le(out, kCheckpointVersion);
  write_u64le(out, header_str.size());
  out.write(header_str.data(), static_cast<std::streamsize>(header_str.size()));
  for (const auto& [name, t] : named) {
    if (as_f32) {
      for (double v : t.data()) {
        float f = static_cast<float>(v);
        out.write(reinterpret_cast<const char*>(&f), 4);
      }
    } else {
      out.write(reinterpret_cast<const char*>(t.data().data()),
                static_cast<std::streamsize>(t.numel() * 8));
    }
  }
  if (!out) throw Error("io", "write failed: " + path);
}

PasstModel load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("io", "cannot open " + path);
  char magic[8];
  in.read(magic, 8);
  if (!in || std::memcmp(magic, kCheckpointMagic, 8) != 0)
    throw Error("format", path + ": bad checkpoint magic");
  std::uint32_t version = read_u32le(in);
  if (version != kCheckpointVersion)
    throw Error("format", path + ": unsupported checkpoint version " +
                              std::to_string(version) + " (expected " +
                              std::to_string(kCheckpointVersion) + ")");
  std::uint64_t header_len = read_u64le(in);
  std::string header_str(header_len, '\0');
  in.read(header_str.data(), static_cast<std::streamsize>(header_len));
  if (!in) throw Error("format", path + ": truncated header");

  json header;
  try {
    header = json::parse(header_str);
  } catch (const json::exception& e) {
    throw Error("format", path + ": header is not valid JSON: " + e.what());
  }

  EncoderConfig cfg = header.at("config").get<EncoderConfig>();
  PatchGeometry geom = header.at("geometry").get<PatchGeometry>();
  MelConfig mel = header.at("mel").get<MelConfig>();
  PasstModel model = PasstModel::create(cfg, geom, mel, /*seed=*/0);

  std::unordered_map<std::string, Tensor> by_name;
  for (auto& [name, t] : model.named_params()) by_name.emplace(name, t);

  std::streampos blob_start = in.tellg();
  for (const auto& entry : header.at("tensors")) {
    std::string name = entry.at("name").get<std::string>();
    auto shape = entry.at("shape").get<std::vector<size_t>>();
    std::string dtype = entry.at("dtype").get<std::string>();
    auto offset = entry.at("offset").get<std::uint64_t>();
    auto it = by_name.find(name);
    if (it == by_name.end())
      throw Error("format", path + ": unknown tensor '" + name + "'");
    Tensor t = it->second;
    if (shape != t.shape())
      throw Error("shape", path + ": tensor '" + name + "' has shape " +
                               shape_str(shape) +
                               " but the config-derived shape is " +
                               shape_str(t.shape()));
    in.seekg(blob_start + static_cast<std::streamoff>(offset));
    if (dtype == "f64") {
      in.read(reinterpret_cast<char*>(t.data().data()),
              static_cast<std::streamsize>(t.numel() * 8));
    } else if (dtype == "f32") {
      for (double& v : t.data()) {
        float f;
        in.read(reinterpret_cast<char*>(&f), 4);
        v = static_cast<double>(f);
      }
    } else {
      throw Error("format", path + ": unknown dtype '" + dtype + "'");
    }
    if (!in) throw Error("format", path + ": truncated blob for '" + name + "'");
  }
  return model;
}

void require_model_dim(const PasstModel& model, size_t expected_d) {
  if (model.config.d != expected_d)
    throw Error("shape", "checkpoint embedding dim is " +
                             std::to_string(model.config.d) +
                             " but the run expects " +
                             std::to_string(expected_d));
}

}  // namespace passt
