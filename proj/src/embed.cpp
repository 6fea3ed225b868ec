#include "passt/embed.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include <json.hpp>

namespace passt {

using nlohmann::json;

LevelSpec parse_levels(const std::string& spec) {
  LevelSpec levels;
  levels.use_l = levels.use_m = levels.use_h = false;
  std::stringstream ss(spec);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item == "L" || item == "l") levels.use_l = true;
    else if (item == "M" || item == "m") levels.use_m = true;
    else if (item == "H" || item == "h") levels.use_h = true;
    else throw Error("usage", "level spec must name L, M, H; got '" + item + "'");
  }
  levels.validate();
  return levels;
}

std::string levels_to_string(const LevelSpec& levels) {
  std::string out;
  if (levels.use_l) out += "L";
  if (levels.use_m) out += out.empty() ? "M" : ",M";
  if (levels.use_h) out += out.empty() ? "H" : ",H";
  return out;
}

RFSpec parse_rf(const std::string& spec) {
  RFSpec rf;
  if (spec == "160") rf.rf_ms = {160};
  else if (spec == "640") rf.rf_ms = {640};
  else if (spec == "2rf" || spec == "2RF") rf.rf_ms = {160, 640};
  else throw Error("usage", "rf must be 160, 640 or 2rf; got '" + spec + "'");
  return rf;
}

size_t level_dim(const LevelSpec& levels, const EncoderConfig& cfg, int n_mels,
                 bool timestamp_mode) {
  levels.validate();
  size_t dim = 0;
  if (levels.use_l)
    dim += timestamp_mode ? static_cast<size_t>(kTimestampMelFrames) * n_mels
                          : static_cast<size_t>(n_mels);
  if (levels.use_m) dim += cfg.d;
  if (levels.use_h) dim += cfg.n_classes;
  return dim;
}

std::vector<double> EmbeddingMatrix::row_as_double(size_t r) const {
  std::vector<double> out(dim);
  for (size_t c = 0; c < dim; ++c) out[c] = static_cast<double>(at(r, c));
  return out;
}

std::vector<std::pair<size_t, size_t>> scene_windows(size_t n_samples,
                                                     size_t window_samples,
                                                     size_t stride_samples) {
  if (n_samples == 0) throw Error("bounds", "scene_windows: empty audio");
  std::vector<std::pair<size_t, size_t>> windows;
  if (n_samples <= window_samples) {
    windows.emplace_back(0, n_samples);
    return windows;
  }
  size_t start = 0;
  while (start + window_samples <= n_samples) {
    windows.emplace_back(start, start + window_samples);
    start += stride_samples;
  }
  // Keep a partial tail window when the full windows stop short of the end.
  size_t covered = windows.back().second;
  if (covered < n_samples) windows.emplace_back(start, n_samples);
  return windows;
}

namespace {

// L/M/H vector for one already-cut window, in doubles.
std::vector<double> assemble_window(const MelSpectrogram& mel,
                                    const PasstModel& model,
                                    const LevelSpec& levels) {
  std::vector<double> out;
  if (levels.use_l) {
    for (int m = 0; m < mel.n_mels; ++m) {
      double sum = 0.0;
      for (int t = 0; t < mel.n_frames; ++t) sum += mel.at(m, t);
      out.push_back(sum / mel.n_frames);
    }
  }
  if (levels.use_m || levels.use_h) {
    TokenSequence seq = model.tokenize_mel(mel);
    EncoderOutput enc = encoder_forward(seq, model, RunMode::Eval);
    if (levels.use_m)
      out.insert(out.end(), enc.pooled.data().begin(), enc.pooled.data().end());
    if (levels.use_h)
      out.insert(out.end(), enc.logits.data().begin(), enc.logits.data().end());
  }
  return out;
}

Waveform cut_window(const Waveform& wav, size_t begin, size_t end) {
  Waveform out;
  out.sample_rate = wav.sample_rate;
  out.samples.assign(wav.samples.begin() + begin, wav.samples.begin() + end);
  return out;
}

// Centered window with zero padding outside the clip.
Waveform cut_centered(const Waveform& wav, long center, size_t length) {
  Waveform out;
  out.sample_rate = wav.sample_rate;
  out.samples.assign(length, 0.0);
  long begin = center - static_cast<long>(length) / 2;
  long n = static_cast<long>(wav.samples.size());
  for (size_t i = 0; i < length; ++i) {
    long src = begin + static_cast<long>(i);
    if (src >= 0 && src < n) out.samples[i] = wav.samples[src];
  }
  return out;
}

}  // namespace

EmbeddingMatrix scene_embedding(const Waveform& wav, const PasstModel& model,
                                const LevelSpec& levels, double window_s,
                                double overlap) {
  levels.validate();
  if (wav.samples.empty()) throw Error("bounds", "scene_embedding: empty audio");
  if (overlap < 0.0 || overlap >= 1.0)
    throw Error("bounds", "scene_embedding: overlap in [0, 1)");
  auto window_samples =
      static_cast<size_t>(std::llround(window_s * wav.sample_rate));
  auto stride_samples = static_cast<size_t>(
      std::llround(window_s * (1.0 - overlap) * wav.sample_rate));
  if (stride_samples == 0) throw Error("bounds", "scene_embedding: zero stride");

  auto windows = scene_windows(wav.samples.size(), window_samples, stride_samples);
  std::vector<std::vector<double>> rows;
  rows.reserve(windows.size());
  for (auto [begin, end] : windows) {
    MelSpectrogram mel = log_mel(cut_window(wav, begin, end), model.mel);
    rows.push_back(assemble_window(mel, model, levels));
  }

  size_t dim = rows.front().size();
  EmbeddingMatrix out;
  out.rows = 1;
  out.dim = dim;
  out.data.resize(dim);
  std::vector<double> column(rows.size());
  for (size_t c = 0; c < dim; ++c) {
    for (size_t w = 0; w < rows.size(); ++w) column[w] = rows[w][c];
    // Exact sum: the mean is bit-identical under any window ordering.
    out.data[c] = static_cast<float>(exact_sum(column) /
                                     static_cast<double>(rows.size()));
  }
  out.descriptor.mode = "scene";
  out.descriptor.levels = levels;
  out.descriptor.window_s = window_s;
  out.descriptor.overlap = overlap;
  out.descriptor.mel_preset = model.mel.preset;
  out.descriptor.dim = dim;
  return out;
}

EmbeddingMatrix timestamp_embeddings(const Waveform& wav,
                                     const PasstModel& model,
                                     const LevelSpec& levels, const RFSpec& rf) {
  levels.validate();
  if (wav.samples.empty())
    throw Error("bounds", "timestamp_embeddings: empty audio");
  if (rf.hop_ms <= 0) throw Error("bounds", "timestamp_embeddings: hop_ms > 0");
  for (int rf_ms : rf.rf_ms) {
    long frames = static_cast<long>(rf_ms) * model.mel.sample_rate / 1000 /
                  model.mel.hop_length;
    if (frames < model.geometry.patch_t)
      throw Error("bounds", "rf " + std::to_string(rf_ms) + " ms yields " +
                                std::to_string(frames) +
                                " mel frames, below the " +
                                std::to_string(model.geometry.patch_t) +
                                "-frame minimum");
  }

  // Timestamps k*hop for k = 0 .. ceil(duration/hop)-1.
  unsigned long long numer =
      static_cast<unsigned long long>(wav.samples.size()) * 1000ull;
  unsigned long long denom =
      static_cast<unsigned long long>(wav.sample_rate) * rf.hop_ms;
  size_t n_stamps = static_cast<size_t>((numer + denom - 1) / denom);
  if (n_stamps == 0) n_stamps = 1;

  // Full-clip mel once for the L level (5 frames centered per timestamp,
  // silence-padded at the edges).
  MelSpectrogram full_mel;
  if (levels.use_l) full_mel = log_mel(wav, model.mel);
  double mel_hop_ms =
      1000.0 * model.mel.hop_length / static_cast<double>(model.mel.sample_rate);
  double silence = std::log(model.mel.log_floor);

  size_t per_rf = level_dim(levels, model.config, model.mel.n_mels, true);
  size_t dim = per_rf * rf.rf_ms.size();

  EmbeddingMatrix out;
  out.rows = n_stamps;
  out.dim = dim;
  out.data.resize(n_stamps * dim);
  out.timestamps_ms.resize(n_stamps);

  for (size_t k = 0; k < n_stamps; ++k) {
    double t_ms = static_cast<double>(k) * rf.hop_ms;
    out.timestamps_ms[k] = t_ms;
    long center = std::lround(t_ms * wav.sample_rate / 1000.0);
    std::vector<double> row;
    row.reserve(dim);
    for (int rf_ms : rf.rf_ms) {
      if (levels.use_l) {
        long mid = std::lround(t_ms / mel_hop_ms);
        for (int df = -kTimestampMelFrames / 2; df <= kTimestampMelFrames / 2;
             ++df) {
          long frame = mid + df;
          for (int m = 0; m < full_mel.n_mels; ++m)
            row.push_back(frame >= 0 && frame < full_mel.n_frames
                              ? full_mel.at(m, static_cast<int>(frame))
                              : silence);
        }
      }
      if (levels.use_m || levels.use_h) {
        auto rf_samples = static_cast<size_t>(
            static_cast<long long>(rf_ms) * wav.sample_rate / 1000);
        Waveform window = cut_centered(wav, center, rf_samples);
        MelSpectrogram mel = log_mel(window, model.mel);
        TokenSequence seq = model.tokenize_mel(mel);
        EncoderOutput enc = encoder_forward(seq, model, RunMode::Eval);
        if (levels.use_m)
          row.insert(row.end(), enc.pooled.data().begin(),
                     enc.pooled.data().end());
        if (levels.use_h)
          row.insert(row.end(), enc.logits.data().begin(),
                     enc.logits.data().end());
      }
    }
    if (row.size() != dim)
      throw Error("state", "timestamp row dim mismatch");
    for (size_t c = 0; c < dim; ++c)
      out.data[k * dim + c] = static_cast<float>(row[c]);
  }

  out.descriptor.mode = "timestamp";
  out.descriptor.levels = levels;
  out.descriptor.rf_ms = rf.rf_ms;
  out.descriptor.hop_ms = rf.hop_ms;
  out.descriptor.mel_preset = model.mel.preset;
  out.descriptor.dim = dim;
  return out;
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

}  // namespace

void save_embeddings(const EmbeddingMatrix& m, const std::string& path) {
  json desc{{"mode", m.descriptor.mode},
            {"levels", levels_to_string(m.descriptor.levels)},
            {"rf_ms", m.descriptor.rf_ms},
            {"hop_ms", m.descriptor.hop_ms},
            {"window_s", m.descriptor.window_s},
            {"overlap", m.descriptor.overlap},
            {"checkpoint_id", m.descriptor.checkpoint_id},
            {"mel_preset", m.descriptor.mel_preset},
            {"rows", m.rows},
            {"dim", m.dim}};
  std::string desc_str = desc.dump();
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("io", "cannot write " + path);
  out.write(kEmbedMagic, 8);
  write_u32le(out, kEmbedVersion);
  write_u64le(out, desc_str.size());
  out.write(desc_str.data(), static_cast<std::streamsize>(desc_str.size()));
  out.write(reinterpret_cast<const char*>(m.data.data()),
            static_cast<std::streamsize>(m.data.size() * sizeof(float)));
  if (m.descriptor.mode == "timestamp")
    out.write(reinterpret_cast<const char*>(m.timestamps_ms.data()),
              static_cast<std::streamsize>(m.timestamps_ms.size() *
                                           sizeof(double)));
  if (!out) throw Error("io", "write failed: " + path);
}

EmbeddingMatrix load_embeddings(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("io", "cannot open " + path);
  char magic[8];
  in.read(magic, 8);
  if (!in || std::memcmp(magic, kEmbedMagic, 8) != 0)
    throw Error("format", path + ": bad embedding magic");
  std::uint32_t version = read_u32le(in);
  if (version != kEmbedVersion)
    throw Error("format", path + ": unsupported embedding version " +
                              std::to_string(version));
  std::uint64_t len = read_u64le(in);
  std::string desc_str(len, '\0');
  in.read(desc_str.data(), static_cast<std::streamsize>(len));
  if (!in) throw Error("format", path + ": truncated descriptor");
  json desc;
  try {
    desc = json::parse(desc_str);
  } catch (const json::exception& e) {
    throw Error("format", path + ": bad descriptor JSON: " + e.what());
  }

  EmbeddingMatrix m;
  m.descriptor.mode = desc.at("mode").get<std::string>();
  m.descriptor.levels = parse_levels(desc.at("levels").get<std::string>());
  m.descriptor.rf_ms = desc.at("rf_ms").get<std::vector<int>>();
  m.descriptor.hop_ms = desc.at("hop_ms").get<int>();
  m.descriptor.window_s = desc.at("window_s").get<double>();
  m.descriptor.overlap = desc.at("overlap").get<double>();
  m.descriptor.checkpoint_id = desc.at("checkpoint_id").get<std::string>();
  m.descriptor.mel_preset = desc.at("mel_preset").get<std::string>();
  m.rows = desc.at("rows").get<size_t>();
  m.dim = desc.at("dim").get<size_t>();
  m.descriptor.dim = m.dim;
  m.data.resize(m.rows * m.dim);
  in.read(reinterpret_cast<char*>(m.data.data()),
          static_cast<std::streamsize>(m.data.size() * sizeof(float)));
  if (m.descriptor.mode == "timestamp") {
    m.timestamps_ms.resize(m.rows);
    in.read(reinterpret_cast<char*>(m.timestamps_ms.data()),
            static_cast<std::streamsize>(m.rows * sizeof(double)));
  }
  if (!in) throw Error("format", path + ": truncated embedding data");
  return m;
}

}  // namespace passt
