#include "passt/audio.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>

namespace passt {

namespace {

std::uint32_t read_u32(const std::uint8_t* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) |
         (static_cast<std::uint32_t>(p[3]) << 24);
}

std::uint16_t read_u16(const std::uint8_t* p) {
  return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}

void write_u32(std::ofstream& out, std::uint32_t v) {
  std::uint8_t b[4] = {static_cast<std::uint8_t>(v), static_cast<std::uint8_t>(v >> 8),
                       static_cast<std::uint8_t>(v >> 16),
                       static_cast<std::uint8_t>(v >> 24)};
  out.write(reinterpret_cast<const char*>(b), 4);
}

void write_u16(std::ofstream& out, std::uint16_t v) {
  std::uint8_t b[2] = {static_cast<std::uint8_t>(v), static_cast<std::uint8_t>(v >> 8)};
  out.write(reinterpret_cast<const char*>(b), 2);
}

}  // namespace

Waveform load_wav(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("io", "cannot open " + path);
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  if (bytes.size() < 44 || std::memcmp(bytes.data(), "RIFF", 4) != 0 ||
      std::memcmp(bytes.data() + 8, "WAVE", 4) != 0)
    throw Error("format", path + ": not a RIFF/WAVE file");

  // Walk chunks for fmt and data.
  size_t pos = 12;
  int channels = 0, sample_rate = 0, bits = 0, audio_format = 0;
  const std::uint8_t* data_ptr = nullptr;
  size_t data_len = 0;
  while (pos + 8 <= bytes.size()) {
    const std::uint8_t* hdr = bytes.data() + pos;
    std::uint32_t chunk_len = read_u32(hdr + 4);
    if (pos + 8 + chunk_len > bytes.size())
      throw Error("format", path + ": truncated chunk");
    if (std::memcmp(hdr, "fmt ", 4) == 0) {
      if (chunk_len < 16) throw Error("format", path + ": short fmt chunk");
      audio_format = read_u16(hdr + 8);
      channels = read_u16(hdr + 10);
      sample_rate = static_cast<int>(read_u32(hdr + 12));
      bits = read_u16(hdr + 22);
    } else if (std::memcmp(hdr, "data", 4) == 0) {
      data_ptr = hdr + 8;
      data_len = chunk_len;
    }
    pos += 8 + chunk_len + (chunk_len & 1);  // chunks are word-aligned
  }
  if (channels == 0 || data_ptr == nullptr)
    throw Error("format", path + ": missing fmt or data chunk");
  if (audio_format != 1 || bits != 16)
    throw Error("format", path + ": only PCM 16-bit supported (format=" +
                              std::to_string(audio_format) + ", bits=" +
                              std::to_string(bits) + ")");
  if (channels != 1 && channels != 2)
    throw Error("format", path + ": only mono or stereo supported");

  size_t frame_bytes = static_cast<size_t>(channels) * 2;
  size_t n_frames = data_len / frame_bytes;
  if (n_frames == 0) throw Error("format", path + ": zero-length audio");

  Waveform wav;
  wav.sample_rate = sample_rate;
  wav.samples.resize(n_frames);
  for (size_t i = 0; i < n_frames; ++i) {
    double acc = 0.0;
    for (int c = 0; c < channels; ++c) {
      std::int16_t s;
      std::memcpy(&s, data_ptr + i * frame_bytes + c * 2, 2);
      acc += static_cast<double>(s);
    }
    wav.samples[i] = acc / channels / 32768.0;
  }
  return wav;
}

void save_wav(const std::string& path, const Waveform& wav) {
  if (wav.sample_rate <= 0) throw Error("bounds", "save_wav: bad sample rate");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("io", "cannot write " + path);
  std::uint32_t data_len = static_cast<std::uint32_t>(wav.samples.size() * 2);
  out.write("RIFF", 4);
  write_u32(out, 36 + data_len);
  out.write("WAVE", 4);
  out.write("fmt ", 4);
  write_u32(out, 16);
  write_u16(out, 1);  // PCM
  write_u16(out, 1);  // mono
  write_u32(out, static_cast<std::uint32_t>(wav.sample_rate));
  write_u32(out, static_cast<std::uint32_t>(wav.sample_rate * 2));
  write_u16(out, 2);
  write_u16(out, 16);
  out.write("data", 4);
  write_u32(out, data_len);
  for (double v : wav.samples) {
    double clamped = std::clamp(v, -1.0, 1.0);
    auto s = static_cast<std::int16_t>(
        std::clamp(std::lround(clamped * 32768.0), -32768l, 32767l));
    out.write(reinterpret_cast<const char*>(&s), 2);
  }
  if (!out) throw Error("io", "write failed: " + path);
}

Waveform resample(const Waveform& wav, int target_rate) {
  if (target_rate <= 0) throw Error("bounds", "resample: target rate must be > 0");
  if (target_rate == wav.sample_rate) return wav;
  size_t n_in = wav.samples.size();
  auto n_out = static_cast<size_t>(std::llround(
      static_cast<double>(n_in) * target_rate / wav.sample_rate));
  Waveform out;
  out.sample_rate = target_rate;
  out.samples.resize(n_out);
  double step = static_cast<double>(wav.sample_rate) / target_rate;
  for (size_t i = 0; i < n_out; ++i) {
    double t = i * step;
    auto i0 = static_cast<size_t>(t);
    if (i0 >= n_in - 1) {
      out.samples[i] = wav.samples[n_in - 1];
      continue;
    }
    double frac = t - static_cast<double>(i0);
    out.samples[i] = wav.samples[i0] * (1.0 - frac) + wav.samples[i0 + 1] * frac;
  }
  return out;
}

}  // namespace passt
