#pragma once

// Mono time-domain audio and RIFF/WAV I/O (PCM16 and IEEE float32).

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace mfaes {

inline constexpr int kDefaultSampleRate = 16000;

struct Waveform {
  std::vector<double> samples;
  int sample_rate = kDefaultSampleRate;

  Waveform() = default;
  Waveform(std::vector<double> s, int rate) : samples(std::move(s)), sample_rate(rate) {}

  std::size_t size() const { return samples.size(); }
  bool empty() const { return samples.empty(); }
  double duration_s() const { return static_cast<double>(samples.size()) / sample_rate; }
};

inline void validate(const Waveform& w) {
  if (w.sample_rate <= 0) throw std::invalid_argument("waveform: sample_rate must be positive");
  for (double v : w.samples)
    if (!std::isfinite(v)) throw std::invalid_argument("waveform: non-finite sample");
}

/// Throws unless `w` is at the rate the pipeline runs at.
inline void require_rate(const Waveform& w, int expected = kDefaultSampleRate) {
  if (w.sample_rate != expected)
    throw std::invalid_argument("expected sample rate " + std::to_string(expected) + " Hz, got " +
                                std::to_string(w.sample_rate) + " Hz");
}

enum class WavEncoding { Pcm16, Float32 };

namespace detail {

inline std::uint32_t read_u32(const unsigned char* p) {
  return std::uint32_t(p[0]) | (std::uint32_t(p[1]) << 8) | (std::uint32_t(p[2]) << 16) |
         (std::uint32_t(p[3]) << 24);
}
inline std::uint16_t read_u16(const unsigned char* p) {
  return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}
inline void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}
inline void put_u16(std::string& out, std::uint16_t v) {
  out.push_back(static_cast<char>(v & 0xff));
  out.push_back(static_cast<char>((v >> 8) & 0xff));
}

}  // namespace detail

inline Waveform read_wav(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("read_wav: cannot open " + path);
  std::vector<unsigned char> buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (buf.size() < 12 || std::memcmp(buf.data(), "RIFF", 4) != 0 || std::memcmp(buf.data() + 8, "WAVE", 4) != 0)
    throw std::runtime_error("read_wav: not a RIFF/WAVE file: " + path);

  std::uint16_t format = 0, channels = 0, bits = 0;
  std::uint32_t rate = 0;
  bool have_fmt = false;
  const unsigned char* data = nullptr;
  std::size_t data_len = 0;

  std::size_t pos = 12;
  while (pos + 8 <= buf.size()) {
    const unsigned char* chunk = buf.data() + pos;
    std::uint32_t len = detail::read_u32(chunk + 4);
    std::size_t body = pos + 8;
    if (body + len > buf.size()) len = static_cast<std::uint32_t>(buf.size() - body);
    if (std::memcmp(chunk, "fmt ", 4) == 0 && len >= 16) {
      format = detail::read_u16(buf.data() + body);
      channels = detail::read_u16(buf.data() + body + 2);
      rate = detail::read_u32(buf.data() + body + 4);
      bits = detail::read_u16(buf.data() + body + 14);
      // WAVE_FORMAT_EXTENSIBLE carries the real format tag in the sub-format GUID.
      if (format == 0xFFFE && len >= 26) format = detail::read_u16(buf.data() + body + 24);
      have_fmt = true;
    } else if (std::memcmp(chunk, "data", 4) == 0) {
      data = buf.data() + body;
      data_len = len;
    }
    pos = body + len + (len & 1u);
  }
  if (!have_fmt || data == nullptr) throw std::runtime_error("read_wav: missing fmt or data chunk: " + path);
  if (channels != 1)
    throw std::runtime_error("read_wav: only mono files are supported (" + std::to_string(channels) +
                             " channels): " + path);

  Waveform w;
  w.sample_rate = static_cast<int>(rate);
  if (format == 1 && bits == 16) {
    std::size_t n = data_len / 2;
    w.samples.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
      auto v = static_cast<std::int16_t>(detail::read_u16(data + 2 * i));
      w.samples[i] = static_cast<double>(v) / 32768.0;
    }
  } else if (format == 3 && bits == 32) {
    std::size_t n = data_len / 4;
    w.samples.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
      std::uint32_t raw = detail::read_u32(data + 4 * i);
      float f;
      std::memcpy(&f, &raw, sizeof f);
      w.samples[i] = static_cast<double>(f);
    }
  } else {
    throw std::runtime_error("read_wav: unsupported encoding (format " + std::to_string(format) + ", " +
                             std::to_string(bits) + " bits): " + path);
  }
  validate(w);
  return w;
}

/// Samples must lie in [-1, 1]; nothing is clipped here.
/// Float32 output is lossless for values that are float-representable.
inline void write_wav(const std::string& path, const Waveform& w, WavEncoding enc = WavEncoding::Float32) {
  validate(w);
  for (double v : w.samples)
    if (v < -1.0 || v > 1.0) throw std::invalid_argument("write_wav: sample out of [-1, 1]; clip before writing");

  const std::uint16_t bits = enc == WavEncoding::Pcm16 ? 16 : 32;
  const std::uint16_t format = enc == WavEncoding::Pcm16 ? 1 : 3;
  const std::uint32_t bytes_per_sample = bits / 8;
  const auto data_len = static_cast<std::uint32_t>(w.samples.size() * bytes_per_sample);

  std::string out;
  out.reserve(44 + data_len);
  out += "RIFF";
  detail::put_u32(out, 36 + data_len);
  out += "WAVE";
  out += "fmt ";
  detail::put_u32(out, 16);
  detail::put_u16(out, format);
  detail::put_u16(out, 1);
  detail::put_u32(out, static_cast<std::uint32_t>(w.sample_rate));
  detail::put_u32(out, static_cast<std::uint32_t>(w.sample_rate) * bytes_per_sample);
  detail::put_u16(out, static_cast<std::uint16_t>(bytes_per_sample));
  detail::put_u16(out, bits);
  out += "data";
  detail::put_u32(out, data_len);
  for (double v : w.samples) {
    if (enc == WavEncoding::Pcm16) {
      long q = std::lround(v * 32768.0);
      q = std::clamp(q, -32768L, 32767L);
      detail::put_u16(out, static_cast<std::uint16_t>(static_cast<std::int16_t>(q)));
    } else {
      float f = static_cast<float>(v);
      std::uint32_t raw;
      std::memcpy(&raw, &f, sizeof raw);
      detail::put_u32(out, raw);
    }
  }

  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw std::runtime_error("write_wav: cannot open for writing: " + path);
  os.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!os) throw std::runtime_error("write_wav: write failed: " + path);
}

}  // namespace mfaes
