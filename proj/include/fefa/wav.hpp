#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "fefa/dsp.hpp"
#include "fefa/errors.hpp"

namespace fefa {

// Mono 16-bit signed little-endian PCM WAV. Samples map to [-1, 1) via
// division by 32768; the sample rate is recorded as-is.

namespace detail {

inline std::uint32_t read_u32le(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) |
         (static_cast<std::uint32_t>(p[3]) << 24);
}

inline std::uint16_t read_u16le(const unsigned char* p) {
  return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}

inline void put_u32le(std::string& s, std::uint32_t v) {
  s.push_back(static_cast<char>(v & 0xff));
  s.push_back(static_cast<char>((v >> 8) & 0xff));
  s.push_back(static_cast<char>((v >> 16) & 0xff));
  s.push_back(static_cast<char>((v >> 24) & 0xff));
}

inline void put_u16le(std::string& s, std::uint16_t v) {
  s.push_back(static_cast<char>(v & 0xff));
  s.push_back(static_cast<char>((v >> 8) & 0xff));
}

}  // namespace detail

inline Waveform read_wav(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("read_wav: cannot open " + path);
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                   std::istreambuf_iterator<char>());
  if (bytes.size() < 44 || std::memcmp(bytes.data(), "RIFF", 4) != 0 ||
      std::memcmp(bytes.data() + 8, "WAVE", 4) != 0)
    throw InputError("read_wav: not a RIFF/WAVE file: " + path);

  int sample_rate = 0;
  int bits = 0;
  int channels = 0;
  int format = 0;
  const unsigned char* data = nullptr;
  std::size_t data_len = 0;

  std::size_t pos = 12;
  while (pos + 8 <= bytes.size()) {
    const std::uint32_t chunk_size = detail::read_u32le(&bytes[pos + 4]);
    const unsigned char* body = &bytes[pos + 8];
    if (pos + 8 + chunk_size > bytes.size())
      throw InputError("read_wav: truncated chunk in " + path);
    if (std::memcmp(&bytes[pos], "fmt ", 4) == 0) {
      if (chunk_size < 16) throw InputError("read_wav: bad fmt chunk");
      format = detail::read_u16le(body);
      channels = detail::read_u16le(body + 2);
      sample_rate = static_cast<int>(detail::read_u32le(body + 4));
      bits = detail::read_u16le(body + 14);
    } else if (std::memcmp(&bytes[pos], "data", 4) == 0) {
      data = body;
      data_len = chunk_size;
    }
    pos += 8 + chunk_size + (chunk_size & 1);  // chunks are word-aligned
  }

  if (format != 1) throw InputError("read_wav: only PCM supported: " + path);
  if (channels != 1) throw InputError("read_wav: only mono supported: " + path);
  if (bits != 16) throw InputError("read_wav: only 16-bit supported: " + path);
  if (sample_rate <= 0) throw InputError("read_wav: bad sample rate");
  if (data == nullptr || data_len < 2)
    throw InputError("read_wav: missing data chunk: " + path);

  Waveform wave;
  wave.sample_rate_hz = sample_rate;
  wave.samples.resize(data_len / 2);
  for (std::size_t i = 0; i < wave.samples.size(); ++i) {
    const std::int16_t s =
        static_cast<std::int16_t>(detail::read_u16le(data + 2 * i));
    wave.samples[i] = static_cast<double>(s) / 32768.0;
  }
  return wave;
}

inline void write_wav(const std::string& path, const Waveform& wave) {
  const std::size_t n = wave.samples.size();
  std::string out;
  out.reserve(44 + 2 * n);
  out += "RIFF";
  detail::put_u32le(out, static_cast<std::uint32_t>(36 + 2 * n));
  out += "WAVEfmt ";
  detail::put_u32le(out, 16);
  detail::put_u16le(out, 1);  // PCM
  detail::put_u16le(out, 1);  // mono
  detail::put_u32le(out, static_cast<std::uint32_t>(wave.sample_rate_hz));
  detail::put_u32le(out, static_cast<std::uint32_t>(wave.sample_rate_hz * 2));
  detail::put_u16le(out, 2);   // block align
  detail::put_u16le(out, 16);  // bits per sample
  out += "data";
  detail::put_u32le(out, static_cast<std::uint32_t>(2 * n));
  for (std::size_t i = 0; i < n; ++i) {
    double v = wave.samples[i] * 32768.0;
    if (v > 32767.0) v = 32767.0;
    if (v < -32768.0) v = -32768.0;
    detail::put_u16le(out, static_cast<std::uint16_t>(
                               static_cast<std::int16_t>(std::lround(v))));
  }
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("write_wav: cannot open " + path);
  f.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!f) throw std::runtime_error("write_wav: write failed: " + path);
}

}  // namespace fefa
