#pragma once

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <vector>

#include "cosyn/sequence.hpp"

namespace cosyn {

namespace detail {

inline void put_u32(std::ofstream& f, uint32_t v) { f.write(reinterpret_cast<const char*>(&v), 4); }
inline void put_u16(std::ofstream& f, uint16_t v) { f.write(reinterpret_cast<const char*>(&v), 2); }

}  // namespace detail

// Writes mono 16-bit PCM.
inline void write_wav(const std::filesystem::path& path, const AudioClip& clip) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("write_wav: cannot open " + path.string());
  const uint32_t n = static_cast<uint32_t>(clip.samples.size());
  const uint32_t data_bytes = n * 2;
  f.write("RIFF", 4);
  detail::put_u32(f, 36 + data_bytes);
  f.write("WAVE", 4);
  f.write("fmt ", 4);
  detail::put_u32(f, 16);
  detail::put_u16(f, 1);  // PCM
  detail::put_u16(f, 1);  // mono
  detail::put_u32(f, static_cast<uint32_t>(clip.sample_rate));
  detail::put_u32(f, static_cast<uint32_t>(clip.sample_rate) * 2);
  detail::put_u16(f, 2);
  detail::put_u16(f, 16);
  f.write("data", 4);
  detail::put_u32(f, data_bytes);
  for (double s : clip.samples) {
    const double clamped = std::clamp(s, -1.0, 1.0);
    const int16_t q = static_cast<int16_t>(std::lround(clamped * 32767.0));
    f.write(reinterpret_cast<const char*>(&q), 2);
  }
  if (!f) throw IoError("write_wav: write failed for " + path.string());
}

inline AudioClip read_wav(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("read_wav: cannot open " + path.string());
  char riff[4], wave[4];
  uint32_t riff_size;
  f.read(riff, 4);
  f.read(reinterpret_cast<char*>(&riff_size), 4);
  f.read(wave, 4);
  if (!f || std::memcmp(riff, "RIFF", 4) || std::memcmp(wave, "WAVE", 4))
    throw IoError("read_wav: not a RIFF/WAVE file: " + path.string());

  AudioClip clip;
  uint16_t channels = 1, bits = 16;
  bool have_fmt = false;
  while (f) {
    char id[4];
    uint32_t size;
    f.read(id, 4);
    f.read(reinterpret_cast<char*>(&size), 4);
    if (!f) break;
    if (!std::memcmp(id, "fmt ", 4)) {
      uint16_t format;
      uint32_t rate, byte_rate;
      uint16_t block;
      f.read(reinterpret_cast<char*>(&format), 2);
      f.read(reinterpret_cast<char*>(&channels), 2);
      f.read(reinterpret_cast<char*>(&rate), 4);
      f.read(reinterpret_cast<char*>(&byte_rate), 4);
      f.read(reinterpret_cast<char*>(&block), 2);
      f.read(reinterpret_cast<char*>(&bits), 2);
      if (format != 1 || bits != 16) throw IoError("read_wav: only 16-bit PCM supported");
      clip.sample_rate = static_cast<int>(rate);
      have_fmt = true;
      if (size > 16) f.seekg(size - 16, std::ios::cur);
    } else if (!std::memcmp(id, "data", 4)) {
      const uint32_t count = size / 2;
      clip.samples.resize(count);
      std::vector<int16_t> raw(count);
      f.read(reinterpret_cast<char*>(raw.data()), size);
      for (uint32_t i = 0; i < count; ++i) clip.samples[i] = raw[i] / 32768.0;
      if (channels > 1) {  // average down to mono
        std::vector<double> mono(count / channels);
        for (size_t i = 0; i < mono.size(); ++i) {
          double acc = 0;
          for (int c = 0; c < channels; ++c) acc += clip.samples[i * channels + c];
          mono[i] = acc / channels;
        }
        clip.samples = std::move(mono);
      }
      break;
    } else {
      f.seekg(size + (size & 1), std::ios::cur);
    }
  }
  if (!have_fmt) throw IoError("read_wav: missing fmt chunk in " + path.string());
  return clip;
}

}  // namespace cosyn
