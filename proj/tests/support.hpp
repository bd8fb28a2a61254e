#pragma once

#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <string>
#include <vector>

#include <unistd.h>

#include "asvkit/audio_io.hpp"

namespace testing_support {

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static int counter = 0;
    path_ = std::filesystem::temp_directory_path() /
            ("asvkit_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  std::string str() const { return path_.string(); }
  std::string file(const std::string& name) const { return (path_ / name).string(); }

 private:
  std::filesystem::path path_;
};

inline asv::AudioClip tone(double hz, double seconds, int sr = 16000, double amp = 1.0) {
  asv::AudioClip clip;
  clip.sample_rate = sr;
  const auto n = static_cast<std::size_t>(std::llround(seconds * sr));
  clip.samples.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    clip.samples[i] = amp * std::sin(2.0 * std::numbers::pi * hz * i / sr);
  }
  return clip;
}

inline asv::AudioClip silence(std::size_t n, int sr = 16000) {
  asv::AudioClip clip;
  clip.sample_rate = sr;
  clip.samples.assign(n, 0.0);
  return clip;
}

template <typename T>
void put(std::string& s, T v) {
  char b[sizeof(T)];
  std::memcpy(b, &v, sizeof(T));
  s.append(b, sizeof(T));
}

/// RIFF/WAVE bytes with a plain fmt chunk and the given data payload.
inline std::string wav_bytes(std::uint16_t format, std::uint16_t channels, std::uint32_t rate,
                             std::uint16_t bits, const std::string& data) {
  std::string s = "RIFF";
  put<std::uint32_t>(s, static_cast<std::uint32_t>(36 + data.size()));
  s += "WAVEfmt ";
  put<std::uint32_t>(s, 16);
  put<std::uint16_t>(s, format);
  put<std::uint16_t>(s, channels);
  put<std::uint32_t>(s, rate);
  put<std::uint32_t>(s, rate * channels * bits / 8);
  put<std::uint16_t>(s, static_cast<std::uint16_t>(channels * bits / 8));
  put<std::uint16_t>(s, bits);
  s += "data";
  put<std::uint32_t>(s, static_cast<std::uint32_t>(data.size()));
  s += data;
  return s;
}

inline void write_bytes(const std::string& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

inline std::string read_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace testing_support
