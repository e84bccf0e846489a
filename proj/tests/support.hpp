// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <unistd.h>

#include "lhg/audiofeat.hpp"
#include "lhg/coeffspace.hpp"

namespace lhg::test {

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static int counter = 0;
    path_ = std::filesystem::temp_directory_path() /
            ("lhg_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

inline std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_file(const std::filesystem::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  out << text;
}

inline AudioClip sine(double freq, double seconds, int sample_rate = 16000, double amp = 0.5) {
  AudioClip clip;
  clip.sample_rate = sample_rate;
  const auto n = static_cast<Eigen::Index>(std::llround(seconds * sample_rate));
  clip.samples.resize(n);
  for (Eigen::Index i = 0; i < n; ++i)
    clip.samples[i] = amp * std::sin(2.0 * M_PI * freq * static_cast<double>(i) / sample_rate);
  return clip;
}

inline CoefficientSequence random_sequence(int frames, std::uint64_t seed, int extra = 0) {
  Rng rng(seed);
  CoefficientSequence seq;
  for (int t = 0; t < frames; ++t) {
    CoefficientFrame f;
    for (int i = 0; i < kExpressionDim; ++i) f.beta[i] = rng.uniform(-1, 1);
    for (int i = 0; i < kPoseDim; ++i) f.pose[i] = rng.uniform(-0.5, 0.5);
    f.extra = Vector(extra);
    for (int i = 0; i < extra; ++i) f.extra[i] = rng.normal();
    seq.frames.push_back(f);
  }
  return seq;
}

}  // namespace lhg::test
