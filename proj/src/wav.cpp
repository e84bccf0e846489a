// SPDX-License-Identifier: Apache-2.0
#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include "lhg/audiofeat.hpp"

namespace lhg {
namespace {

std::uint32_t read_u32(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}
std::uint16_t read_u16(const unsigned char* p) {
  return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}
void put_u32(std::string& s, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) s.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}
void put_u16(std::string& s, std::uint16_t v) {
  s.push_back(static_cast<char>(v & 0xFF));
  s.push_back(static_cast<char>(v >> 8));
}

}  // namespace

void validate(const AudioClip& clip) {
  if (clip.sample_rate < 8000) throw Error("sample rate must be at least 8000 Hz");
  if (!clip.samples.allFinite()) throw Error("audio contains non-finite samples");
}

AudioClip read_wav(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open WAV file: " + path.string());
  const std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                         std::istreambuf_iterator<char>());
  const auto fail = [&](const std::string& why) {
    return Error(path.string() + ": " + why);
  };
  if (bytes.size() < 12 || std::memcmp(bytes.data(), "RIFF", 4) != 0 ||
      std::memcmp(bytes.data() + 8, "WAVE", 4) != 0)
    throw fail("not a RIFF/WAVE file");

  std::uint16_t format = 0, channels = 0, bits = 0;
  std::uint32_t rate = 0;
  const unsigned char* data = nullptr;
  std::size_t data_size = 0;
  std::size_t pos = 12;
  while (pos + 8 <= bytes.size()) {
    const unsigned char* chunk = bytes.data() + pos;
    const std::size_t size = read_u32(chunk + 4);
    const std::size_t body = pos + 8;
    if (body + size > bytes.size()) throw fail("truncated chunk");
    if (std::memcmp(chunk, "fmt ", 4) == 0) {
      if (size < 16) throw fail("short fmt chunk");
      format = read_u16(chunk + 8);
      channels = read_u16(chunk + 10);
      rate = read_u32(chunk + 12);
      bits = read_u16(chunk + 22);
      if (format == 0xFFFE && size >= 26) format = read_u16(chunk + 8 + 24);
    } else if (std::memcmp(chunk, "data", 4) == 0) {
      data = chunk + 8;
      data_size = size;
    }
    pos = body + size + (size & 1);
  }
  if (format == 0 || data == nullptr) throw fail("missing fmt or data chunk");
  if (channels != 1) throw fail("only mono audio is supported (found " +
                                std::to_string(channels) + " channels)");

  AudioClip clip;
  clip.sample_rate = static_cast<int>(rate);
  if (format == 1 && bits == 16) {
    const std::size_t n = data_size / 2;
    clip.samples.resize(static_cast<Eigen::Index>(n));
    for (std::size_t i = 0; i < n; ++i) {
      const auto v = static_cast<std::int16_t>(read_u16(data + 2 * i));
      clip.samples[static_cast<Eigen::Index>(i)] = v / 32768.0;
    }
  } else if (format == 3 && bits == 32) {
    const std::size_t n = data_size / 4;
    clip.samples.resize(static_cast<Eigen::Index>(n));
    for (std::size_t i = 0; i < n; ++i)
      clip.samples[static_cast<Eigen::Index>(i)] = std::bit_cast<float>(read_u32(data + 4 * i));
  } else {
    throw fail("unsupported sample format (need PCM16 or float32)");
  }
  validate(clip);
  return clip;
}

void write_wav(const AudioClip& clip, const std::filesystem::path& path) {
  validate(clip);
  const auto n = static_cast<std::uint32_t>(clip.samples.size());
  std::string s;
  s.reserve(44 + 4 * n);
  s += "RIFF";
  put_u32(s, 36 + 4 * n);
  s += "WAVEfmt ";
  put_u32(s, 16);
  put_u16(s, 3);
  put_u16(s, 1);
  put_u32(s, static_cast<std::uint32_t>(clip.sample_rate));
  put_u32(s, static_cast<std::uint32_t>(clip.sample_rate) * 4);
  put_u16(s, 4);
  put_u16(s, 32);
  s += "data";
  put_u32(s, 4 * n);
  for (Eigen::Index i = 0; i < clip.samples.size(); ++i)
    put_u32(s, std::bit_cast<std::uint32_t>(static_cast<float>(clip.samples[i])));
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write WAV file: " + path.string());
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

}  // namespace lhg
