// SPDX-License-Identifier: Apache-2.0
//
// Synthetic speaker/listener dyads with a known audio-to-motion coupling.
//
// The speaker "talks" in tone bursts: the clip is split into equal token
// segments (the same uniform spreading the text front end uses), each holding
// one band-limited burst whose pitch class is the token's identity. Listener
// pitch nods follow the smoothed burst envelope and a block of listener
// expression coefficients mirrors the speaker's, both after a reaction lag.
#pragma once

#include <array>
#include <filesystem>
#include <string>
#include <vector>

#include "lhg/audiofeat.hpp"
#include "lhg/coeffspace.hpp"

namespace lhg {

struct DyadConfig {
  std::uint64_t seed = 0;
  double duration_s = 64.0 / 30.0;
  double fps = 30.0;
  int sample_rate = 16000;
  double coupling_nod = 0.9;
  double coupling_expr = 0.9;
  int lag_frames = 3;
  double noise_sigma = 0.05;
};

void validate(const DyadConfig& cfg);

/// Listener expression dimensions that mirror the speaker.
inline constexpr int kMirroredExpressionDims = 16;
/// Frames per token segment the generator aims for.
inline constexpr int kFramesPerToken = 8;
/// Moving-average width applied to the energy envelope.
inline constexpr int kEnvelopeSmoothing = 5;

const std::vector<std::string>& synth_vocabulary();

struct DyadicSample {
  AudioClip speaker_audio;
  CoefficientSequence speaker_coeffs;
  CoefficientSequence listener_coeffs;
  std::vector<std::string> transcript_tokens;
  Vector energy;  // per-frame burst envelope E_t
};

DyadicSample generate_dyad(const DyadConfig& cfg);

/// Centered moving average with edge replication.
Vector moving_average(const Vector& x, int width);

double pearson(const Vector& a, const Vector& b);

struct DatasetSplit {
  std::vector<DyadicSample> train;
  std::vector<DyadicSample> val;
  std::vector<DyadicSample> test;
};

/// Split sizes: val and test are rounded, train takes the remainder.
std::array<int, 3> split_sizes(int n, const std::array<double, 3>& fractions);

/// Sample i uses seed base + i; the first sizes[0] samples form train, etc.
DatasetSplit generate_dataset(const DyadConfig& base, int n, const std::array<double, 3>& fractions);

// ----- on-disk layout --------------------------------------------------------

struct ManifestEntry {
  std::string split;  // train | val | test
  std::filesystem::path dir;
};

/// Writes audio.wav, speaker.csv, listener.csv and transcript.txt.
void write_sample(const DyadicSample& sample, const std::filesystem::path& dir);
DyadicSample read_sample(const std::filesystem::path& dir);

void write_manifest(const std::vector<ManifestEntry>& entries, const std::filesystem::path& path);
/// Entry directories are resolved relative to the manifest's directory.
std::vector<ManifestEntry> read_manifest(const std::filesystem::path& path);

}  // namespace lhg
