// SPDX-License-Identifier: Apache-2.0
//
// Speaker audio front end: per-video-frame MFCC/delta/delta-delta stacks and
// pluggable text-embedding streams aligned to the same frame grid.
#pragma once

#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include "lhg/common.hpp"

namespace lhg {

struct AudioClip {
  Vector samples;  // mono, [-1, 1]
  int sample_rate = 16000;

  double duration() const { return static_cast<double>(samples.size()) / sample_rate; }
};

void validate(const AudioClip& clip);

/// Reads a mono RIFF WAV (PCM 16-bit or IEEE float 32-bit).
AudioClip read_wav(const std::filesystem::path& path);
/// Writes 32-bit float mono WAV.
void write_wav(const AudioClip& clip, const std::filesystem::path& path);

/// Number of whole video frames covered by `duration` seconds.
int video_frame_count(double duration, double fps);

/// Per-video-frame sample windows. Window t is centered on (t + 0.5) / fps,
/// has (1 + 2 * context_frames) * round(sample_rate / fps) samples and is
/// zero padded outside the clip.
std::vector<Vector> frame_audio(const AudioClip& clip, double fps, int context_frames);

struct MfccOptions {
  int n_mfcc = 13;
  int n_mels = 26;
  double window_seconds = 0.025;
  double preemphasis = 0.97;
  int delta_radius = 2;
};

/// Rows are video frames.
struct AudioFeatureStack {
  Matrix mfcc;
  Matrix delta;
  Matrix delta2;
  double fps = 30.0;

  Eigen::Index frames() const { return mfcc.rows(); }
  /// [mfcc | delta | delta2] per row.
  Matrix concatenated() const;
};

AudioFeatureStack mfcc_stack(const AudioClip& clip, double fps, int n_mfcc);
AudioFeatureStack mfcc_stack(const AudioClip& clip, double fps, const MfccOptions& options);

/// Regression delta over +-radius rows with edge replication.
Matrix regression_delta(const Matrix& rows, int radius);

/// Orthonormal DCT-II of each row of `log_energies`, keeping `n_keep` terms.
Matrix dct2_orthonormal(const Matrix& log_energies, int n_keep);

/// HTK-style triangular mel filterbank, n_mels x (n_fft / 2 + 1).
Matrix mel_filterbank(int n_mels, int n_fft, int sample_rate, double f_low, double f_high);

// ---------------------------------------------------------------------------
// Text semantics

struct TextEmbeddingStream {
  Matrix vectors;  // frames x d_text
  std::string provider_id;
};

class TextEmbeddingProvider {
 public:
  virtual ~TextEmbeddingProvider() = default;
  virtual std::string id() const = 0;
  virtual int dim() const = 0;
  /// Returns an [n_frames x dim] matrix for tokens spread over the frames.
  virtual Matrix embed(const std::vector<std::string>& tokens, int n_frames) const = 0;
};

/// Hash-seeded unit vectors per token; deterministic and dependency free.
class StubTextProvider final : public TextEmbeddingProvider {
 public:
  explicit StubTextProvider(int dim, std::uint64_t seed = 0) : dim_(dim), seed_(seed) {}
  std::string id() const override { return "stub"; }
  int dim() const override { return dim_; }
  Matrix embed(const std::vector<std::string>& tokens, int n_frames) const override;
  Vector token_vector(const std::string& token) const;

 private:
  int dim_;
  std::uint64_t seed_;
};

/// Reads a precomputed [T x d] CSV; tokens are ignored.
class FileTextProvider final : public TextEmbeddingProvider {
 public:
  explicit FileTextProvider(std::filesystem::path path);
  std::string id() const override { return "file:" + path_.string(); }
  int dim() const override { return static_cast<int>(table_.cols()); }
  Matrix embed(const std::vector<std::string>& tokens, int n_frames) const override;

 private:
  std::filesystem::path path_;
  Matrix table_;
};

/// Builds a provider from `stub` or `file:<path>`; anything else throws.
std::unique_ptr<TextEmbeddingProvider> make_text_provider(const std::string& spec, int d_text);

TextEmbeddingStream embed_text(const std::vector<std::string>& tokens,
                               const TextEmbeddingProvider& provider, int n_frames);

/// Token i of n covers frames [floor(i*T/n), floor((i+1)*T/n)).
std::pair<int, int> token_frame_span(int token_index, int n_tokens, int n_frames);

std::vector<std::string> read_transcript(const std::filesystem::path& path);
std::vector<std::string> tokenize(const std::string& text);

/// Reads a numeric CSV without header into a matrix (rows x cols).
Matrix read_matrix_csv(const std::filesystem::path& path);

}  // namespace lhg
