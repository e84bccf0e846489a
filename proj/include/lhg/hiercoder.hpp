// SPDX-License-Identifier: Apache-2.0
//
// Hierarchical audio encoder and the multi-level contrastive objective that
// aligns high-level audio features with text features.
//
// The encoder is three dilated 1-D convolution stages (kernel 3, dilations
// 1/2/4, zero padded, stride 1 so every stage keeps one output per video
// frame). Each stage is ReLU followed by a frame-level squeeze-excitation
// gate. Stage outputs are tapped as the low/mid/high levels and projected to
// a shared space by a linear head plus L2 normalization; the text embedding
// gets its own head into the same space.
#pragma once

#include <array>
#include <span>
#include <vector>

#include "lhg/audiofeat.hpp"
#include "lhg/layers.hpp"

namespace lhg {

struct EncoderConfig {
  int n_input = 39;  // 3 * n_mfcc
  std::array<int, 3> widths{32, 48, 64};
  std::array<int, 3> dilations{1, 2, 4};
  int se_ratio = 4;
  int d_proj = 64;
  int d_text = 32;
};

inline constexpr int kConvTaps = 3;

struct ConvStage {
  Matrix weight;  // c_out x (3 * c_in); column blocks are taps at -d, 0, +d
  Vector bias;
  SeParams se;
  int dilation = 1;
};

struct EncoderParams {
  std::array<ConvStage, 3> stages;
  std::array<Linear, 3> heads;  // low, mid, high
  Linear text_head;
};

/// All-zero parameters of the configured shape.
EncoderParams make_encoder(const EncoderConfig& config);
void init_uniform(EncoderParams& params, Rng& rng);

/// Half-width, in frames, of the receptive field of stage `s` (0-based).
int receptive_radius(const EncoderParams& params, int stage);

enum class Level { low = 0, mid = 1, high = 2 };

/// Rows are frames.
struct FeaturePyramid {
  Matrix low;
  Matrix mid;
  Matrix high;

  const Matrix& level(Level l) const;
};

FeaturePyramid encode_audio(const AudioFeatureStack& stack, const EncoderParams& params);
/// Same as above for an already assembled [frames x n_input] feature matrix.
FeaturePyramid encode_audio(const Matrix& features, const EncoderParams& params);

// ----- column-layout forward/backward used by training ---------------------

struct PyramidColumns {
  std::array<Matrix, 3> levels;  // each d_proj x N
};

struct EncoderTape {
  std::array<Matrix, 3> inputs;  // stage inputs
  std::array<Matrix, 3> pre;     // conv outputs before ReLU
  std::array<SeTape, 3> se;
  std::array<Matrix, 3> outputs;  // masked stage outputs
  std::array<Matrix, 3> head_pre;
};

PyramidColumns encode_columns(const EncoderParams& params, const Matrix& x,
                              const SeqLayout& layout, const RowMask& mask, EncoderTape* tape);
/// Returns dL/dx.
Matrix encode_columns_backward(const EncoderParams& params, const EncoderTape& tape,
                               const SeqLayout& layout, const RowMask& mask,
                               const PyramidColumns& d_levels, EncoderParams& grad);

Matrix dilated_im2col(const Matrix& x, const SeqLayout& layout, int dilation);
Matrix dilated_col2im(const Matrix& cols, const SeqLayout& layout, int dilation,
                      Eigen::Index channels);

// ----- contrastive objective -----------------------------------------------

/// a.b / (|a||b|); throws on a zero-norm input.
double cosine_similarity(const Vector& a, const Vector& b);

/// Cosine similarity that evaluates to 0 (with zero gradient) when either
/// input has zero norm. Used inside the loss so an all-zero model stays
/// well defined.
double safe_cosine(const Vector& a, const Vector& b);
/// Gradients of safe_cosine with respect to a and b.
void safe_cosine_grad(const Vector& a, const Vector& b, Vector& da, Vector& db);

struct FeatureRef {
  int sample = 0;
  int t = 0;
  Level level = Level::high;

  bool operator==(const FeatureRef&) const = default;
};

/// Draws k pool members without replacement: high-level features at every
/// position except the anchor plus low/mid features at every position
/// (the anchor's own included). `lengths[s]` is the valid frame count of
/// sample s. Deterministic in `seed`.
std::vector<FeatureRef> sample_negative_refs(std::span<const int> lengths, int anchor_sample,
                                             int anchor_t, int k, std::uint64_t seed);

std::vector<Vector> sample_negatives(std::span<const FeaturePyramid> batch, int anchor_sample,
                                     int anchor_t, int k, std::uint64_t seed);

/// -log( exp(sim(text, pool[positive]) / tau) / sum_j exp(sim(text, pool[j]) / tau) ).
double contrastive_loss(const Vector& text, std::span<const Vector> pool, std::size_t positive,
                        double tau);

struct ContrastiveGrad {
  double loss = 0.0;
  Vector d_text;
  std::vector<Vector> d_pool;
};

ContrastiveGrad contrastive_loss_grad(const Vector& text, std::span<const Vector> pool,
                                      std::size_t positive, double tau);

template <typename P, typename F>
  requires std::is_same_v<std::remove_const_t<P>, EncoderParams>
void visit_blocks(P& params, const std::string& prefix, F&& f) {
  for (std::size_t s = 0; s < 3; ++s) {
    const std::string name = prefix + ".stage" + std::to_string(s);
    f(name + ".weight", params.stages[s].weight);
    f(name + ".bias", params.stages[s].bias);
    visit_blocks(params.stages[s].se, name + ".se", f);
  }
  static constexpr const char* kHeadNames[3] = {"low", "mid", "high"};
  for (std::size_t s = 0; s < 3; ++s)
    visit_blocks(params.heads[s], prefix + ".head_" + kHeadNames[s], f);
  visit_blocks(params.text_head, prefix + ".text_head", f);
}

}  // namespace lhg
