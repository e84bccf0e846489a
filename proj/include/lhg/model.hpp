// SPDX-License-Identifier: Apache-2.0
//
// The complete listener-head generator: hierarchical encoder, feature fusion,
// cross-modal perceptron and GRU decoder, with a batched training objective
// L = L_dec + lambda * L_con over padded, time-major minibatches.
#pragma once

#include <array>
#include <span>
#include <string>
#include <vector>

#include "lhg/fusion.hpp"
#include "lhg/hiercoder.hpp"
#include "lhg/seqdecoder.hpp"
#include "lhg/synthdata.hpp"

namespace lhg {

struct ModelConfig {
  int n_mfcc = 13;
  std::array<int, 3> encoder_widths{32, 48, 64};
  int d_proj = 64;
  int d_text = 32;
  int d_fused = 128;
  int d_xm = 128;
  int hidden = 32;
  int layers = 6;
  bool use_init = false;
  bool residual = false;

  int n_input() const { return 3 * n_mfcc; }
  EncoderConfig encoder() const;
  FusionConfig fusion() const;
  DecoderConfig decoder() const;
};

void validate(const ModelConfig& config);

struct ModelParams {
  EncoderParams encoder;
  FusionParams fusion;
  CrossModalParams cross_modal;
  DecoderParams decoder;
};

/// All-zero parameters of the configured shape.
ModelParams make_model(const ModelConfig& config);
void init_uniform(ModelParams& params, Rng& rng);

template <typename P, typename F>
  requires std::is_same_v<std::remove_const_t<P>, ModelParams>
void visit_blocks(P& params, F&& f) {
  visit_blocks(params.encoder, "encoder", f);
  visit_blocks(params.fusion, "fusion", f);
  visit_blocks(params.cross_modal, "cross_modal", f);
  visit_blocks(params.decoder, "decoder", f);
}

/// Flat view of one parameter block.
struct BlockView {
  std::string name;
  double* data = nullptr;
  Eigen::Index rows = 0;
  Eigen::Index cols = 0;

  Eigen::Index size() const { return rows * cols; }
};

std::vector<BlockView> block_views(ModelParams& params);
std::size_t parameter_count(const ModelParams& params);

/// Training-set statistics the model is tied to.
struct DataStats {
  Vector feature_mean;     // 3 * n_mfcc
  Vector feature_inv_std;  // 3 * n_mfcc
  Vector listener_mean;    // 70
};

/// One sample in model layout (one frame per column).
struct PreparedSample {
  Matrix features;  // 3 * n_mfcc x T, MFCC stack before normalization
  Matrix text;      // d_text x T
  Matrix speaker;   // 70 x T
  Matrix listener;  // 70 x T, empty when unknown
  Vector init;      // 70, listener reference frame

  int length() const { return static_cast<int>(speaker.cols()); }
};

/// Aligns audio features and text to the speaker coefficient grid. The MFCC
/// frame count may differ from the coefficient count by one frame (rounding
/// of the clip length); larger gaps are rejected.
PreparedSample prepare_sample(const AudioClip& audio, const CoefficientSequence& speaker,
                              const std::vector<std::string>& tokens,
                              const TextEmbeddingProvider& text, int n_mfcc,
                              const CoefficientSequence* listener);

PreparedSample prepare_sample(const DyadicSample& sample, const TextEmbeddingProvider& text,
                              int n_mfcc);

DataStats compute_stats(std::span<const PreparedSample> train);

/// Head bias starts at the train listener mean.
void seed_output_bias(ModelParams& params, const DataStats& stats);

struct ObjectiveOptions {
  LossWeights weights;
  bool squared_norm = false;
  double tau = 0.07;
  int k_negatives = 16;
  double lambda_contrastive = 0.1;
  bool regression = true;   // include L_dec
  bool contrastive = true;  // include L_con
  int max_steps = 64;       // truncation length per sequence
};

struct BatchLoss {
  double total = 0.0;
  double regression = 0.0;   // mean over samples
  double contrastive = 0.0;  // mean over samples of the per-anchor mean
};

/// Loss of a minibatch, averaged over its samples; gradients are accumulated
/// into `grad` when non-null. Negative draws depend only on `negative_seed`.
BatchLoss evaluate_batch(const ModelParams& params, const DataStats& stats,
                         std::span<const PreparedSample* const> batch,
                         const ObjectiveOptions& options, std::uint64_t negative_seed,
                         ModelParams* grad);

/// Listener motion (70 x T) for one sample.
Matrix predict(const ModelParams& params, const DataStats& stats, const PreparedSample& sample);

/// Normalized text features and high-level audio features of one sample,
/// each d_proj x T.
struct AlignedFeatures {
  Matrix text;
  Matrix high;
  Matrix mid;
  Matrix low;
};

AlignedFeatures aligned_features(const ModelParams& params, const DataStats& stats,
                                 const PreparedSample& sample);

}  // namespace lhg
