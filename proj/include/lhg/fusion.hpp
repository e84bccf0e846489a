// SPDX-License-Identifier: Apache-2.0
//
// Audio feature fusion (five streams -> channel attention -> linear) and the
// cross-modal perceptron that joins speaker coefficients with fused audio.
#pragma once

#include "lhg/coeffspace.hpp"
#include "lhg/layers.hpp"

namespace lhg {

struct FusionConfig {
  int d_proj = 64;
  int d_text = 32;
  int d_mfcc = 39;
  int d_fused = 128;
  int se_ratio = 4;
  int d_xm = 128;

  int d_concat() const { return 3 * d_proj + d_text + d_mfcc; }
};

struct FusionParams {
  SeParams se;
  Linear out;
};

struct CrossModalParams {
  Linear hidden;  // (70 + d_fused) -> d_xm, tanh
  Linear out;     // d_xm -> d_xm
};

FusionParams make_fusion(const FusionConfig& config);
CrossModalParams make_cross_modal(const FusionConfig& config);
void init_uniform(FusionParams& params, Rng& rng);
void init_uniform(CrossModalParams& params, Rng& rng);

/// Gates each channel by sigmoid(E relu(S x)); |out_i| <= |in_i|.
Vector se_gate(const Vector& channels, const SeParams& gate);

/// Concatenates [high, mid, low, s_t, m_t], gates channels, maps to d_fused.
Vector fuse_audio(const Vector& high, const Vector& mid, const Vector& low, const Vector& s_t,
                  const Vector& m_t, const FusionParams& params);

Vector fuse_cross_modal(const ExpressionVector& beta, const PoseVector& pose,
                        const Vector& audio, const CrossModalParams& params);

// ----- column-layout forward/backward --------------------------------------

struct FusionTape {
  Matrix concat;
  SeTape se;
  Matrix gated;
};

/// `concat` is the (d_concat x N) stack [high; mid; low; s; m].
Matrix fuse_audio_columns(const FusionParams& params, const Matrix& concat, FusionTape* tape);
Matrix fuse_audio_columns_backward(const FusionParams& params, const FusionTape& tape,
                                   const Matrix& dy, FusionParams& grad);

struct CrossModalTape {
  Matrix input;
  Matrix hidden;  // tanh output
};

/// `input` is (70 + d_fused) x N: [speaker motion; fused audio].
Matrix fuse_cross_modal_columns(const CrossModalParams& params, const Matrix& input,
                                CrossModalTape* tape);
Matrix fuse_cross_modal_columns_backward(const CrossModalParams& params,
                                         const CrossModalTape& tape, const Matrix& dy,
                                         CrossModalParams& grad);

template <typename P, typename F>
  requires std::is_same_v<std::remove_const_t<P>, FusionParams>
void visit_blocks(P& params, const std::string& prefix, F&& f) {
  visit_blocks(params.se, prefix + ".se", f);
  visit_blocks(params.out, prefix + ".out", f);
}

template <typename P, typename F>
  requires std::is_same_v<std::remove_const_t<P>, CrossModalParams>
void visit_blocks(P& params, const std::string& prefix, F&& f) {
  visit_blocks(params.hidden, prefix + ".hidden", f);
  visit_blocks(params.out, prefix + ".out", f);
}

}  // namespace lhg
