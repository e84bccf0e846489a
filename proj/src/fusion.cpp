// SPDX-License-Identifier: Apache-2.0
#include "lhg/fusion.hpp"

namespace lhg {

FusionParams make_fusion(const FusionConfig& config) {
  return {make_se(config.d_concat(), config.se_ratio),
          make_linear(config.d_concat(), config.d_fused)};
}

CrossModalParams make_cross_modal(const FusionConfig& config) {
  return {make_linear(kMotionDim + config.d_fused, config.d_xm),
          make_linear(config.d_xm, config.d_xm)};
}

void init_uniform(FusionParams& params, Rng& rng) {
  init_uniform(params.se, rng);
  init_uniform(params.out, rng);
}

void init_uniform(CrossModalParams& params, Rng& rng) {
  init_uniform(params.hidden, rng);
  init_uniform(params.out, rng);
}

Vector se_gate(const Vector& channels, const SeParams& gate) {
  if (channels.size() != gate.squeeze.in())
    throw Error("se_gate: input has " + std::to_string(channels.size()) + " channels, gate expects " +
                std::to_string(gate.squeeze.in()));
  return se_forward(gate, channels, nullptr);
}

Matrix fuse_audio_columns(const FusionParams& params, const Matrix& concat, FusionTape* tape) {
  if (concat.rows() != params.se.squeeze.in())
    throw Error("fuse_audio: concatenated width " + std::to_string(concat.rows()) +
                " does not match the configured " + std::to_string(params.se.squeeze.in()));
  SeTape se_tape;
  Matrix gated = se_forward(params.se, concat, tape ? &se_tape : nullptr);
  Matrix y = apply(params.out, gated);
  if (tape) {
    tape->concat = concat;
    tape->se = std::move(se_tape);
    tape->gated = std::move(gated);
  }
  return y;
}

Matrix fuse_audio_columns_backward(const FusionParams& params, const FusionTape& tape,
                                   const Matrix& dy, FusionParams& grad) {
  Matrix d_gated;
  apply_backward(params.out, tape.gated, dy, grad.out, &d_gated);
  return se_backward(params.se, tape.se, d_gated, grad.se);
}

Vector fuse_audio(const Vector& high, const Vector& mid, const Vector& low, const Vector& s_t,
                  const Vector& m_t, const FusionParams& params) {
  Vector concat(high.size() + mid.size() + low.size() + s_t.size() + m_t.size());
  concat << high, mid, low, s_t, m_t;
  return fuse_audio_columns(params, concat, nullptr);
}

Matrix fuse_cross_modal_columns(const CrossModalParams& params, const Matrix& input,
                                CrossModalTape* tape) {
  if (input.rows() != params.hidden.in())
    throw Error("fuse_cross_modal: input width " + std::to_string(input.rows()) +
                " does not match the configured " + std::to_string(params.hidden.in()));
  Matrix hidden = apply(params.hidden, input).array().tanh().matrix();
  Matrix y = apply(params.out, hidden);
  if (tape) {
    tape->input = input;
    tape->hidden = std::move(hidden);
  }
  return y;
}

Matrix fuse_cross_modal_columns_backward(const CrossModalParams& params,
                                         const CrossModalTape& tape, const Matrix& dy,
                                         CrossModalParams& grad) {
  Matrix d_hidden;
  apply_backward(params.out, tape.hidden, dy, grad.out, &d_hidden);
  const Matrix d_pre = d_hidden.cwiseProduct((1.0 - tape.hidden.array().square()).matrix());
  Matrix dx;
  apply_backward(params.hidden, tape.input, d_pre, grad.hidden, &dx);
  return dx;
}

Vector fuse_cross_modal(const ExpressionVector& beta, const PoseVector& pose,
                        const Vector& audio, const CrossModalParams& params) {
  Vector input(kMotionDim + audio.size());
  input << beta, pose, audio;
  return fuse_cross_modal_columns(params, input, nullptr);
}

}  // namespace lhg
