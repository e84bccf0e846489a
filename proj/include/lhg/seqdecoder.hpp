// SPDX-License-Identifier: Apache-2.0
//
// Stacked bidirectional GRU decoder from cross-modal embeddings to listener
// expression/pose coefficients, and the motion-constrained regression loss.
#pragma once

#include <optional>
#include <vector>

#include "lhg/coeffspace.hpp"
#include "lhg/layers.hpp"

namespace lhg {

/// Gate rows are stacked [update z; reset r; candidate n], each `hidden` tall.
struct GruCellParams {
  Matrix w_x;  // 3h x in
  Matrix w_h;  // 3h x h
  Vector bias;  // 3h

  Eigen::Index hidden() const { return w_h.cols(); }
};

struct GruLayerParams {
  GruCellParams forward;
  GruCellParams backward;
};

struct DecoderConfig {
  int d_input = 128;
  int hidden = 32;
  int layers = 6;
  bool use_init = false;   // condition layer-1 initial states on the listener's first frame
  bool residual = false;   // predict offsets from the listener's first frame
};

struct DecoderParams {
  std::vector<GruLayerParams> layers;
  Linear head;       // 2h -> 70
  Linear init_proj;  // 70 -> 2h, empty unless use_init
  bool residual = false;
};

GruCellParams make_gru_cell(Eigen::Index in, Eigen::Index hidden);
DecoderParams make_decoder(const DecoderConfig& config);
void init_uniform(DecoderParams& params, Rng& rng);

/// z = s(Wz x + Uz h + bz), r = s(Wr x + Ur h + br),
/// n = tanh(Wn x + Un (r * h) + bn), h' = (1 - z) * h + z * n.
Vector gru_cell(const Vector& x, const Vector& h_prev, const GruCellParams& cell);

/// Decodes a single sequence of embeddings (one column per frame).
/// `init` is the listener's reference frame; required when the decoder was
/// built with use_init or residual.
CoefficientSequence decode_sequence(const Matrix& xm, const DecoderParams& params,
                                    const std::optional<CoefficientFrame>& init = std::nullopt,
                                    double fps = kDefaultFps);

// ----- batched forward/backward --------------------------------------------

struct GruDirectionTape {
  Matrix h_prev;  // h x N: state entering each step
  Matrix gates;   // 3h x N: z, r, n after nonlinearity
};

struct DecoderTape {
  std::vector<Matrix> layer_inputs;  // per layer, d_in x N
  std::vector<GruDirectionTape> fwd;
  std::vector<GruDirectionTape> bwd;
  Matrix top;       // 2h x N
  Matrix init;      // 70 x B
  Matrix init_pre;  // 2h x B
};

/// x is d_input x (steps * batch), time-major. `init` (70 x batch) is only
/// read when the decoder uses it. Returns 70 x N predictions; columns past a
/// sequence's length hold unspecified values.
Matrix decode_columns(const DecoderParams& params, const Matrix& x, const SeqLayout& layout,
                      const std::vector<int>& lengths, const Matrix& init, DecoderTape* tape);

/// Returns dL/dx.
Matrix decode_columns_backward(const DecoderParams& params, const DecoderTape& tape,
                               const SeqLayout& layout, const std::vector<int>& lengths,
                               const Matrix& d_out, DecoderParams& grad);

// ----- loss ----------------------------------------------------------------

struct LossWeights {
  double w1 = 1.0;
  double w2 = 1.0;
};

/// sum_{t=2..T} |b_t - b^_t| + |p_t - p^_t|
///   + w1 sum |D b_t - D b^_t| + w2 sum |D p_t - D p^_t|, with D the first
/// difference. `squared` switches every norm to its square.
double regression_loss(const CoefficientSequence& pred, const CoefficientSequence& gt,
                       const LossWeights& w, bool squared = false);

/// Loss of one 70 x T pair restricted to the first `length` columns; adds
/// dL/dpred into `d_pred` when non-null.
double regression_loss_columns(const Eigen::Ref<const Matrix>& pred,
                               const Eigen::Ref<const Matrix>& gt, int length,
                               const LossWeights& w, bool squared, Matrix* d_pred);

template <typename P, typename F>
  requires std::is_same_v<std::remove_const_t<P>, DecoderParams>
void visit_blocks(P& params, const std::string& prefix, F&& f) {
  for (std::size_t l = 0; l < params.layers.size(); ++l) {
    for (int dir = 0; dir < 2; ++dir) {
      auto& cell = dir == 0 ? params.layers[l].forward : params.layers[l].backward;
      const std::string name =
          prefix + ".layer" + std::to_string(l) + (dir == 0 ? ".fwd" : ".bwd");
      f(name + ".w_x", cell.w_x);
      f(name + ".w_h", cell.w_h);
      f(name + ".bias", cell.bias);
    }
  }
  visit_blocks(params.head, prefix + ".head", f);
  if (params.init_proj.weight.size() > 0) visit_blocks(params.init_proj, prefix + ".init_proj", f);
}

}  // namespace lhg
