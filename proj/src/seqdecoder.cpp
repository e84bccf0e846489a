// SPDX-License-Identifier: Apache-2.0
#include "lhg/seqdecoder.hpp"

namespace lhg {
namespace {

bool step_fully_valid(int t, const std::vector<int>& lengths) {
  for (int len : lengths)
    if (t >= len) return false;
  return true;
}

Matrix run_direction(const GruCellParams& cell, const Matrix& gx, const SeqLayout& layout,
                     const std::vector<int>& lengths, bool reverse, const Matrix& h0,
                     GruDirectionTape* tape) {
  const Eigen::Index h = cell.hidden();
  const Eigen::Index b = layout.batch;
  Matrix out(h, layout.columns());
  if (tape) {
    tape->h_prev.resize(h, layout.columns());
    tape->gates.resize(3 * h, layout.columns());
  }
  Matrix state = h0;
  Matrix zr(2 * h, b), cand(h, b);
  for (int i = 0; i < layout.steps; ++i) {
    const int t = reverse ? layout.steps - 1 - i : i;
    const Eigen::Index c0 = static_cast<Eigen::Index>(t) * b;
    zr.noalias() = cell.w_h.topRows(2 * h) * state;
    zr += gx.block(0, c0, 2 * h, b);
    zr = zr.unaryExpr([](double v) { return sigmoid(v); });
    const Matrix reset_state = zr.bottomRows(h).cwiseProduct(state);
    cand.noalias() = cell.w_h.bottomRows(h) * reset_state;
    cand = (cand + gx.block(2 * h, c0, h, b)).array().tanh().matrix();
    if (tape) {
      tape->h_prev.block(0, c0, h, b) = state;
      tape->gates.block(0, c0, 2 * h, b) = zr;
      tape->gates.block(2 * h, c0, h, b) = cand;
    }
    Matrix next = state + zr.topRows(h).cwiseProduct(cand - state);
    if (!step_fully_valid(t, lengths)) {
      for (Eigen::Index col = 0; col < b; ++col)
        if (t >= lengths[static_cast<std::size_t>(col)]) next.col(col) = state.col(col);
    }
    state = std::move(next);
    out.block(0, c0, h, b) = state;
  }
  return out;
}

/// Backpropagates one direction. Accumulates cell gradients except w_x,
/// returns dL/d(gate pre-activations from x) and writes dL/dh0.
Matrix backprop_direction(const GruCellParams& cell, const GruDirectionTape& tape,
                          const SeqLayout& layout, const std::vector<int>& lengths, bool reverse,
                          const Matrix& d_out, GruCellParams& grad, Matrix& d_h0) {
  const Eigen::Index h = cell.hidden();
  const Eigen::Index b = layout.batch;
  Matrix d_gx = Matrix::Zero(3 * h, layout.columns());
  Matrix carry = Matrix::Zero(h, b);
  Matrix d_pre_zr(2 * h, b);
  for (int i = layout.steps - 1; i >= 0; --i) {
    const int t = reverse ? layout.steps - 1 - i : i;
    const Eigen::Index c0 = static_cast<Eigen::Index>(t) * b;
    const Matrix dh = carry + d_out.block(0, c0, h, b);
    const auto z = tape.gates.block(0, c0, h, b);
    const auto r = tape.gates.block(h, c0, h, b);
    const auto n = tape.gates.block(2 * h, c0, h, b);
    const auto h_prev = tape.h_prev.block(0, c0, h, b);

    Matrix d_n_pre = dh.cwiseProduct(z).cwiseProduct((1.0 - n.array().square()).matrix());
    const Matrix d_reset_state_raw = cell.w_h.bottomRows(h).transpose() * d_n_pre;
    d_pre_zr.topRows(h) = dh.cwiseProduct(n - h_prev).cwiseProduct(
        z.cwiseProduct((1.0 - z.array()).matrix()));
    d_pre_zr.bottomRows(h) = d_reset_state_raw.cwiseProduct(h_prev).cwiseProduct(
        r.cwiseProduct((1.0 - r.array()).matrix()));

    const bool all_valid = step_fully_valid(t, lengths);
    if (!all_valid) {
      for (Eigen::Index col = 0; col < b; ++col) {
        if (t >= lengths[static_cast<std::size_t>(col)]) {
          d_n_pre.col(col).setZero();
          d_pre_zr.col(col).setZero();
        }
      }
    }
    const Matrix d_reset_state = cell.w_h.bottomRows(h).transpose() * d_n_pre;
    const Matrix reset_state = r.cwiseProduct(h_prev);

    d_gx.block(0, c0, 2 * h, b) = d_pre_zr;
    d_gx.block(2 * h, c0, h, b) = d_n_pre;
    grad.w_h.topRows(2 * h).noalias() += d_pre_zr * h_prev.transpose();
    grad.w_h.bottomRows(h).noalias() += d_n_pre * reset_state.transpose();

    Matrix d_prev = dh.cwiseProduct((1.0 - z.array()).matrix()) + d_reset_state.cwiseProduct(r);
    d_prev.noalias() += cell.w_h.topRows(2 * h).transpose() * d_pre_zr;
    if (!all_valid) {
      for (Eigen::Index col = 0; col < b; ++col)
        if (t >= lengths[static_cast<std::size_t>(col)]) d_prev.col(col) = dh.col(col);
    }
    carry = std::move(d_prev);
  }
  grad.bias += d_gx.rowwise().sum();
  d_h0 = std::move(carry);
  return d_gx;
}

}  // namespace

GruCellParams make_gru_cell(Eigen::Index in, Eigen::Index hidden) {
  return {Matrix::Zero(3 * hidden, in), Matrix::Zero(3 * hidden, hidden), Vector::Zero(3 * hidden)};
}

DecoderParams make_decoder(const DecoderConfig& config) {
  if (config.layers < 1) throw Error("decoder needs at least one layer");
  DecoderParams p;
  Eigen::Index in = config.d_input;
  for (int l = 0; l < config.layers; ++l) {
    p.layers.push_back({make_gru_cell(in, config.hidden), make_gru_cell(in, config.hidden)});
    in = 2 * config.hidden;
  }
  p.head = make_linear(2 * config.hidden, kMotionDim);
  if (config.use_init) p.init_proj = make_linear(kMotionDim, 2 * config.hidden);
  p.residual = config.residual;
  return p;
}

void init_uniform(DecoderParams& params, Rng& rng) {
  for (auto& layer : params.layers) {
    for (auto* cell : {&layer.forward, &layer.backward}) {
      const double h = static_cast<double>(cell->hidden());
      init_uniform(cell->w_x, rng, static_cast<double>(cell->w_x.cols()), h);
      init_uniform(cell->w_h, rng, h, h);
    }
  }
  init_uniform(params.head, rng);
  if (params.init_proj.weight.size() > 0) init_uniform(params.init_proj, rng);
}

Vector gru_cell(const Vector& x, const Vector& h_prev, const GruCellParams& cell) {
  const Eigen::Index h = cell.hidden();
  if (x.size() != cell.w_x.cols() || h_prev.size() != h)
    throw Error("gru_cell: shape mismatch");
  const Vector gx = cell.w_x * x + cell.bias;
  const Vector zr = (gx.head(2 * h) + cell.w_h.topRows(2 * h) * h_prev)
                        .unaryExpr([](double v) { return sigmoid(v); });
  const Vector z = zr.head(h);
  const Vector r = zr.tail(h);
  const Vector n = (gx.tail(h) + cell.w_h.bottomRows(h) * r.cwiseProduct(h_prev)).array().tanh().matrix();
  return (1.0 - z.array()).matrix().cwiseProduct(h_prev) + z.cwiseProduct(n);
}

Matrix decode_columns(const DecoderParams& params, const Matrix& x, const SeqLayout& layout,
                      const std::vector<int>& lengths, const Matrix& init, DecoderTape* tape) {
  if (layout.steps < 1 || x.cols() != layout.columns())
    throw Error("decode: input does not match its layout");
  if (x.rows() != params.layers.front().forward.w_x.cols())
    throw Error("decode: expected embedding width " +
                std::to_string(params.layers.front().forward.w_x.cols()) + ", got " +
                std::to_string(x.rows()));
  const bool use_init = params.init_proj.weight.size() > 0;
  if ((use_init || params.residual) && (init.rows() != kMotionDim || init.cols() != layout.batch))
    throw Error("decode: listener initial frame required by this decoder");

  const Eigen::Index h = params.layers.front().forward.hidden();
  const Eigen::Index b = layout.batch;
  Matrix h0_fwd = Matrix::Zero(h, b), h0_bwd = Matrix::Zero(h, b);
  if (tape) {
    tape->layer_inputs.clear();
    tape->fwd.assign(params.layers.size(), {});
    tape->bwd.assign(params.layers.size(), {});
  }
  if (use_init) {
    Matrix pre = apply(params.init_proj, init);
    const Matrix states = pre.array().tanh().matrix();
    h0_fwd = states.topRows(h);
    h0_bwd = states.bottomRows(h);
    if (tape) {
      tape->init = init;
      tape->init_pre = std::move(pre);
    }
  }

  Matrix input = x;
  for (std::size_t l = 0; l < params.layers.size(); ++l) {
    const auto& layer = params.layers[l];
    const Matrix gx_f = (layer.forward.w_x * input).colwise() + layer.forward.bias;
    const Matrix gx_b = (layer.backward.w_x * input).colwise() + layer.backward.bias;
    const bool first = l == 0;
    const Matrix zeros = Matrix::Zero(h, b);
    Matrix out(2 * h, layout.columns());
    out.topRows(h) = run_direction(layer.forward, gx_f, layout, lengths, false,
                                   first ? h0_fwd : zeros, tape ? &tape->fwd[l] : nullptr);
    out.bottomRows(h) = run_direction(layer.backward, gx_b, layout, lengths, true,
                                      first ? h0_bwd : zeros, tape ? &tape->bwd[l] : nullptr);
    if (tape) tape->layer_inputs.push_back(std::move(input));
    input = std::move(out);
  }
  Matrix y = apply(params.head, input);
  if (params.residual) {
    for (int t = 0; t < layout.steps; ++t) y.block(0, t * b, kMotionDim, b) += init;
  }
  if (tape) tape->top = std::move(input);
  return y;
}

Matrix decode_columns_backward(const DecoderParams& params, const DecoderTape& tape,
                               const SeqLayout& layout, const std::vector<int>& lengths,
                               const Matrix& d_out, DecoderParams& grad) {
  const Eigen::Index h = params.layers.front().forward.hidden();
  Matrix d_layer;
  apply_backward(params.head, tape.top, d_out, grad.head, &d_layer);

  Matrix d_h0_fwd, d_h0_bwd;
  for (int li = static_cast<int>(params.layers.size()) - 1; li >= 0; --li) {
    const auto l = static_cast<std::size_t>(li);
    const auto& layer = params.layers[l];
    const Matrix& input = tape.layer_inputs[l];
    const Matrix d_gx_f = backprop_direction(layer.forward, tape.fwd[l], layout, lengths, false,
                                             d_layer.topRows(h), grad.layers[l].forward, d_h0_fwd);
    const Matrix d_gx_b = backprop_direction(layer.backward, tape.bwd[l], layout, lengths, true,
                                             d_layer.bottomRows(h), grad.layers[l].backward,
                                             d_h0_bwd);
    grad.layers[l].forward.w_x.noalias() += d_gx_f * input.transpose();
    grad.layers[l].backward.w_x.noalias() += d_gx_b * input.transpose();
    Matrix d_input = layer.forward.w_x.transpose() * d_gx_f;
    d_input.noalias() += layer.backward.w_x.transpose() * d_gx_b;
    d_layer = std::move(d_input);
  }

  if (params.init_proj.weight.size() > 0) {
    Matrix d_states(2 * h, layout.batch);
    d_states << d_h0_fwd, d_h0_bwd;
    const Matrix d_pre =
        d_states.cwiseProduct((1.0 - tape.init_pre.array().tanh().square()).matrix());
    apply_backward(params.init_proj, tape.init, d_pre, grad.init_proj, nullptr);
  }
  return d_layer;
}

CoefficientSequence decode_sequence(const Matrix& xm, const DecoderParams& params,
                                    const std::optional<CoefficientFrame>& init, double fps) {
  if (xm.cols() < 1) throw Error("decode_sequence: empty input");
  const SeqLayout layout{static_cast<int>(xm.cols()), 1};
  Matrix init_col;
  if (init) {
    init_col.resize(kMotionDim, 1);
    init_col << init->beta, init->pose;
  }
  const Matrix y = decode_columns(params, xm, layout, {layout.steps}, init_col, nullptr);
  return from_motion_matrix(y, fps);
}

// ---------------------------------------------------------------------------

namespace {

double norm_term(const Eigen::Ref<const Vector>& v, bool squared) {
  return squared ? v.squaredNorm() : v.norm();
}

Vector norm_grad(const Eigen::Ref<const Vector>& v, bool squared) {
  if (squared) return 2.0 * v;
  const double n = v.norm();
  return n > 0.0 ? Vector(v / n) : Vector(Vector::Zero(v.size()));
}

}  // namespace

double regression_loss_columns(const Eigen::Ref<const Matrix>& pred,
                               const Eigen::Ref<const Matrix>& gt, int length,
                               const LossWeights& w, bool squared, Matrix* d_pred) {
  double loss = 0.0;
  Vector prev_err = pred.col(0) - gt.col(0);
  for (int t = 1; t < length; ++t) {
    const Vector err = pred.col(t) - gt.col(t);
    const Vector motion = err - prev_err;  // D pred_t - D gt_t
    const auto eb = err.head(kExpressionDim);
    const auto ep = err.tail(kPoseDim);
    const auto mb = motion.head(kExpressionDim);
    const auto mp = motion.tail(kPoseDim);
    loss += norm_term(eb, squared) + norm_term(ep, squared) + w.w1 * norm_term(mb, squared) +
            w.w2 * norm_term(mp, squared);
    if (d_pred) {
      Vector d_err(kMotionDim), d_motion(kMotionDim);
      d_err << norm_grad(eb, squared), norm_grad(ep, squared);
      d_motion << w.w1 * norm_grad(mb, squared), w.w2 * norm_grad(mp, squared);
      d_pred->col(t) += d_err + d_motion;
      d_pred->col(t - 1) -= d_motion;
    }
    prev_err = err;
  }
  return loss;
}

double regression_loss(const CoefficientSequence& pred, const CoefficientSequence& gt,
                       const LossWeights& w, bool squared) {
  if (pred.size() != gt.size()) throw Error("regression_loss: length mismatch");
  if (pred.size() < 2) throw Error("regression_loss: sequences need at least 2 frames");
  if (w.w1 < 0.0 || w.w2 < 0.0) throw Error("regression_loss: weights must be non-negative");
  return regression_loss_columns(to_motion_matrix(pred), to_motion_matrix(gt),
                                 static_cast<int>(pred.size()), w, squared, nullptr);
}

}  // namespace lhg
