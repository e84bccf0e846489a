// SPDX-License-Identifier: Apache-2.0
#include "lhg/layers.hpp"

namespace lhg {

RowMask make_mask(const SeqLayout& layout, const std::vector<int>& lengths) {
  RowMask mask = RowMask::Zero(layout.columns());
  for (int b = 0; b < layout.batch; ++b)
    for (int t = 0; t < std::min(layout.steps, lengths[static_cast<std::size_t>(b)]); ++t)
      mask[layout.column(t, b)] = 1.0;
  return mask;
}

Linear make_linear(Eigen::Index in, Eigen::Index out) {
  return {Matrix::Zero(out, in), Vector::Zero(out)};
}

void init_uniform(Matrix& weight, Rng& rng, double fan_in, double fan_out) {
  const double a = std::sqrt(6.0 / (fan_in + fan_out));
  for (Eigen::Index j = 0; j < weight.cols(); ++j)
    for (Eigen::Index i = 0; i < weight.rows(); ++i) weight(i, j) = rng.uniform(-a, a);
}

void init_uniform(Linear& layer, Rng& rng) {
  init_uniform(layer.weight, rng, static_cast<double>(layer.in()),
               static_cast<double>(layer.out()));
}

void apply_backward(const Linear& layer, const Matrix& x, const Matrix& dy, Linear& grad,
                    Matrix* dx) {
  grad.weight.noalias() += dy * x.transpose();
  grad.bias += dy.rowwise().sum();
  if (dx) dx->noalias() = layer.weight.transpose() * dy;
}

SeParams make_se(Eigen::Index channels, int ratio) {
  const Eigen::Index bottleneck = std::max<Eigen::Index>(1, channels / ratio);
  return {make_linear(channels, bottleneck), make_linear(bottleneck, channels)};
}

void init_uniform(SeParams& se, Rng& rng) {
  init_uniform(se.squeeze, rng);
  init_uniform(se.excite, rng);
}

Matrix se_forward(const SeParams& se, const Matrix& x, SeTape* tape) {
  Matrix squeeze_pre = apply(se.squeeze, x);
  Matrix squeeze_act = squeeze_pre.cwiseMax(0.0);
  Matrix gate = apply(se.excite, squeeze_act).unaryExpr([](double v) { return sigmoid(v); });
  Matrix y = x.cwiseProduct(gate);
  if (tape) {
    tape->x = x;
    tape->squeeze_pre = std::move(squeeze_pre);
    tape->squeeze_act = std::move(squeeze_act);
    tape->gate = std::move(gate);
  }
  return y;
}

Matrix se_backward(const SeParams& se, const SeTape& tape, const Matrix& dy, SeParams& grad) {
  Matrix dx = dy.cwiseProduct(tape.gate);
  const Matrix d_gate_pre =
      dy.cwiseProduct(tape.x).cwiseProduct(tape.gate.cwiseProduct((1.0 - tape.gate.array()).matrix()));
  Matrix d_act;
  apply_backward(se.excite, tape.squeeze_act, d_gate_pre, grad.excite, &d_act);
  const Matrix d_pre =
      (tape.squeeze_pre.array() > 0.0).select(d_act, Matrix::Zero(d_act.rows(), d_act.cols()));
  Matrix d_from_squeeze;
  apply_backward(se.squeeze, tape.x, d_pre, grad.squeeze, &d_from_squeeze);
  dx += d_from_squeeze;
  return dx;
}

Matrix l2_normalize_columns(const Matrix& x) {
  const Eigen::RowVectorXd r =
      (x.colwise().squaredNorm().array() + kNormEpsilon * kNormEpsilon).sqrt().matrix();
  return x.array().rowwise() / r.array();
}

Matrix l2_normalize_backward(const Matrix& x, const Matrix& dy) {
  // d(x/r) = dy / r - x (x . dy) / r^3
  const Eigen::RowVectorXd r2 =
      (x.colwise().squaredNorm().array() + kNormEpsilon * kNormEpsilon).matrix();
  const Eigen::RowVectorXd r = r2.array().sqrt().matrix();
  const Eigen::RowVectorXd dots = x.cwiseProduct(dy).colwise().sum();
  Matrix dx = dy.array().rowwise() / r.array();
  dx.array() -= x.array().rowwise() * (dots.array() / (r2.array() * r.array()));
  return dx;
}

}  // namespace lhg
