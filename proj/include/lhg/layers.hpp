// SPDX-License-Identifier: Apache-2.0
//
// Column-major building blocks shared by the encoder, fusion and decoder.
// Every activation matrix stores one frame per column. Batches of sequences
// are laid out time-major: column t * batch + b holds step t of sequence b.
#pragma once

#include <string>
#include <type_traits>
#include <vector>

#include "lhg/common.hpp"

namespace lhg {

using RowMask = Eigen::RowVectorXd;

struct SeqLayout {
  int steps = 0;
  int batch = 1;

  Eigen::Index columns() const { return static_cast<Eigen::Index>(steps) * batch; }
  Eigen::Index column(int t, int b) const { return static_cast<Eigen::Index>(t) * batch + b; }
};

/// 1 for frames inside a sequence's valid length, 0 for padding.
RowMask make_mask(const SeqLayout& layout, const std::vector<int>& lengths);

struct Linear {
  Matrix weight;  // out x in
  Vector bias;    // out

  Eigen::Index in() const { return weight.cols(); }
  Eigen::Index out() const { return weight.rows(); }
};

Linear make_linear(Eigen::Index in, Eigen::Index out);
/// Uniform(-a, a) with a = sqrt(6 / (in + out)); biases stay zero.
void init_uniform(Linear& layer, Rng& rng);
void init_uniform(Matrix& weight, Rng& rng, double fan_in, double fan_out);

inline Matrix apply(const Linear& layer, const Matrix& x) {
  return (layer.weight * x).colwise() + layer.bias;
}

/// Accumulates parameter gradients into `grad`; writes dL/dx when requested.
void apply_backward(const Linear& layer, const Matrix& x, const Matrix& dy, Linear& grad,
                    Matrix* dx);

/// Squeeze-excitation gate at frame granularity: y = x * sigmoid(E relu(S x)).
struct SeParams {
  Linear squeeze;
  Linear excite;
};

SeParams make_se(Eigen::Index channels, int ratio);
void init_uniform(SeParams& se, Rng& rng);

struct SeTape {
  Matrix x;
  Matrix squeeze_pre;
  Matrix squeeze_act;
  Matrix gate;
};

Matrix se_forward(const SeParams& se, const Matrix& x, SeTape* tape);
Matrix se_backward(const SeParams& se, const SeTape& tape, const Matrix& dy, SeParams& grad);

/// Column-wise x / sqrt(|x|^2 + eps^2).
inline constexpr double kNormEpsilon = 1e-12;
Matrix l2_normalize_columns(const Matrix& x);
Matrix l2_normalize_backward(const Matrix& x, const Matrix& dy);

// ---------------------------------------------------------------------------
// Parameter-block visitation. Visitors receive (name, Eigen object) where
// the object is a Matrix or a Vector (const when the params are const).

template <typename T, typename U>
using LikeConst = std::conditional_t<std::is_const_v<T>, const U, U>;

template <typename L, typename F>
  requires std::is_same_v<std::remove_const_t<L>, Linear>
void visit_blocks(L& layer, const std::string& prefix, F&& f) {
  f(prefix + ".weight", layer.weight);
  f(prefix + ".bias", layer.bias);
}

template <typename S, typename F>
  requires std::is_same_v<std::remove_const_t<S>, SeParams>
void visit_blocks(S& se, const std::string& prefix, F&& f) {
  visit_blocks(se.squeeze, prefix + ".squeeze", f);
  visit_blocks(se.excite, prefix + ".excite", f);
}

}  // namespace lhg
