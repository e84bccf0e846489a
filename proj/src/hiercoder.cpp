// SPDX-License-Identifier: Apache-2.0
#include "lhg/hiercoder.hpp"

#include <cmath>
#include <numeric>

namespace lhg {

EncoderParams make_encoder(const EncoderConfig& config) {
  EncoderParams p;
  int c_in = config.n_input;
  for (std::size_t s = 0; s < 3; ++s) {
    const int c_out = config.widths[s];
    p.stages[s].weight = Matrix::Zero(c_out, kConvTaps * c_in);
    p.stages[s].bias = Vector::Zero(c_out);
    p.stages[s].se = make_se(c_out, config.se_ratio);
    p.stages[s].dilation = config.dilations[s];
    p.heads[s] = make_linear(c_out, config.d_proj);
    c_in = c_out;
  }
  p.text_head = make_linear(config.d_text, config.d_proj);
  return p;
}

void init_uniform(EncoderParams& params, Rng& rng) {
  for (auto& stage : params.stages) {
    const double c_in = static_cast<double>(stage.weight.cols());
    init_uniform(stage.weight, rng, c_in, static_cast<double>(stage.weight.rows()) * kConvTaps);
    init_uniform(stage.se, rng);
  }
  // Projection biases start nonzero.
  auto init_head = [&rng](Linear& head) {
    init_uniform(head, rng);
    const double b = 1.0 / std::sqrt(static_cast<double>(head.in()));
    for (Eigen::Index i = 0; i < head.bias.size(); ++i) head.bias[i] = rng.uniform(-b, b);
  };
  for (auto& head : params.heads) init_head(head);
  init_head(params.text_head);
}

int receptive_radius(const EncoderParams& params, int stage) {
  int radius = 0;
  for (int s = 0; s <= stage; ++s) radius += params.stages[static_cast<std::size_t>(s)].dilation;
  return radius;
}

const Matrix& FeaturePyramid::level(Level l) const {
  switch (l) {
    case Level::low: return low;
    case Level::mid: return mid;
    case Level::high: return high;
  }
  return high;
}

Matrix dilated_im2col(const Matrix& x, const SeqLayout& layout, int dilation) {
  const Eigen::Index c = x.rows();
  const Eigen::Index b = layout.batch;
  Matrix cols = Matrix::Zero(kConvTaps * c, layout.columns());
  for (int k = 0; k < kConvTaps; ++k) {
    const int offset = (k - 1) * dilation;
    for (int t = 0; t < layout.steps; ++t) {
      const int src = t + offset;
      if (src < 0 || src >= layout.steps) continue;
      cols.block(k * c, t * b, c, b) = x.block(0, src * b, c, b);
    }
  }
  return cols;
}

Matrix dilated_col2im(const Matrix& cols, const SeqLayout& layout, int dilation,
                      Eigen::Index channels) {
  const Eigen::Index c = channels;
  const Eigen::Index b = layout.batch;
  Matrix x = Matrix::Zero(c, layout.columns());
  for (int k = 0; k < kConvTaps; ++k) {
    const int offset = (k - 1) * dilation;
    for (int t = 0; t < layout.steps; ++t) {
      const int src = t + offset;
      if (src < 0 || src >= layout.steps) continue;
      x.block(0, src * b, c, b) += cols.block(k * c, t * b, c, b);
    }
  }
  return x;
}

PyramidColumns encode_columns(const EncoderParams& params, const Matrix& x,
                              const SeqLayout& layout, const RowMask& mask, EncoderTape* tape) {
  if (x.rows() * kConvTaps != params.stages[0].weight.cols())
    throw Error("encoder expects " + std::to_string(params.stages[0].weight.cols() / kConvTaps) +
                " input channels, got " + std::to_string(x.rows()));
  if (x.cols() != layout.columns()) throw Error("encoder input does not match its layout");

  PyramidColumns out;
  Matrix input = x;
  for (std::size_t s = 0; s < 3; ++s) {
    const auto& stage = params.stages[s];
    Matrix pre = (stage.weight * dilated_im2col(input, layout, stage.dilation)).colwise() +
                 stage.bias;
    SeTape se_tape;
    Matrix y = se_forward(stage.se, pre.cwiseMax(0.0), tape ? &se_tape : nullptr);
    y.array().rowwise() *= mask.array();
    Matrix head_pre = apply(params.heads[s], y);
    out.levels[s] = l2_normalize_columns(head_pre);
    if (tape) {
      tape->inputs[s] = std::move(input);
      tape->pre[s] = std::move(pre);
      tape->se[s] = std::move(se_tape);
      tape->outputs[s] = y;
      tape->head_pre[s] = std::move(head_pre);
    }
    input = std::move(y);
  }
  return out;
}

Matrix encode_columns_backward(const EncoderParams& params, const EncoderTape& tape,
                               const SeqLayout& layout, const RowMask& mask,
                               const PyramidColumns& d_levels, EncoderParams& grad) {
  Matrix d_from_above;  // gradient flowing into stage s output from stage s+1
  for (int si = 2; si >= 0; --si) {
    const auto s = static_cast<std::size_t>(si);
    const auto& stage = params.stages[s];
    const Matrix d_head_pre = l2_normalize_backward(tape.head_pre[s], d_levels.levels[s]);
    Matrix dy;
    apply_backward(params.heads[s], tape.outputs[s], d_head_pre, grad.heads[s], &dy);
    if (d_from_above.size() > 0) dy += d_from_above;
    dy.array().rowwise() *= mask.array();

    const Matrix d_act = se_backward(stage.se, tape.se[s], dy, grad.stages[s].se);
    const Matrix d_pre = (tape.pre[s].array() > 0.0).select(d_act, 0.0 * d_act);
    const Matrix cols = dilated_im2col(tape.inputs[s], layout, stage.dilation);
    grad.stages[s].weight.noalias() += d_pre * cols.transpose();
    grad.stages[s].bias += d_pre.rowwise().sum();
    const Matrix d_cols = stage.weight.transpose() * d_pre;
    d_from_above = dilated_col2im(d_cols, layout, stage.dilation, tape.inputs[s].rows());
  }
  return d_from_above;
}

FeaturePyramid encode_audio(const Matrix& features, const EncoderParams& params) {
  if (features.rows() < 1) throw Error("encode_audio: empty feature stack");
  const SeqLayout layout{static_cast<int>(features.rows()), 1};
  const RowMask mask = RowMask::Ones(layout.columns());
  const auto cols = encode_columns(params, features.transpose(), layout, mask, nullptr);
  return {cols.levels[0].transpose(), cols.levels[1].transpose(), cols.levels[2].transpose()};
}

FeaturePyramid encode_audio(const AudioFeatureStack& stack, const EncoderParams& params) {
  return encode_audio(stack.concatenated(), params);
}

// ---------------------------------------------------------------------------

double cosine_similarity(const Vector& a, const Vector& b) {
  if (a.size() != b.size()) throw Error("cosine_similarity: dimension mismatch");
  const double na = a.norm();
  const double nb = b.norm();
  if (na == 0.0 || nb == 0.0) throw Error("cosine_similarity: zero-norm input");
  return std::clamp(a.dot(b) / (na * nb), -1.0, 1.0);
}

double safe_cosine(const Vector& a, const Vector& b) {
  const double na = a.norm();
  const double nb = b.norm();
  if (na == 0.0 || nb == 0.0) return 0.0;
  return a.dot(b) / (na * nb);
}

void safe_cosine_grad(const Vector& a, const Vector& b, Vector& da, Vector& db) {
  const double na = a.norm();
  const double nb = b.norm();
  if (na == 0.0 || nb == 0.0) {
    da = Vector::Zero(a.size());
    db = Vector::Zero(b.size());
    return;
  }
  const double s = a.dot(b) / (na * nb);
  da = b / (na * nb) - s * a / (na * na);
  db = a / (na * nb) - s * b / (nb * nb);
}

std::vector<FeatureRef> sample_negative_refs(std::span<const int> lengths, int anchor_sample,
                                             int anchor_t, int k, std::uint64_t seed) {
  if (k < 0) throw Error("k must be non-negative");
  std::vector<FeatureRef> pool;
  for (int s = 0; s < static_cast<int>(lengths.size()); ++s) {
    for (int t = 0; t < lengths[static_cast<std::size_t>(s)]; ++t) {
      pool.push_back({s, t, Level::low});
      pool.push_back({s, t, Level::mid});
      if (s != anchor_sample || t != anchor_t) pool.push_back({s, t, Level::high});
    }
  }
  if (static_cast<std::size_t>(k) > pool.size())
    throw Error("k = " + std::to_string(k) + " exceeds the available negative pool of " +
                std::to_string(pool.size()));
  Rng rng(seed);
  const std::size_t n = pool.size();
  for (std::size_t i = 0; i < static_cast<std::size_t>(k); ++i) {
    const std::size_t j = i + static_cast<std::size_t>(rng.below(n - i));
    std::swap(pool[i], pool[j]);
  }
  pool.resize(static_cast<std::size_t>(k));
  return pool;
}

std::vector<Vector> sample_negatives(std::span<const FeaturePyramid> batch, int anchor_sample,
                                     int anchor_t, int k, std::uint64_t seed) {
  std::vector<int> lengths;
  for (const auto& p : batch) lengths.push_back(static_cast<int>(p.high.rows()));
  std::vector<Vector> out;
  for (const auto& ref : sample_negative_refs(lengths, anchor_sample, anchor_t, k, seed))
    out.push_back(batch[static_cast<std::size_t>(ref.sample)].level(ref.level).row(ref.t).transpose());
  return out;
}

namespace {

void check_pool(std::span<const Vector> pool, std::size_t positive, double tau) {
  if (pool.empty()) throw Error("contrastive_loss: empty pool");
  if (positive >= pool.size()) throw Error("contrastive_loss: positive index outside the pool");
  if (!(tau > 0.0)) throw Error("contrastive_loss: tau must be positive");
}

}  // namespace

double contrastive_loss(const Vector& text, std::span<const Vector> pool, std::size_t positive,
                        double tau) {
  check_pool(pool, positive, tau);
  Vector logits(static_cast<Eigen::Index>(pool.size()));
  for (std::size_t j = 0; j < pool.size(); ++j)
    logits[static_cast<Eigen::Index>(j)] = safe_cosine(text, pool[j]) / tau;
  const double top = logits.maxCoeff();
  const double lse = top + std::log((logits.array() - top).exp().sum());
  return std::max(0.0, lse - logits[static_cast<Eigen::Index>(positive)]);
}

ContrastiveGrad contrastive_loss_grad(const Vector& text, std::span<const Vector> pool,
                                      std::size_t positive, double tau) {
  check_pool(pool, positive, tau);
  const auto n = static_cast<Eigen::Index>(pool.size());
  Vector logits(n);
  for (Eigen::Index j = 0; j < n; ++j)
    logits[j] = safe_cosine(text, pool[static_cast<std::size_t>(j)]) / tau;
  const double top = logits.maxCoeff();
  const Vector e = (logits.array() - top).exp().matrix();
  const double z = e.sum();
  const Vector prob = e / z;

  ContrastiveGrad g;
  g.loss = std::max(0.0, top + std::log(z) - logits[static_cast<Eigen::Index>(positive)]);
  g.d_text = Vector::Zero(text.size());
  g.d_pool.resize(pool.size());
  Vector da, db;
  for (Eigen::Index j = 0; j < n; ++j) {
    const double d_sim = (prob[j] - (j == static_cast<Eigen::Index>(positive) ? 1.0 : 0.0)) / tau;
    safe_cosine_grad(text, pool[static_cast<std::size_t>(j)], da, db);
    g.d_text += d_sim * da;
    g.d_pool[static_cast<std::size_t>(j)] = d_sim * db;
  }
  return g;
}

}  // namespace lhg
