// SPDX-License-Identifier: Apache-2.0
#include "lhg/model.hpp"

namespace lhg {

EncoderConfig ModelConfig::encoder() const {
  EncoderConfig c;
  c.n_input = n_input();
  c.widths = encoder_widths;
  c.d_proj = d_proj;
  c.d_text = d_text;
  return c;
}

FusionConfig ModelConfig::fusion() const {
  FusionConfig c;
  c.d_proj = d_proj;
  c.d_text = d_text;
  c.d_mfcc = n_input();
  c.d_fused = d_fused;
  c.d_xm = d_xm;
  return c;
}

DecoderConfig ModelConfig::decoder() const {
  DecoderConfig c;
  c.d_input = d_xm;
  c.hidden = hidden;
  c.layers = layers;
  c.use_init = use_init;
  c.residual = residual;
  return c;
}

void validate(const ModelConfig& config) {
  auto positive = [](int v, const char* name) {
    if (v < 1) throw Error(std::string(name) + " must be positive");
  };
  positive(config.n_mfcc, "n_mfcc");
  for (int w : config.encoder_widths) positive(w, "encoder_widths");
  positive(config.d_proj, "d_proj");
  positive(config.d_text, "d_text");
  positive(config.d_fused, "d_fused");
  positive(config.d_xm, "d_xm");
  positive(config.hidden, "hidden");
  positive(config.layers, "layers");
  if (config.n_mfcc > 26) throw Error("n_mfcc must not exceed the 26 mel bands");
}

ModelParams make_model(const ModelConfig& config) {
  validate(config);
  return {make_encoder(config.encoder()), make_fusion(config.fusion()),
          make_cross_modal(config.fusion()), make_decoder(config.decoder())};
}

void init_uniform(ModelParams& params, Rng& rng) {
  init_uniform(params.encoder, rng);
  init_uniform(params.fusion, rng);
  init_uniform(params.cross_modal, rng);
  init_uniform(params.decoder, rng);
}

std::vector<BlockView> block_views(ModelParams& params) {
  std::vector<BlockView> views;
  visit_blocks(params, [&](const std::string& name, auto& block) {
    views.push_back({name, block.data(), block.rows(), block.cols()});
  });
  return views;
}

std::size_t parameter_count(const ModelParams& params) {
  std::size_t n = 0;
  visit_blocks(params, [&](const std::string&, const auto& block) {
    n += static_cast<std::size_t>(block.size());
  });
  return n;
}

// ---------------------------------------------------------------------------

namespace {

Matrix fit_frames(const Matrix& rows_by_frame, int frames, const char* what) {
  const auto have = rows_by_frame.rows();
  if (std::abs(have - frames) > 1)
    throw Error(std::string(what) + " has " + std::to_string(have) + " frames but the speaker has " +
                std::to_string(frames));
  Matrix cols(rows_by_frame.cols(), frames);
  for (int t = 0; t < frames; ++t)
    cols.col(t) = rows_by_frame.row(std::min<Eigen::Index>(t, have - 1)).transpose();
  return cols;
}

}  // namespace

PreparedSample prepare_sample(const AudioClip& audio, const CoefficientSequence& speaker,
                              const std::vector<std::string>& tokens,
                              const TextEmbeddingProvider& text, int n_mfcc,
                              const CoefficientSequence* listener) {
  validate(speaker);
  const int frames = static_cast<int>(speaker.size());
  if (listener && listener->size() != speaker.size())
    throw Error("listener has " + std::to_string(listener->size()) +
                " frames but the speaker has " + std::to_string(frames));
  PreparedSample out;
  out.features = fit_frames(mfcc_stack(audio, speaker.fps, n_mfcc).concatenated(), frames, "audio");
  out.text = text.embed(tokens, frames).transpose();
  out.speaker = to_motion_matrix(speaker);
  if (listener) {
    out.listener = to_motion_matrix(*listener);
    out.init = out.listener.col(0);
  }
  return out;
}

PreparedSample prepare_sample(const DyadicSample& sample, const TextEmbeddingProvider& text,
                              int n_mfcc) {
  return prepare_sample(sample.speaker_audio, sample.speaker_coeffs, sample.transcript_tokens, text,
                        n_mfcc, &sample.listener_coeffs);
}

DataStats compute_stats(std::span<const PreparedSample> train) {
  if (train.empty()) throw Error("statistics need at least one training sample");
  const auto d = train.front().features.rows();
  Vector sum = Vector::Zero(d), sq = Vector::Zero(d), listener = Vector::Zero(kMotionDim);
  double frames = 0.0, listener_frames = 0.0;
  for (const auto& s : train) {
    sum += s.features.rowwise().sum();
    sq += s.features.cwiseProduct(s.features).rowwise().sum();
    frames += static_cast<double>(s.features.cols());
    if (s.listener.size() > 0) {
      listener += s.listener.rowwise().sum();
      listener_frames += static_cast<double>(s.listener.cols());
    }
  }
  DataStats stats;
  stats.feature_mean = sum / frames;
  const Vector var = (sq / frames - stats.feature_mean.cwiseProduct(stats.feature_mean)).cwiseMax(0.0);
  stats.feature_inv_std = (var.array() + 1e-8).rsqrt().matrix();
  stats.listener_mean = listener_frames > 0 ? Vector(listener / listener_frames)
                                            : Vector(Vector::Zero(kMotionDim));
  return stats;
}

void seed_output_bias(ModelParams& params, const DataStats& stats) {
  if (params.decoder.residual) return;
  params.decoder.head.bias = stats.listener_mean;
}

// ---------------------------------------------------------------------------

namespace {

struct BatchInputs {
  SeqLayout layout;
  std::vector<int> lengths;
  RowMask mask;
  Matrix features;  // normalized, n_input x N
  Matrix text;      // d_text x N
  Matrix speaker;   // 70 x N
  Matrix init;      // 70 x B
};

BatchInputs gather(const DataStats& stats, std::span<const PreparedSample* const> batch,
                   int max_steps) {
  if (batch.empty()) throw Error("empty minibatch");
  BatchInputs in;
  in.layout.batch = static_cast<int>(batch.size());
  for (const auto* s : batch) {
    const int len = std::min(s->length(), max_steps);
    if (len < 1) throw Error("minibatch sample has no frames");
    in.lengths.push_back(len);
    in.layout.steps = std::max(in.layout.steps, len);
  }
  const auto n = in.layout.columns();
  const auto d_in = batch.front()->features.rows();
  const auto d_text = batch.front()->text.rows();
  in.features = Matrix::Zero(d_in, n);
  in.text = Matrix::Zero(d_text, n);
  in.speaker = Matrix::Zero(kMotionDim, n);
  in.init = Matrix::Zero(kMotionDim, in.layout.batch);
  for (int b = 0; b < in.layout.batch; ++b) {
    const auto& s = *batch[static_cast<std::size_t>(b)];
    if (s.features.rows() != d_in || s.text.rows() != d_text)
      throw Error("minibatch samples disagree in feature widths");
    if (s.features.rows() != stats.feature_mean.size())
      throw Error("audio features have " + std::to_string(s.features.rows()) +
                  " channels, the model expects " + std::to_string(stats.feature_mean.size()));
    in.init.col(b) = s.init.size() == kMotionDim ? s.init : stats.listener_mean;
    for (int t = 0; t < in.lengths[static_cast<std::size_t>(b)]; ++t) {
      const auto c = in.layout.column(t, b);
      in.features.col(c) =
          (s.features.col(t) - stats.feature_mean).cwiseProduct(stats.feature_inv_std);
      in.text.col(c) = s.text.col(t);
      in.speaker.col(c) = s.speaker.col(t);
    }
  }
  in.mask = make_mask(in.layout, in.lengths);
  return in;
}

Matrix stack_rows(std::initializer_list<const Matrix*> parts) {
  Eigen::Index rows = 0;
  for (const auto* p : parts) rows += p->rows();
  Matrix out(rows, (*parts.begin())->cols());
  Eigen::Index r = 0;
  for (const auto* p : parts) {
    out.middleRows(r, p->rows()) = *p;
    r += p->rows();
  }
  return out;
}

/// Pool entry lookup: level matrices are d_proj x N.
Eigen::Index pool_column(const SeqLayout& layout, int sample, const FeatureRef& ref) {
  return layout.column(ref.t, sample);
}

}  // namespace

BatchLoss evaluate_batch(const ModelParams& params, const DataStats& stats,
                         std::span<const PreparedSample* const> batch,
                         const ObjectiveOptions& options, std::uint64_t negative_seed,
                         ModelParams* grad) {
  if (!options.regression && !options.contrastive)
    throw Error("objective has neither a regression nor a contrastive term");
  const BatchInputs in = gather(stats, batch, options.max_steps);
  const auto& layout = in.layout;
  const int n_batch = layout.batch;
  const double inv_batch = 1.0 / n_batch;
  const double con_weight = options.regression ? options.lambda_contrastive : 1.0;

  EncoderTape enc_tape;
  const PyramidColumns levels =
      encode_columns(params.encoder, in.features, layout, in.mask, grad ? &enc_tape : nullptr);
  PyramidColumns d_levels;
  for (auto& d : d_levels.levels) d = Matrix::Zero(levels.levels[0].rows(), layout.columns());

  BatchLoss loss;

  // Contrastive term: every valid frame with a nonzero text row is an anchor;
  // negatives come from the anchor's own pyramid.
  if (options.contrastive) {
    const Matrix text_pre = apply(params.encoder.text_head, in.text);
    const Matrix text_feat = l2_normalize_columns(text_pre);
    Matrix d_text_feat = Matrix::Zero(text_feat.rows(), text_feat.cols());
    for (int b = 0; b < n_batch; ++b) {
      const int len = in.lengths[static_cast<std::size_t>(b)];
      const std::array<int, 1> own_length{len};
      int anchors = 0;
      for (int t = 0; t < len; ++t) anchors += in.text.col(layout.column(t, b)).squaredNorm() > 0.0;
      if (anchors == 0) continue;
      const std::uint64_t sample_seed = derive_seed(negative_seed, static_cast<std::uint64_t>(b));
      double sample_loss = 0.0;
      for (int t = 0; t < len; ++t) {
        const auto c = layout.column(t, b);
        if (in.text.col(c).squaredNorm() == 0.0) continue;
        const auto refs = sample_negative_refs(own_length, 0, t, options.k_negatives,
                                               derive_seed(sample_seed, static_cast<std::uint64_t>(t)));
        std::vector<Vector> pool;
        pool.reserve(refs.size() + 1);
        pool.emplace_back(levels.levels[2].col(c));
        for (const auto& r : refs)
          pool.emplace_back(levels.levels[static_cast<std::size_t>(r.level)].col(pool_column(layout, b, r)));
        const Vector anchor = text_feat.col(c);
        if (!grad) {
          sample_loss += contrastive_loss(anchor, pool, 0, options.tau);
          continue;
        }
        const ContrastiveGrad g = contrastive_loss_grad(anchor, pool, 0, options.tau);
        sample_loss += g.loss;
        const double scale = con_weight * inv_batch / anchors;
        d_text_feat.col(c) += scale * g.d_text;
        d_levels.levels[2].col(c) += scale * g.d_pool[0];
        for (std::size_t j = 0; j < refs.size(); ++j)
          d_levels.levels[static_cast<std::size_t>(refs[j].level)].col(pool_column(layout, b, refs[j])) +=
              scale * g.d_pool[j + 1];
      }
      loss.contrastive += sample_loss / anchors * inv_batch;
    }
    if (grad) {
      const Matrix d_text_pre = l2_normalize_backward(text_pre, d_text_feat);
      apply_backward(params.encoder.text_head, in.text, d_text_pre, grad->encoder.text_head, nullptr);
    }
  }

  // Regression term through fusion, cross-modal perceptron and decoder.
  if (options.regression) {
    const Matrix concat = stack_rows({&levels.levels[2], &levels.levels[1], &levels.levels[0],
                                      &in.text, &in.features});
    FusionTape fusion_tape;
    const Matrix fused = fuse_audio_columns(params.fusion, concat, grad ? &fusion_tape : nullptr);
    const Matrix xm_in = stack_rows({&in.speaker, &fused});
    CrossModalTape xm_tape;
    const Matrix xm = fuse_cross_modal_columns(params.cross_modal, xm_in, grad ? &xm_tape : nullptr);
    DecoderTape dec_tape;
    const Matrix pred = decode_columns(params.decoder, xm, layout, in.lengths, in.init,
                                       grad ? &dec_tape : nullptr);

    Matrix d_pred = grad ? Matrix::Zero(pred.rows(), pred.cols()) : Matrix();
    for (int b = 0; b < n_batch; ++b) {
      const auto& s = *batch[static_cast<std::size_t>(b)];
      if (s.listener.cols() < s.length()) throw Error("training sample lacks listener motion");
      const int len = in.lengths[static_cast<std::size_t>(b)];
      Matrix p(kMotionDim, len);
      for (int t = 0; t < len; ++t) p.col(t) = pred.col(layout.column(t, b));
      Matrix dp = Matrix::Zero(kMotionDim, len);
      loss.regression += inv_batch * regression_loss_columns(p, s.listener.leftCols(len), len,
                                                             options.weights, options.squared_norm,
                                                             grad ? &dp : nullptr);
      if (grad)
        for (int t = 0; t < len; ++t) d_pred.col(layout.column(t, b)) = inv_batch * dp.col(t);
    }

    if (grad) {
      const Matrix d_xm =
          decode_columns_backward(params.decoder, dec_tape, layout, in.lengths, d_pred, grad->decoder);
      const Matrix d_xm_in =
          fuse_cross_modal_columns_backward(params.cross_modal, xm_tape, d_xm, grad->cross_modal);
      const Matrix d_concat = fuse_audio_columns_backward(
          params.fusion, fusion_tape, d_xm_in.bottomRows(fused.rows()), grad->fusion);
      const auto d = levels.levels[0].rows();
      d_levels.levels[2] += d_concat.topRows(d);
      d_levels.levels[1] += d_concat.middleRows(d, d);
      d_levels.levels[0] += d_concat.middleRows(2 * d, d);
    }
  }

  if (grad) encode_columns_backward(params.encoder, enc_tape, layout, in.mask, d_levels, grad->encoder);
  loss.total = (options.regression ? loss.regression : 0.0) + con_weight * loss.contrastive;
  return loss;
}

Matrix predict(const ModelParams& params, const DataStats& stats, const PreparedSample& sample) {
  const std::array<const PreparedSample*, 1> batch{&sample};
  const BatchInputs in = gather(stats, batch, sample.length());
  const PyramidColumns levels = encode_columns(params.encoder, in.features, in.layout, in.mask, nullptr);
  const Matrix concat = stack_rows({&levels.levels[2], &levels.levels[1], &levels.levels[0],
                                    &in.text, &in.features});
  const Matrix fused = fuse_audio_columns(params.fusion, concat, nullptr);
  const Matrix xm_in = stack_rows({&in.speaker, &fused});
  const Matrix xm = fuse_cross_modal_columns(params.cross_modal, xm_in, nullptr);
  return decode_columns(params.decoder, xm, in.layout, in.lengths, in.init, nullptr);
}

AlignedFeatures aligned_features(const ModelParams& params, const DataStats& stats,
                                 const PreparedSample& sample) {
  const std::array<const PreparedSample*, 1> batch{&sample};
  const BatchInputs in = gather(stats, batch, sample.length());
  const PyramidColumns levels = encode_columns(params.encoder, in.features, in.layout, in.mask, nullptr);
  return {l2_normalize_columns(apply(params.encoder.text_head, in.text)), levels.levels[2],
          levels.levels[1], levels.levels[0]};
}

}  // namespace lhg
