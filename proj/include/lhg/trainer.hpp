// SPDX-License-Identifier: Apache-2.0
//
// Training, inference, checkpoints and gradient verification.
#pragma once

#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "lhg/model.hpp"

namespace lhg {

enum class TrainStage { joint, pretrain_then_decoder };
enum class OptimizerKind { adam, sgd };

struct TrainConfig {
  int epochs = 200;
  int batch_size = 16;
  double learning_rate = 1e-3;
  double tau = 0.07;
  int k_negatives = 16;
  double w1 = 1.0;
  double w2 = 1.0;
  double lambda_contrastive = 0.1;
  std::uint64_t seed = 0;
  TrainStage stage = TrainStage::joint;
  int pretrain_epochs = 20;  // contrastive-only epochs in staged mode
  OptimizerKind optimizer = OptimizerKind::adam;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_epsilon = 1e-8;
  bool squared_norm = false;
  int t_train = 64;
  ModelConfig model;

  ObjectiveOptions objective() const;
};

void validate(const TrainConfig& cfg);

/// key = value text, one line per field, fixed order.
std::string format_config(const TrainConfig& cfg);
/// Parses key = value lines ('#' starts a comment). Missing keys keep their
/// defaults; unknown keys and malformed values throw.
TrainConfig parse_config(const std::string& text);
TrainConfig load_config(const std::filesystem::path& path);

std::string stage_name(TrainStage stage);
std::string optimizer_name(OptimizerKind kind);

struct EpochLog {
  int epoch = 0;
  double train_reg = 0.0;
  double train_con = 0.0;
  double val_reg = 0.0;
  double val_con = 0.0;
};

/// `epoch,train_reg,train_con,val_reg,val_con` with full precision.
std::string format_log(const std::vector<EpochLog>& log);

struct TrainState {
  TrainConfig config;
  ModelParams params;
  ModelParams adam_m;
  ModelParams adam_v;
  DataStats stats;
  std::uint64_t step = 0;
  int epoch = 0;  // completed epochs
  Rng rng;
  std::vector<EpochLog> log;
};

/// Fresh state: statistics from `train`, seeded parameter init.
TrainState init_training(const TrainConfig& cfg, std::span<const PreparedSample> train);

/// Observer called after every epoch; returning false stops training.
using EpochCallback = std::function<bool(const TrainState&)>;

/// Continues training until `state.config.epochs` epochs are complete.
/// Throws when a loss or parameter becomes non-finite.
void train(TrainState& state, std::span<const PreparedSample> train_set,
           std::span<const PreparedSample> val_set, const EpochCallback& on_epoch = {});

/// Full-set losses with a negative draw that is fixed for the whole run.
BatchLoss evaluate_set(const TrainState& state, std::span<const PreparedSample> set);

// ----- checkpoint ----------------------------------------------------------

inline constexpr std::uint32_t kCheckpointVersion = 1;

std::vector<std::uint8_t> serialize_checkpoint(const TrainState& state);
TrainState deserialize_checkpoint(const std::vector<std::uint8_t>& bytes);
void save_checkpoint(const TrainState& state, const std::filesystem::path& path);
TrainState load_checkpoint(const std::filesystem::path& path);

// ----- inference -----------------------------------------------------------

/// Listener coefficients with the speaker's frame count. `listener_init`
/// defaults to the training listener mean.
CoefficientSequence infer(const TrainState& ckpt, const AudioClip& audio,
                          const CoefficientSequence& speaker,
                          const std::vector<std::string>& tokens,
                          const std::optional<CoefficientFrame>& listener_init,
                          const TextEmbeddingProvider& text);

/// The provider every model is trained with: hash-seeded token vectors.
StubTextProvider default_text_provider(const TrainConfig& cfg);

// ----- gradient verification -----------------------------------------------

struct BlockCheck {
  std::string name;
  double max_rel_error = 0.0;
  double max_abs_analytic = 0.0;
  double max_abs_numeric = 0.0;
};

struct GradCheckReport {
  std::vector<BlockCheck> blocks;
  double tolerance = 0.0;
  bool passed = false;
  std::string worst_block;
  double worst_error = 0.0;
};

struct GradCheckOptions {
  double tolerance = 1e-4;
  double step = 1e-5;
  bool zero_init = false;
  std::uint64_t init_seed = 0;
  /// Test fixture: this block's analytic gradient is negated before comparison.
  std::string corrupt_block;
};

/// Small configuration within the checker's limits (h <= 8, T <= 8).
TrainConfig gradcheck_config();

/// Compares the analytic gradient of L_dec + lambda * L_con with central
/// differences for every entry of every parameter block. Relative error of a
/// block is max|a - n| / max(max|a|, max|n|, 1e-3).
GradCheckReport gradient_check(const TrainConfig& cfg, std::span<const DyadicSample> samples,
                               const GradCheckOptions& options);

std::string format_gradcheck(const GradCheckReport& report);

// ----- evaluation helpers --------------------------------------------------

/// Mean |x_{t+1} - x_t| over the pose rows of a 70 x T motion matrix.
double mean_abs_pose_delta(const Matrix& motion);

struct AlignmentStats {
  double positive = 0.0;  // mean cosine(text_t, high_t)
  double negative = 0.0;  // mean cosine(text_t, sampled negative)
  double gap() const { return positive - negative; }
};

AlignmentStats contrastive_alignment(const TrainState& state, std::span<const PreparedSample> set,
                                     int k, std::uint64_t seed);

}  // namespace lhg
