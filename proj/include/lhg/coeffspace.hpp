// SPDX-License-Identifier: Apache-2.0
//
// 3DMM coefficient data model: per-frame expression (64) and pose (6)
// vectors, CSV persistence and inter-frame differences.
#pragma once

#include <filesystem>
#include <vector>

#include "lhg/common.hpp"

namespace lhg {

inline constexpr int kExpressionDim = 64;
inline constexpr int kPoseDim = 6;
inline constexpr int kMotionDim = kExpressionDim + kPoseDim;
inline constexpr double kDefaultFps = 30.0;

using ExpressionVector = Eigen::Matrix<double, kExpressionDim, 1>;
using PoseVector = Eigen::Matrix<double, kPoseDim, 1>;

/// One frame of coefficients. Pose is (rx, ry, rz) in radians followed by
/// (tx, ty, tz). `extra` holds the unused coefficient groups verbatim.
struct CoefficientFrame {
  ExpressionVector beta = ExpressionVector::Zero();
  PoseVector pose = PoseVector::Zero();
  Vector extra;

  bool operator==(const CoefficientFrame&) const = default;
};

struct CoefficientSequence {
  std::vector<CoefficientFrame> frames;
  double fps = kDefaultFps;

  std::size_t size() const { return frames.size(); }
  bool operator==(const CoefficientSequence&) const = default;
};

struct FrameDelta {
  ExpressionVector beta;
  PoseVector pose;
};

/// Throws Error when the sequence breaks an invariant (empty, non-finite,
/// ragged extras, fps <= 0).
void validate(const CoefficientSequence& seq);

CoefficientSequence load_coefficient_sequence(const std::filesystem::path& path);
void save_coefficient_sequence(const CoefficientSequence& seq,
                               const std::filesystem::path& path);

/// Element t is frame[t+1] - frame[t].
std::vector<FrameDelta> frame_delta(const CoefficientSequence& seq);

/// Packs (beta, pose) of every frame into the columns of a 70 x T matrix.
Matrix to_motion_matrix(const CoefficientSequence& seq);
/// Inverse of to_motion_matrix; extras are left empty.
CoefficientSequence from_motion_matrix(const Matrix& motion, double fps);

}  // namespace lhg
