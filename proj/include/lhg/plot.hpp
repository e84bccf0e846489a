// SPDX-License-Identifier: Apache-2.0
//
// Static line plots of coefficient trajectories.
#pragma once

#include <filesystem>
#include <vector>

#include "lhg/coeffspace.hpp"
#include "lhg/image_io.hpp"

namespace lhg {

struct PlotOptions {
  /// Rows of the 70-dim motion vector to draw, one panel each. Defaults to
  /// the six pose rows followed by the first four expression rows.
  std::vector<int> dims;
  int panel_width = 480;
  int panel_height = 90;
};

/// One stacked panel per dimension; ground truth in black, prediction in red.
/// Each panel shares a vertical range across both curves.
RgbImage plot_trajectories(const CoefficientSequence& pred, const CoefficientSequence* gt,
                           const PlotOptions& options = {});

void write_trajectory_plot(const CoefficientSequence& pred, const CoefficientSequence* gt,
                           const std::filesystem::path& path, const PlotOptions& options = {});

}  // namespace lhg
