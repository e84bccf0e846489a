// SPDX-License-Identifier: Apache-2.0
#include "lhg/plot.hpp"

namespace lhg {
namespace {

struct Color {
  std::uint8_t r, g, b;
};

constexpr Color kAxis{160, 160, 160};
constexpr Color kTruth{0, 0, 0};
constexpr Color kPrediction{220, 30, 30};

void line(RgbImage& img, int x0, int y0, int x1, int y1, Color c) {
  const int dx = std::abs(x1 - x0), sx = x0 < x1 ? 1 : -1;
  const int dy = -std::abs(y1 - y0), sy = y0 < y1 ? 1 : -1;
  int err = dx + dy;
  while (true) {
    img.set(x0, y0, c.r, c.g, c.b);
    if (x0 == x1 && y0 == y1) break;
    const int e2 = 2 * err;
    if (e2 >= dy) {
      err += dy;
      x0 += sx;
    }
    if (e2 <= dx) {
      err += dx;
      y0 += sy;
    }
  }
}

std::vector<int> default_dims() {
  std::vector<int> dims;
  for (int i = 0; i < kPoseDim; ++i) dims.push_back(kExpressionDim + i);
  for (int i = 0; i < 4; ++i) dims.push_back(i);
  return dims;
}

}  // namespace

RgbImage plot_trajectories(const CoefficientSequence& pred, const CoefficientSequence* gt,
                           const PlotOptions& options) {
  if (pred.size() == 0) throw Error("plot: empty prediction");
  if (gt && gt->size() != pred.size()) throw Error("plot: prediction and ground truth lengths differ");
  if (options.panel_width < 16 || options.panel_height < 16) throw Error("plot: panels too small");
  const auto dims = options.dims.empty() ? default_dims() : options.dims;
  for (int d : dims)
    if (d < 0 || d >= kMotionDim) throw Error("plot: dimension " + std::to_string(d) + " out of range");

  const Matrix p = to_motion_matrix(pred);
  const Matrix g = gt ? to_motion_matrix(*gt) : Matrix();
  const int margin = 6;
  const int w = options.panel_width, h = options.panel_height;
  RgbImage img(w, h * static_cast<int>(dims.size()));
  const auto frames = p.cols();

  for (std::size_t k = 0; k < dims.size(); ++k) {
    const int top = static_cast<int>(k) * h;
    double lo = p.row(dims[k]).minCoeff(), hi = p.row(dims[k]).maxCoeff();
    if (gt) {
      lo = std::min(lo, g.row(dims[k]).minCoeff());
      hi = std::max(hi, g.row(dims[k]).maxCoeff());
    }
    if (hi - lo < 1e-9) {
      lo -= 0.5;
      hi += 0.5;
    }
    const int x_left = margin, x_right = w - margin - 1;
    const int y_top = top + margin, y_bottom = top + h - margin - 1;
    line(img, x_left, y_top, x_left, y_bottom, kAxis);
    line(img, x_left, y_bottom, x_right, y_bottom, kAxis);
    if (lo < 0.0 && hi > 0.0) {
      const int y0 = static_cast<int>(std::lround(y_bottom - (0.0 - lo) / (hi - lo) * (y_bottom - y_top)));
      for (int x = x_left; x <= x_right; x += 4) img.set(x, y0, kAxis.r, kAxis.g, kAxis.b);
    }
    auto x_of = [&](Eigen::Index t) {
      return frames < 2 ? x_left
                        : static_cast<int>(std::lround(x_left + static_cast<double>(t) / (frames - 1) *
                                                                    (x_right - x_left)));
    };
    auto y_of = [&](double v) {
      return static_cast<int>(std::lround(y_bottom - (v - lo) / (hi - lo) * (y_bottom - y_top)));
    };
    auto draw = [&](const Matrix& m, Color c) {
      for (Eigen::Index t = 0; t + 1 < frames; ++t)
        line(img, x_of(t), y_of(m(dims[k], t)), x_of(t + 1), y_of(m(dims[k], t + 1)), c);
      if (frames == 1) img.set(x_of(0), y_of(m(dims[k], 0)), c.r, c.g, c.b);
    };
    if (gt) draw(g, kTruth);
    draw(p, kPrediction);
  }
  return img;
}

void write_trajectory_plot(const CoefficientSequence& pred, const CoefficientSequence* gt,
                           const std::filesystem::path& path, const PlotOptions& options) {
  write_png(plot_trajectories(pred, gt, options), path);
}

}  // namespace lhg
