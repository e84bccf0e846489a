// SPDX-License-Identifier: Apache-2.0
#include "lhg/coeffspace.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace lhg {
namespace {

std::vector<std::string_view> split_commas(std::string_view line) {
  std::vector<std::string_view> cells;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find(',', start);
    if (pos == std::string_view::npos) {
      cells.push_back(line.substr(start));
      break;
    }
    cells.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
  return cells;
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r'))
    s.remove_suffix(1);
  return s;
}

double parse_cell(std::string_view cell, std::size_t row, std::size_t col,
                  const std::filesystem::path& path) {
  cell = trim(cell);
  double value = 0.0;
  const auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), value);
  if (ec != std::errc() || ptr != cell.data() + cell.size() || cell.empty()) {
    throw Error(path.string() + ": row " + std::to_string(row) + ", column " +
                std::to_string(col) + ": non-numeric cell '" + std::string(cell) + "'");
  }
  return value;
}

std::string expected_column(std::size_t col) {
  if (col == 0) return "frame";
  if (col <= kExpressionDim) return "beta_" + std::to_string(col - 1);
  if (col <= kMotionDim) return "pose_" + std::to_string(col - 1 - kExpressionDim);
  return "extra_" + std::to_string(col - 1 - kMotionDim);
}

}  // namespace

void validate(const CoefficientSequence& seq) {
  if (seq.frames.empty()) throw Error("empty sequence");
  if (!(seq.fps > 0.0) || !std::isfinite(seq.fps)) throw Error("fps must be positive");
  const auto extra = seq.frames.front().extra.size();
  for (std::size_t t = 0; t < seq.frames.size(); ++t) {
    const auto& f = seq.frames[t];
    if (f.extra.size() != extra)
      throw Error("frame " + std::to_string(t) + ": extra dimensionality differs");
    if (!f.beta.allFinite() || !f.pose.allFinite() || !f.extra.allFinite())
      throw Error("frame " + std::to_string(t) + ": non-finite coefficient");
  }
}

CoefficientSequence load_coefficient_sequence(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open coefficient file: " + path.string());

  CoefficientSequence seq;
  std::string line;
  std::size_t line_no = 0;
  std::size_t n_cols = 0;
  bool have_header = false;

  while (std::getline(in, line)) {
    ++line_no;
    std::string_view view = trim(line);
    if (view.empty()) continue;
    if (view.front() == '#') {
      if (have_header) continue;
      auto body = trim(view.substr(1));
      if (body.starts_with("fps=")) {
        auto value = body.substr(4);
        double fps = 0.0;
        const auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), fps);
        if (ec != std::errc() || ptr != value.data() + value.size() || !(fps > 0.0))
          throw Error(path.string() + ": line " + std::to_string(line_no) + ": bad fps value");
        seq.fps = fps;
      }
      continue;
    }

    const auto cells = split_commas(view);
    if (!have_header) {
      if (cells.size() < 1 + static_cast<std::size_t>(kMotionDim)) {
        // Name the first column that is missing.
        std::size_t col = 0;
        while (col < cells.size() && trim(cells[col]) == expected_column(col)) ++col;
        throw Error(path.string() + ": malformed header: missing column '" +
                    expected_column(col) + "'");
      }
      for (std::size_t col = 0; col < cells.size(); ++col) {
        if (trim(cells[col]) != expected_column(col))
          throw Error(path.string() + ": malformed header at column " + std::to_string(col) +
                      ": expected '" + expected_column(col) + "', found '" +
                      std::string(trim(cells[col])) + "'");
      }
      n_cols = cells.size();
      have_header = true;
      continue;
    }

    const std::size_t row = seq.frames.size();
    if (cells.size() != n_cols) {
      throw Error(path.string() + ": row " + std::to_string(row) + ": expected " +
                  std::to_string(n_cols) + " columns, found " + std::to_string(cells.size()));
    }
    const double index = parse_cell(cells[0], row, 0, path);
    if (index != static_cast<double>(row))
      throw Error(path.string() + ": row " + std::to_string(row) +
                  ", column 0: frame indices must be 0-based and consecutive");
    CoefficientFrame frame;
    for (int j = 0; j < kExpressionDim; ++j) frame.beta[j] = parse_cell(cells[1 + j], row, 1 + j, path);
    for (int j = 0; j < kPoseDim; ++j)
      frame.pose[j] = parse_cell(cells[1 + kExpressionDim + j], row, 1 + kExpressionDim + j, path);
    const std::size_t n_extra = n_cols - 1 - kMotionDim;
    frame.extra.resize(static_cast<Eigen::Index>(n_extra));
    for (std::size_t j = 0; j < n_extra; ++j)
      frame.extra[static_cast<Eigen::Index>(j)] =
          parse_cell(cells[1 + kMotionDim + j], row, 1 + kMotionDim + j, path);
    seq.frames.push_back(std::move(frame));
  }

  if (!have_header) throw Error(path.string() + ": malformed header: file has no header");
  validate(seq);
  return seq;
}

void save_coefficient_sequence(const CoefficientSequence& seq,
                               const std::filesystem::path& path) {
  validate(seq);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write coefficient file: " + path.string());

  char buf[64];
  auto put = [&](double v) {
    // %.17g round-trips every double exactly.
    const int n = std::snprintf(buf, sizeof buf, "%.17g", v);
    out.write(buf, n);
  };

  std::snprintf(buf, sizeof buf, "%.17g", seq.fps);
  out << "# fps=" << buf << '\n';
  const auto n_extra = seq.frames.front().extra.size();
  out << "frame";
  for (int j = 0; j < kExpressionDim; ++j) out << ",beta_" << j;
  for (int j = 0; j < kPoseDim; ++j) out << ",pose_" << j;
  for (Eigen::Index j = 0; j < n_extra; ++j) out << ",extra_" << j;
  out << '\n';

  for (std::size_t t = 0; t < seq.frames.size(); ++t) {
    const auto& f = seq.frames[t];
    out << t;
    for (int j = 0; j < kExpressionDim; ++j) { out << ','; put(f.beta[j]); }
    for (int j = 0; j < kPoseDim; ++j) { out << ','; put(f.pose[j]); }
    for (Eigen::Index j = 0; j < n_extra; ++j) { out << ','; put(f.extra[j]); }
    out << '\n';
  }
  if (!out) throw Error("failed while writing " + path.string());
}

std::vector<FrameDelta> frame_delta(const CoefficientSequence& seq) {
  if (seq.frames.size() < 2) throw Error("frame_delta needs at least 2 frames");
  std::vector<FrameDelta> deltas;
  deltas.reserve(seq.frames.size() - 1);
  for (std::size_t t = 0; t + 1 < seq.frames.size(); ++t) {
    deltas.push_back({seq.frames[t + 1].beta - seq.frames[t].beta,
                      seq.frames[t + 1].pose - seq.frames[t].pose});
  }
  return deltas;
}

Matrix to_motion_matrix(const CoefficientSequence& seq) {
  Matrix m(kMotionDim, static_cast<Eigen::Index>(seq.frames.size()));
  for (std::size_t t = 0; t < seq.frames.size(); ++t) {
    const auto col = static_cast<Eigen::Index>(t);
    m.col(col).head<kExpressionDim>() = seq.frames[t].beta;
    m.col(col).tail<kPoseDim>() = seq.frames[t].pose;
  }
  return m;
}

CoefficientSequence from_motion_matrix(const Matrix& motion, double fps) {
  if (motion.rows() != kMotionDim) throw Error("motion matrix must have 70 rows");
  CoefficientSequence seq;
  seq.fps = fps;
  seq.frames.resize(static_cast<std::size_t>(motion.cols()));
  for (Eigen::Index t = 0; t < motion.cols(); ++t) {
    seq.frames[static_cast<std::size_t>(t)].beta = motion.col(t).head<kExpressionDim>();
    seq.frames[static_cast<std::size_t>(t)].pose = motion.col(t).tail<kPoseDim>();
  }
  return seq;
}

}  // namespace lhg
