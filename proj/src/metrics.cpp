// SPDX-License-Identifier: Apache-2.0
#include "lhg/metrics.hpp"

#include <cstdio>

#include "lhg/audiofeat.hpp"

namespace lhg {
namespace {

void require_same_size(const GrayImage& a, const GrayImage& b, const char* what) {
  if (a.width() != b.width() || a.height() != b.height())
    throw Error(std::string(what) + ": image dimensions differ");
}

/// Summed-area table with a zero first row/column.
Matrix integral(const Matrix& m) {
  Matrix s = Matrix::Zero(m.rows() + 1, m.cols() + 1);
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c)
      s(r + 1, c + 1) = m(r, c) + s(r, c + 1) + s(r + 1, c) - s(r, c);
  return s;
}

double box_sum(const Matrix& s, Eigen::Index r, Eigen::Index c, Eigen::Index size) {
  return s(r + size, c + size) - s(r, c + size) - s(r + size, c) + s(r, c);
}

}  // namespace

double psnr(const GrayImage& a, const GrayImage& b, double peak) {
  require_same_size(a, b, "psnr");
  const double mse = (a.pixels - b.pixels).squaredNorm() / static_cast<double>(a.pixels.size());
  if (mse == 0.0) return kPsnrIdentical;
  return 10.0 * std::log10(peak * peak / mse);
}

double ssim(const GrayImage& a, const GrayImage& b, const SsimOptions& options) {
  require_same_size(a, b, "ssim");
  const int w = options.window;
  if (a.width() < w || a.height() < w)
    throw Error("ssim: images must be at least " + std::to_string(w) + "x" + std::to_string(w));
  const double c1 = std::pow(options.k1 * options.peak, 2);
  const double c2 = std::pow(options.k2 * options.peak, 2);
  const Matrix sa = integral(a.pixels);
  const Matrix sb = integral(b.pixels);
  const Matrix saa = integral(a.pixels.cwiseProduct(a.pixels));
  const Matrix sbb = integral(b.pixels.cwiseProduct(b.pixels));
  const Matrix sab = integral(a.pixels.cwiseProduct(b.pixels));
  const double n = static_cast<double>(w) * w;

  double total = 0.0;
  Eigen::Index count = 0;
  for (Eigen::Index r = 0; r + w <= a.height(); ++r) {
    for (Eigen::Index c = 0; c + w <= a.width(); ++c) {
      const double mu_a = box_sum(sa, r, c, w) / n;
      const double mu_b = box_sum(sb, r, c, w) / n;
      const double var_a = std::max(0.0, box_sum(saa, r, c, w) / n - mu_a * mu_a);
      const double var_b = std::max(0.0, box_sum(sbb, r, c, w) / n - mu_b * mu_b);
      const double cov = box_sum(sab, r, c, w) / n - mu_a * mu_b;
      total += ((2 * mu_a * mu_b + c1) * (2 * cov + c2)) /
               ((mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2));
      ++count;
    }
  }
  return total / static_cast<double>(count);
}

CpbdResult cpbd(const GrayImage& image, const CpbdOptions& options) {
  const Eigen::Index h = image.height();
  const Eigen::Index w = image.width();
  if (h < options.block || w < options.block)
    throw Error("cpbd: image must be at least " + std::to_string(options.block) + "x" +
                std::to_string(options.block));
  const Matrix& img = image.pixels;

  // Horizontal Sobel response (vertical edges).
  Matrix gx = Matrix::Zero(h, w);
  for (Eigen::Index r = 1; r + 1 < h; ++r)
    for (Eigen::Index c = 1; c + 1 < w; ++c)
      gx(r, c) = (img(r - 1, c + 1) + 2 * img(r, c + 1) + img(r + 1, c + 1)) -
                 (img(r - 1, c - 1) + 2 * img(r, c - 1) + img(r + 1, c - 1));
  const double strongest = gx.cwiseAbs().maxCoeff();

  CpbdResult result;
  if (strongest <= 1e-12) {
    result.no_edges = true;
    return result;
  }
  const double threshold = options.edge_threshold * strongest;
  Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic> edge(h, w);
  edge.setConstant(false);
  for (Eigen::Index r = 1; r + 1 < h; ++r) {
    for (Eigen::Index c = 1; c + 1 < w; ++c) {
      const double m = std::abs(gx(r, c));
      // Thin edges to the row-wise maximum of the gradient magnitude.
      edge(r, c) = m >= threshold && m >= std::abs(gx(r, c - 1)) && m > std::abs(gx(r, c + 1));
    }
  }

  int sharp = 0;
  int total = 0;
  for (Eigen::Index br = 0; br < h; br += options.block) {
    for (Eigen::Index bc = 0; bc < w; bc += options.block) {
      const Eigen::Index rows = std::min<Eigen::Index>(options.block, h - br);
      const Eigen::Index cols = std::min<Eigen::Index>(options.block, w - bc);
      const auto edges_in_block = edge.block(br, bc, rows, cols).count();
      if (static_cast<double>(edges_in_block) <= options.edge_fraction * rows * cols) continue;
      const auto block = img.block(br, bc, rows, cols);
      const double contrast = block.maxCoeff() - block.minCoeff();
      const double width_jnb = contrast <= options.contrast_threshold
                                   ? options.width_jnb_low_contrast
                                   : options.width_jnb_high_contrast;
      for (Eigen::Index r = br; r < br + rows; ++r) {
        for (Eigen::Index c = bc; c < bc + cols; ++c) {
          if (!edge(r, c)) continue;
          const bool rising = gx(r, c) > 0;
          Eigen::Index left = c;
          Eigen::Index right = c;
          if (rising) {
            while (left > 0 && img(r, left - 1) < img(r, left)) --left;
            while (right + 1 < w && img(r, right + 1) > img(r, right)) ++right;
          } else {
            while (left > 0 && img(r, left - 1) > img(r, left)) --left;
            while (right + 1 < w && img(r, right + 1) < img(r, right)) ++right;
          }
          const double width = static_cast<double>(std::max<Eigen::Index>(1, right - left));
          const double p_blur = 1.0 - std::exp(-std::pow(width / width_jnb, options.beta));
          ++total;
          if (p_blur <= options.p_jnb) ++sharp;
        }
      }
    }
  }
  result.edges = total;
  if (total == 0) {
    result.no_edges = true;
    return result;
  }
  result.value = static_cast<double>(sharp) / total;
  return result;
}

Matrix coefficient_rows(const CoefficientSequence& seq, CoeffPart part) {
  const int d = part == CoeffPart::expression ? kExpressionDim : kPoseDim;
  Matrix rows(static_cast<Eigen::Index>(seq.size()), d);
  for (std::size_t t = 0; t < seq.size(); ++t) {
    if (part == CoeffPart::expression)
      rows.row(static_cast<Eigen::Index>(t)) = seq.frames[t].beta.transpose();
    else
      rows.row(static_cast<Eigen::Index>(t)) = seq.frames[t].pose.transpose();
  }
  return rows;
}

double coeff_l1(const CoefficientSequence& pred, const CoefficientSequence& gt, CoeffPart part) {
  if (pred.size() != gt.size()) throw Error("coeff_l1: length mismatch");
  if (pred.size() == 0) throw Error("coeff_l1: empty sequences");
  const Matrix diff = coefficient_rows(pred, part) - coefficient_rows(gt, part);
  return diff.cwiseAbs().mean();
}

double coeff_frechet(const CoefficientSequence& pred, const CoefficientSequence& gt,
                     CoeffPart part, bool squared) {
  return frechet_distance(gaussian_summary(coefficient_rows(pred, part)),
                          gaussian_summary(coefficient_rows(gt, part)), squared);
}

EmbeddingSet load_embedding_set(const std::filesystem::path& path) {
  return {read_matrix_csv(path), path.string()};
}

double csim(const EmbeddingSet& a, const EmbeddingSet& b) {
  if (a.vectors.rows() != b.vectors.rows() || a.vectors.cols() != b.vectors.cols())
    throw Error("csim: embedding sets differ in shape");
  if (a.vectors.rows() == 0) throw Error("csim: empty embedding sets");
  double total = 0.0;
  for (Eigen::Index i = 0; i < a.vectors.rows(); ++i) {
    const double na = a.vectors.row(i).norm();
    const double nb = b.vectors.row(i).norm();
    if (na == 0.0 || nb == 0.0) throw Error("csim: zero-norm row " + std::to_string(i));
    total += a.vectors.row(i).dot(b.vectors.row(i)) / (na * nb);
  }
  return total / static_cast<double>(a.vectors.rows());
}

double embedding_fid(const EmbeddingSet& a, const EmbeddingSet& b, bool squared) {
  if (a.vectors.cols() != b.vectors.cols()) throw Error("fid: embedding dimensions differ");
  return frechet_distance(gaussian_summary(a.vectors), gaussian_summary(b.vectors), squared);
}

const std::vector<std::string>& metric_names() {
  static const std::vector<std::string> names = {"SSIM",   "CPBD",  "PSNR",   "FID",  "CSIM",
                                                 "PoseL1", "ExpL1", "PoseFD", "ExpFD"};
  return names;
}

std::string format_report(const MetricReport& report) {
  std::string out;
  char buf[64];
  for (const auto& name : metric_names()) {
    const auto it = report.find(name);
    out += name + " = ";
    if (it == report.end() || !it->second) {
      out += "n/a";
    } else if (std::isinf(*it->second)) {
      out += *it->second > 0 ? "inf" : "-inf";
    } else {
      std::snprintf(buf, sizeof buf, "%.6f", *it->second);
      out += buf;
    }
    out += '\n';
  }
  return out;
}

MetricReport average_reports(const std::vector<MetricReport>& reports) {
  MetricReport avg;
  for (const auto& name : metric_names()) {
    double sum = 0.0;
    int n = 0;
    for (const auto& r : reports) {
      const auto it = r.find(name);
      if (it != r.end() && it->second) {
        sum += *it->second;
        ++n;
      }
    }
    avg[name] = n > 0 ? std::optional<double>(sum / n) : std::nullopt;
  }
  return avg;
}

}  // namespace lhg
