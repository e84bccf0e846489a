// SPDX-License-Identifier: Apache-2.0
//
// Evaluation metrics: image quality (PSNR, SSIM, CPBD), coefficient errors
// (ExpL1/PoseL1, ExpFD/PoseFD) and embedding-level scores (FID, CSIM).
#pragma once

#include <filesystem>
#include <limits>
#include <map>
#include <optional>
#include <string>

#include <Eigen/Eigenvalues>

#include "lhg/coeffspace.hpp"

namespace lhg {

/// Luma image with pixels in [0, 1]; rows are image rows.
struct GrayImage {
  Matrix pixels;

  Eigen::Index width() const { return pixels.cols(); }
  Eigen::Index height() const { return pixels.rows(); }
};

inline constexpr double kPsnrIdentical = std::numeric_limits<double>::infinity();

double psnr(const GrayImage& a, const GrayImage& b, double peak = 1.0);

struct SsimOptions {
  int window = 8;
  double k1 = 0.01;
  double k2 = 0.03;
  double peak = 1.0;
};

double ssim(const GrayImage& a, const GrayImage& b, const SsimOptions& options = {});

struct CpbdOptions {
  double beta = 3.6;
  double p_jnb = 0.63;
  double contrast_threshold = 50.0 / 255.0;  // w_JNB = 5 at or below, 3 above
  double width_jnb_low_contrast = 5.0;
  double width_jnb_high_contrast = 3.0;
  int block = 64;
  double edge_fraction = 0.002;  // edge pixels a block needs to be counted
  double edge_threshold = 0.1;   // relative to the strongest horizontal gradient
};

struct CpbdResult {
  double value = 0.0;
  bool no_edges = false;
  int edges = 0;
};

CpbdResult cpbd(const GrayImage& image, const CpbdOptions& options = {});

enum class CoeffPart { expression, pose };

/// Mean absolute error over frames and the dimensions of `part`.
double coeff_l1(const CoefficientSequence& pred, const CoefficientSequence& gt, CoeffPart part);

/// Rows of the selected part, one frame per row.
Matrix coefficient_rows(const CoefficientSequence& seq, CoeffPart part);

template <typename Scalar = double>
struct GaussianSummary {
  Eigen::Matrix<Scalar, Eigen::Dynamic, 1> mean;
  Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> cov;
  Eigen::Index n = 0;
};

/// Sample mean and unbiased covariance of the rows of `samples`.
template <typename Derived>
GaussianSummary<typename Derived::Scalar> gaussian_summary(const Eigen::MatrixBase<Derived>& samples) {
  using Scalar = typename Derived::Scalar;
  using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  if (samples.rows() < 2) throw Error("gaussian_summary needs at least 2 samples");
  GaussianSummary<Scalar> g;
  g.n = samples.rows();
  g.mean = samples.colwise().mean().transpose();
  const Mat centered = samples.rowwise() - g.mean.transpose();
  const Mat cov = centered.transpose() * centered / static_cast<Scalar>(g.n - 1);
  g.cov = (cov + cov.transpose()) / Scalar(2);
  return g;
}

/// Symmetric positive semi-definite square root; eigenvalues above
/// -clip are clamped to zero, anything more negative is an error.
template <typename Scalar>
Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> psd_sqrt(
    const Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>& m, Scalar clip) {
  using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  const Mat sym = (m + m.transpose()) / Scalar(2);
  Eigen::SelfAdjointEigenSolver<Mat> solver(sym);
  if (solver.info() != Eigen::Success) throw Error("eigendecomposition failed");
  auto values = solver.eigenvalues().eval();
  const Scalar scale = std::max<Scalar>(Scalar(1), values.cwiseAbs().maxCoeff());
  for (Eigen::Index i = 0; i < values.size(); ++i) {
    if (values[i] < -clip * scale) throw Error("matrix square root of a non-PSD matrix");
    values[i] = values[i] < Scalar(0) ? Scalar(0) : std::sqrt(values[i]);
  }
  return solver.eigenvectors() * values.asDiagonal() * solver.eigenvectors().transpose();
}

/// |mu_a - mu_b|^2 + Tr(S_a + S_b - 2 (S_a S_b)^(1/2)). The trace of the
/// product root is taken as Tr((S_a^(1/2) S_b S_a^(1/2))^(1/2)), which has
/// the same spectrum and stays symmetric. Returns the squared distance unless
/// `squared` is false.
template <typename Scalar>
Scalar frechet_distance(const GaussianSummary<Scalar>& a, const GaussianSummary<Scalar>& b,
                        bool squared = true) {
  using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  if (a.mean.size() != b.mean.size() || a.cov.rows() != b.cov.rows())
    throw Error("frechet_distance: dimension mismatch");
  const Scalar clip = Scalar(1e-8);
  const Mat root_a = psd_sqrt<Scalar>(a.cov, clip);
  const Mat inner = root_a * b.cov * root_a;
  Eigen::SelfAdjointEigenSolver<Mat> solver((inner + inner.transpose()) / Scalar(2),
                                            Eigen::EigenvaluesOnly);
  if (solver.info() != Eigen::Success) throw Error("frechet_distance: square root failed");
  const auto values = solver.eigenvalues();
  const Scalar scale = std::max<Scalar>(Scalar(1), values.cwiseAbs().maxCoeff());
  Scalar trace_root = 0;
  for (Eigen::Index i = 0; i < values.size(); ++i) {
    if (values[i] < -clip * scale) throw Error("frechet_distance: square root failed");
    if (values[i] > Scalar(0)) trace_root += std::sqrt(values[i]);
  }
  const Scalar d2 = (a.mean - b.mean).squaredNorm() + a.cov.trace() + b.cov.trace() -
                    Scalar(2) * trace_root;
  const Scalar clipped = d2 < Scalar(0) ? Scalar(0) : d2;
  return squared ? clipped : std::sqrt(clipped);
}

/// Fréchet distance between Gaussians fitted to the frames of two sequences.
double coeff_frechet(const CoefficientSequence& pred, const CoefficientSequence& gt,
                     CoeffPart part, bool squared = true);

struct EmbeddingSet {
  Matrix vectors;  // N x d
  std::string source_id;
};

EmbeddingSet load_embedding_set(const std::filesystem::path& path);

/// Mean row-wise cosine similarity of aligned rows.
double csim(const EmbeddingSet& a, const EmbeddingSet& b);

/// FID-style distance between the row distributions of two embedding sets.
double embedding_fid(const EmbeddingSet& a, const EmbeddingSet& b, bool squared = true);

// ----- reports -------------------------------------------------------------

/// Metric name -> value; missing entries are reported as n/a.
using MetricReport = std::map<std::string, std::optional<double>>;

/// Canonical metric order used in report files.
const std::vector<std::string>& metric_names();

std::string format_report(const MetricReport& report);
MetricReport average_reports(const std::vector<MetricReport>& reports);

}  // namespace lhg
