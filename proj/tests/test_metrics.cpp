// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include "lhg/image_io.hpp"
#include "lhg/metrics.hpp"
#include "support.hpp"

using namespace lhg;
using lhg::test::TempDir;

namespace {

GrayImage constant_image(int h, int w, double v) { return {Matrix::Constant(h, w, v)}; }

GrayImage ramp_image(int h, int w) {
  GrayImage img{Matrix(h, w)};
  for (int r = 0; r < h; ++r)
    for (int c = 0; c < w; ++c) img.pixels(r, c) = (r + 2.0 * c) / (h + 2.0 * w);
  return img;
}

GrayImage step_image(int size) {
  GrayImage img{Matrix::Constant(size, size, 0.2)};
  img.pixels.rightCols(size / 2).setConstant(0.8);
  return img;
}

GrayImage gaussian_blur(const GrayImage& in, double sigma) {
  const int radius = static_cast<int>(std::ceil(3 * sigma));
  Vector k(2 * radius + 1);
  for (int i = -radius; i <= radius; ++i) k[i + radius] = std::exp(-0.5 * i * i / (sigma * sigma));
  k /= k.sum();
  const Eigen::Index h = in.height(), w = in.width();
  Matrix tmp(h, w), out(h, w);
  auto clampi = [](Eigen::Index v, Eigen::Index n) { return std::clamp<Eigen::Index>(v, 0, n - 1); };
  for (Eigen::Index r = 0; r < h; ++r)
    for (Eigen::Index c = 0; c < w; ++c) {
      double s = 0;
      for (int i = -radius; i <= radius; ++i) s += k[i + radius] * in.pixels(r, clampi(c + i, w));
      tmp(r, c) = s;
    }
  for (Eigen::Index r = 0; r < h; ++r)
    for (Eigen::Index c = 0; c < w; ++c) {
      double s = 0;
      for (int i = -radius; i <= radius; ++i) s += k[i + radius] * tmp(clampi(r + i, h), c);
      out(r, c) = s;
    }
  return {out};
}

// Window-by-window SSIM straight from the definition.
double reference_ssim(const GrayImage& a, const GrayImage& b) {
  const double c1 = 1e-4, c2 = 9e-4;
  double total = 0;
  int count = 0;
  for (Eigen::Index r = 0; r + 8 <= a.height(); ++r)
    for (Eigen::Index c = 0; c + 8 <= a.width(); ++c) {
      const Matrix x = a.pixels.block(r, c, 8, 8), y = b.pixels.block(r, c, 8, 8);
      const double mx = x.mean(), my = y.mean();
      const double vx = (x.array() - mx).square().mean();
      const double vy = (y.array() - my).square().mean();
      const double cxy = ((x.array() - mx) * (y.array() - my)).mean();
      total += (2 * mx * my + c1) * (2 * cxy + c2) / ((mx * mx + my * my + c1) * (vx + vy + c2));
      ++count;
    }
  return total / count;
}

// Denman-Beavers iteration on the (non-symmetric) product; independent of the
// eigendecomposition route used by the library.
double reference_frechet(const Vector& ma, const Matrix& sa, const Vector& mb, const Matrix& sb) {
  Matrix y = sa * sb;
  Matrix z = Matrix::Identity(y.rows(), y.cols());
  for (int i = 0; i < 100; ++i) {
    const Matrix y_next = 0.5 * (y + z.inverse());
    const Matrix z_next = 0.5 * (z + y.inverse());
    y = y_next;
    z = z_next;
  }
  return (ma - mb).squaredNorm() + sa.trace() + sb.trace() - 2.0 * y.trace();
}

Matrix random_spd(Rng& rng, int d) {
  Matrix a = Matrix::NullaryExpr(d, d, [&] { return rng.normal(); });
  return a * a.transpose() / d + 0.1 * Matrix::Identity(d, d);
}

CoefficientSequence shifted(const CoefficientSequence& s, double beta, double pose) {
  auto out = s;
  for (auto& f : out.frames) {
    f.beta.array() += beta;
    f.pose.array() += pose;
  }
  return out;
}

}  // namespace

TEST_SUITE("metrics") {

TEST_CASE("psnr examples") {
  CHECK(psnr(ramp_image(8, 8), ramp_image(8, 8)) == kPsnrIdentical);
  const auto a = constant_image(16, 16, 100.0 / 255.0);
  const auto b = constant_image(16, 16, 116.0 / 255.0);
  CHECK(std::abs(psnr(a, b) - 20.0 * std::log10(255.0 / 16.0)) < 1e-9);
  CHECK(psnr(a, b) == doctest::Approx(24.0482).epsilon(1e-5));
  CHECK(psnr(constant_image(8, 8, 0.0), constant_image(8, 8, 1.0)) == doctest::Approx(0.0));
  CHECK_THROWS_AS(psnr(constant_image(8, 8, 0), constant_image(8, 9, 0)), Error);
}

TEST_CASE("psnr decreases with noise amplitude") {
  const GrayImage base = ramp_image(32, 32);
  Rng rng(1);
  const Matrix noise = Matrix::NullaryExpr(32, 32, [&] { return rng.normal(); });
  double previous = kPsnrIdentical;
  for (double amp : {0.01, 0.05, 0.2}) {
    const double v = psnr(base, {base.pixels + amp * noise});
    CHECK(v < previous);
    previous = v;
  }
}

TEST_CASE("ssim examples") {
  const GrayImage ramp = ramp_image(20, 24);
  CHECK(std::abs(ssim(ramp, ramp) - 1.0) < 1e-9);
  const GrayImage inverted{Matrix::Ones(20, 24) - ramp.pixels};
  CHECK(ssim(ramp, inverted) < 0.0);

  const double v1 = 0.3, v2 = 0.7, c1 = 1e-4;
  const double expected = (2 * v1 * v2 + c1) / (v1 * v1 + v2 * v2 + c1);
  CHECK(ssim(constant_image(10, 10, v1), constant_image(10, 10, v2)) ==
        doctest::Approx(expected).epsilon(1e-9));
  CHECK_THROWS_AS(ssim(constant_image(7, 10, 0), constant_image(7, 10, 0)), Error);
}

TEST_CASE("ssim matches the window-by-window reference and stays bounded") {
  Rng rng(2);
  for (int trial = 0; trial < 5; ++trial) {
    const GrayImage a{Matrix::NullaryExpr(16, 19, [&] { return rng.uniform(); })};
    const GrayImage b{(a.pixels + 0.2 * Matrix::NullaryExpr(16, 19, [&] { return rng.normal(); }))
                          .cwiseMax(0.0)
                          .cwiseMin(1.0)};
    const double s = ssim(a, b);
    CHECK(s == doctest::Approx(reference_ssim(a, b)).epsilon(1e-9));
    CHECK(std::abs(s) <= 1.0);
  }
}

TEST_CASE("cpbd ranks a sharp edge above its blurred copy") {
  const GrayImage sharp = step_image(128);
  const GrayImage blurred = gaussian_blur(sharp, 3.0);
  const CpbdResult s = cpbd(sharp);
  const CpbdResult b = cpbd(blurred);
  CHECK_FALSE(s.no_edges);
  CHECK(s.value > b.value);
  for (double v : {s.value, b.value}) {
    CHECK(v >= 0.0);
    CHECK(v <= 1.0);
  }
  const CpbdResult flat = cpbd(constant_image(64, 64, 0.5));
  CHECK(flat.no_edges);
  CHECK(flat.value == 0.0);
  CHECK_THROWS_AS(cpbd(constant_image(32, 64, 0.5)), Error);
}

TEST_CASE("coefficient l1 examples") {
  const auto gt = test::random_sequence(4, 3);
  CHECK(coeff_l1(gt, gt, CoeffPart::pose) == 0.0);
  CHECK(coeff_l1(shifted(gt, 0.0, 0.07), gt, CoeffPart::pose) == doctest::Approx(0.07).epsilon(1e-12));
  CHECK(coeff_l1(shifted(gt, 0.0, 0.07), gt, CoeffPart::expression) == 0.0);

  CoefficientSequence one = test::random_sequence(1, 4);
  auto off = one;
  off.frames[0].beta[17] += 0.64;
  CHECK(coeff_l1(off, one, CoeffPart::expression) == doctest::Approx(0.01).epsilon(1e-12));
  CHECK_THROWS_AS(coeff_l1(one, gt, CoeffPart::pose), Error);
}

TEST_CASE("coefficient l1 triangle inequality") {
  for (std::uint64_t s = 0; s < 10; ++s) {
    const auto a = test::random_sequence(5, 10 + s);
    const auto b = test::random_sequence(5, 20 + s);
    const auto c = test::random_sequence(5, 30 + s);
    for (CoeffPart part : {CoeffPart::expression, CoeffPart::pose})
      CHECK(coeff_l1(a, c, part) <= coeff_l1(a, b, part) + coeff_l1(b, c, part) + 1e-15);
  }
}

TEST_CASE("gaussian summary examples") {
  const Matrix same = Matrix::Constant(5, 3, 0.4);
  CHECK(gaussian_summary(same).cov.isZero(0.0));
  Matrix two(2, 2);
  two << 0, 0, 2, 0;
  const auto g = gaussian_summary(two);
  CHECK(g.mean == Eigen::Vector2d(1.0, 0.0));
  Matrix expected(2, 2);
  expected << 2, 0, 0, 0;
  CHECK(g.cov == expected);
  CHECK(g.n == 2);
  CHECK_THROWS_AS(gaussian_summary(Matrix::Zero(1, 3)), Error);

  Rng rng(5);
  const Matrix x = Matrix::NullaryExpr(10, 3, [&] { return rng.normal(); });
  const Matrix reversed = x.colwise().reverse();
  const auto gx = gaussian_summary(x);
  const auto gr = gaussian_summary(reversed);
  CHECK((gx.mean - gr.mean).cwiseAbs().maxCoeff() < 1e-15);
  CHECK((gx.cov - gr.cov).cwiseAbs().maxCoeff() < 1e-15);
}

TEST_CASE("frechet distance analytic cases") {
  GaussianSummary<double> a{Vector::Zero(2), Matrix::Identity(2, 2), 10};
  GaussianSummary<double> b{Eigen::Vector2d(3.0, 4.0), Matrix::Identity(2, 2), 10};
  CHECK(std::abs(frechet_distance(a, a)) < 1e-8);
  CHECK(std::abs(frechet_distance(a, b) - 25.0) < 1e-6);
  CHECK(std::abs(frechet_distance(a, b, false) - 5.0) < 1e-6);

  GaussianSummary<double> p{Vector::Zero(1), Matrix::Constant(1, 1, 1.0), 10};
  GaussianSummary<double> q{Vector::Constant(1, 1.0), Matrix::Constant(1, 1, 4.0), 10};
  CHECK(std::abs(frechet_distance(p, q) - 2.0) < 1e-6);
  CHECK_THROWS_AS(frechet_distance(a, p), Error);
}

TEST_CASE("frechet distance matches an independent square root") {
  Rng rng(6);
  for (int trial = 0; trial < 5; ++trial) {
    const int d = 3 + trial;
    GaussianSummary<double> a{Vector::NullaryExpr(d, [&] { return rng.normal(); }), random_spd(rng, d), 50};
    GaussianSummary<double> b{Vector::NullaryExpr(d, [&] { return rng.normal(); }), random_spd(rng, d), 50};
    const double ours = frechet_distance(a, b);
    CHECK(ours == doctest::Approx(reference_frechet(a.mean, a.cov, b.mean, b.cov)).epsilon(1e-8));
    CHECK(ours == doctest::Approx(frechet_distance(b, a)).epsilon(1e-9));
    CHECK(ours >= 0.0);
  }
}

TEST_CASE("frechet distance of two halves shrinks with sample size") {
  auto split_distance = [](int n) {
    Rng rng(7);
    const Matrix x = Matrix::NullaryExpr(2 * n, 3, [&] { return rng.normal(); });
    return frechet_distance(gaussian_summary(x.topRows(n)), gaussian_summary(x.bottomRows(n)));
  };
  CHECK(split_distance(1000) < split_distance(100));
}

TEST_CASE("coefficient frechet distance") {
  const auto gt = test::random_sequence(30, 8);
  CHECK(std::abs(coeff_frechet(gt, gt, CoeffPart::pose)) < 1e-8);
  const double d = coeff_frechet(shifted(gt, 0.0, 0.1), gt, CoeffPart::pose);
  CHECK(d == doctest::Approx(6 * 0.01).epsilon(1e-6));
}

TEST_CASE("csim examples") {
  EmbeddingSet a{Matrix::Identity(4, 4), "a"};
  CHECK(csim(a, a) == doctest::Approx(1.0).epsilon(1e-15));
  EmbeddingSet rolled{Matrix::Zero(4, 4), "b"};
  for (int i = 0; i < 4; ++i) rolled.vectors(i, (i + 1) % 4) = 1.0;
  CHECK(csim(a, rolled) == 0.0);
  EmbeddingSet half = rolled;
  half.vectors.topRows(2) = a.vectors.topRows(2);
  CHECK(csim(a, half) == doctest::Approx(0.5).epsilon(1e-15));
  EmbeddingSet zero{Matrix::Zero(4, 4), "z"};
  CHECK_THROWS_AS(csim(a, zero), Error);
  CHECK_THROWS_AS(csim(a, EmbeddingSet{Matrix::Identity(3, 3), "c"}), Error);
}

TEST_CASE("embedding fid and csv loading") {
  TempDir dir("emb");
  test::write_file(dir / "a.csv", "1,0\n0,1\n1,1\n");
  const EmbeddingSet a = load_embedding_set(dir / "a.csv");
  CHECK(a.vectors.rows() == 3);
  CHECK(a.vectors.cols() == 2);
  CHECK(std::abs(embedding_fid(a, a)) < 1e-8);
}

TEST_CASE("report formatting and averaging") {
  MetricReport r1{{"PSNR", 20.0}, {"SSIM", 0.5}};
  MetricReport r2{{"PSNR", 30.0}, {"SSIM", std::nullopt}};
  const MetricReport avg = average_reports({r1, r2});
  CHECK(*avg.at("PSNR") == 25.0);
  CHECK(*avg.at("SSIM") == 0.5);
  CHECK_FALSE(avg.at("FID").has_value());
  const std::string text = format_report(avg);
  CHECK(text.find("PSNR = 25.000000") != std::string::npos);
  CHECK(text.find("FID = n/a") != std::string::npos);
  CHECK(format_report({{"PSNR", kPsnrIdentical}}).find("PSNR = inf") != std::string::npos);
}

TEST_CASE("image round trips") {
  TempDir dir("img");
  const GrayImage ramp = ramp_image(9, 13);
  for (const char* name : {"r.png", "r.pgm"}) {
    write_gray_image(ramp, dir / name);
    const GrayImage back = read_gray_image(dir / name);
    REQUIRE(back.height() == 9);
    REQUIRE(back.width() == 13);
    CHECK((back.pixels - ramp.pixels).cwiseAbs().maxCoeff() <= 0.5 / 255.0 + 1e-12);
  }
  RgbImage rgb(2, 1);
  rgb.set(0, 0, 255, 0, 0);
  rgb.set(1, 0, 0, 0, 255);
  const GrayImage g = rgb_to_gray(rgb);
  CHECK(g.pixels(0, 0) == doctest::Approx(0.299));
  CHECK(g.pixels(0, 1) == doctest::Approx(0.114));
  write_png(rgb, dir / "c.png");
  CHECK(read_gray_image(dir / "c.png").pixels(0, 0) == doctest::Approx(0.299).epsilon(0.01));
  test::write_file(dir / "bad.png", "not a png");
  CHECK_THROWS_AS(read_gray_image(dir / "bad.png"), Error);
}

}  // TEST_SUITE
