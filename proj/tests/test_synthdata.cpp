// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <set>

#include "lhg/synthdata.hpp"
#include "support.hpp"

using namespace lhg;
using lhg::test::TempDir;

namespace {

Vector pitch(const DyadicSample& s) {
  return to_motion_matrix(s.listener_coeffs).row(kExpressionDim).transpose();
}

// Pairs (smooth(E)(t - lag), pitch(t)) pooled over several dyads.
std::pair<Vector, Vector> lagged_pairs(const DyadConfig& base, int dyads) {
  std::vector<double> xs, ys;
  for (int i = 0; i < dyads; ++i) {
    DyadConfig cfg = base;
    cfg.seed = base.seed + static_cast<std::uint64_t>(i);
    const DyadicSample s = generate_dyad(cfg);
    const Vector e = moving_average(s.energy, kEnvelopeSmoothing);
    const Vector p = pitch(s);
    for (Eigen::Index t = cfg.lag_frames; t < p.size(); ++t) {
      xs.push_back(e[t - cfg.lag_frames]);
      ys.push_back(p[t]);
    }
  }
  return {Eigen::Map<Vector>(xs.data(), static_cast<Eigen::Index>(xs.size())),
          Eigen::Map<Vector>(ys.data(), static_cast<Eigen::Index>(ys.size()))};
}

}  // namespace

TEST_SUITE("synthdata") {

TEST_CASE("shapes follow the configuration") {
  const DyadicSample s = generate_dyad({});
  CHECK(s.speaker_coeffs.size() == 64);
  CHECK(s.listener_coeffs.size() == 64);
  CHECK(s.speaker_audio.samples.size() == 34134);  // ceil(64 / 30 * 16000)
  CHECK(s.transcript_tokens.size() == 8);
  CHECK(s.energy.size() == 64);
  CHECK(mfcc_stack(s.speaker_audio, 30.0, 13).frames() == 64);
  for (const auto& tok : s.transcript_tokens)
    CHECK(std::find(synth_vocabulary().begin(), synth_vocabulary().end(), tok) != synth_vocabulary().end());
}

TEST_CASE("no coupling and no noise leaves the listener at zero") {
  DyadConfig cfg;
  cfg.coupling_nod = cfg.coupling_expr = 0.0;
  cfg.noise_sigma = 0.0;
  for (std::uint64_t seed : {0, 1, 2}) {
    cfg.seed = seed;
    CHECK(to_motion_matrix(generate_dyad(cfg).listener_coeffs).isZero(0.0));
  }
}

TEST_CASE("generation is deterministic per seed") {
  DyadConfig cfg;
  cfg.seed = 42;
  const DyadicSample a = generate_dyad(cfg);
  const DyadicSample b = generate_dyad(cfg);
  CHECK(a.speaker_audio.samples == b.speaker_audio.samples);
  CHECK(a.speaker_coeffs == b.speaker_coeffs);
  CHECK(a.listener_coeffs == b.listener_coeffs);
  CHECK(a.transcript_tokens == b.transcript_tokens);
  cfg.seed = 43;
  CHECK_FALSE(generate_dyad(cfg).speaker_audio.samples == a.speaker_audio.samples);
}

TEST_CASE("pitch equals the smoothed envelope without lag or noise") {
  DyadConfig cfg;
  cfg.coupling_nod = 1.0;
  cfg.noise_sigma = 0.0;
  cfg.lag_frames = 0;
  for (std::uint64_t seed : {3, 4}) {
    cfg.seed = seed;
    const DyadicSample s = generate_dyad(cfg);
    CHECK(std::abs(pearson(moving_average(s.energy, kEnvelopeSmoothing), pitch(s)) - 1.0) < 1e-9);
  }
}

TEST_CASE("coupled pitch correlates with lagged energy") {
  DyadConfig cfg;
  cfg.coupling_nod = 0.8;
  cfg.noise_sigma = 0.1;
  const auto [e, p] = lagged_pairs(cfg, 20);
  CHECK(std::abs(pearson(e, p)) > 0.5);
}

TEST_CASE("uncoupled pitch does not correlate with energy") {
  DyadConfig cfg;
  cfg.coupling_nod = cfg.coupling_expr = 0.0;
  cfg.noise_sigma = 0.05;
  const auto [e, p] = lagged_pairs(cfg, 400);
  REQUIRE(e.size() >= 1000);
  CHECK(std::abs(pearson(e, p)) < 0.1);
}

TEST_CASE("mirrored expressions follow the speaker") {
  DyadConfig cfg;
  cfg.coupling_expr = 1.0;
  cfg.noise_sigma = 0.0;
  cfg.lag_frames = 2;
  const DyadicSample s = generate_dyad(cfg);
  const Matrix spk = to_motion_matrix(s.speaker_coeffs);
  const Matrix lis = to_motion_matrix(s.listener_coeffs);
  for (int d = 0; d < kMirroredExpressionDims; ++d)
    for (int t = 2; t < 64; ++t) CHECK(lis(d, t) == spk(d, t - 2));
  CHECK(lis.middleRows(kMirroredExpressionDims, kExpressionDim - kMirroredExpressionDims).isZero(0.0));
}

TEST_CASE("coefficients stay inside their ranges") {
  DyadConfig cfg;
  cfg.coupling_nod = cfg.coupling_expr = 1.0;
  cfg.noise_sigma = 0.8;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    cfg.seed = seed;
    const DyadicSample s = generate_dyad(cfg);
    for (const auto* seq : {&s.speaker_coeffs, &s.listener_coeffs}) {
      const Matrix m = to_motion_matrix(*seq);
      CHECK(m.topRows(kExpressionDim).cwiseAbs().maxCoeff() <= 1.0);
      CHECK(m.bottomRows(kPoseDim).cwiseAbs().maxCoeff() <= 0.5);
    }
    CHECK(s.speaker_audio.samples.cwiseAbs().maxCoeff() <= 1.0);
  }
}

TEST_CASE("invalid configurations are rejected") {
  DyadConfig cfg;
  cfg.coupling_nod = 1.5;
  CHECK_THROWS_AS(generate_dyad(cfg), Error);
  cfg = {};
  cfg.noise_sigma = -0.1;
  CHECK_THROWS_AS(generate_dyad(cfg), Error);
  cfg = {};
  cfg.sample_rate = 4000;
  CHECK_THROWS_AS(generate_dyad(cfg), Error);
}

TEST_CASE("split sizes") {
  CHECK(split_sizes(10, {0.8, 0.1, 0.1}) == std::array<int, 3>{8, 1, 1});
  CHECK(split_sizes(200, {0.8, 0.1, 0.1}) == std::array<int, 3>{160, 20, 20});
  CHECK(split_sizes(3, {0.5, 0.25, 0.25}) == std::array<int, 3>{1, 1, 1});
  CHECK_THROWS_AS(split_sizes(2, {0.8, 0.1, 0.1}), Error);
  CHECK_THROWS_AS(split_sizes(10, {0.8, 0.1, 0.2}), Error);
  CHECK_THROWS_AS(split_sizes(10, {1.1, -0.1, 0.0}), Error);
}

TEST_CASE("dataset splits partition the samples deterministically") {
  DyadConfig base;
  base.seed = 100;
  base.duration_s = 0.5;
  const DatasetSplit a = generate_dataset(base, 10, {0.8, 0.1, 0.1});
  const DatasetSplit b = generate_dataset(base, 10, {0.8, 0.1, 0.1});
  CHECK(a.train.size() == 8);
  CHECK(a.val.size() == 1);
  CHECK(a.test.size() == 1);
  std::set<std::vector<double>> audio;
  for (const auto* part : {&a.train, &a.val, &a.test})
    for (const auto& s : *part)
      audio.insert(std::vector<double>(s.speaker_audio.samples.begin(), s.speaker_audio.samples.end()));
  CHECK(audio.size() == 10);
  DyadConfig nine = base;
  nine.seed = 109;
  CHECK(a.test[0].speaker_audio.samples == generate_dyad(nine).speaker_audio.samples);
  for (std::size_t i = 0; i < a.train.size(); ++i) CHECK(a.train[i].listener_coeffs == b.train[i].listener_coeffs);
}

TEST_CASE("samples and manifests round trip through disk") {
  TempDir dir("synth");
  const DyadicSample s = generate_dyad({});
  write_sample(s, dir / "s0");
  const DyadicSample back = read_sample(dir / "s0");
  CHECK(back.transcript_tokens == s.transcript_tokens);
  CHECK((to_motion_matrix(back.listener_coeffs) - to_motion_matrix(s.listener_coeffs)).cwiseAbs().maxCoeff() < 1e-12);
  CHECK((back.speaker_audio.samples - s.speaker_audio.samples).cwiseAbs().maxCoeff() < 1e-7);

  write_manifest({{"train", "s0"}, {"test", "s1"}}, dir / "manifest.txt");
  const auto entries = read_manifest(dir / "manifest.txt");
  REQUIRE(entries.size() == 2);
  CHECK(entries[0].split == "train");
  CHECK(entries[0].dir == dir / "s0");
  test::write_file(dir / "bad.txt", "holdout\tx\n");
  CHECK_THROWS_AS(read_manifest(dir / "bad.txt"), Error);
}

TEST_CASE("moving average and pearson helpers") {
  Vector x(5);
  x << 0, 0, 5, 0, 0;
  const Vector m = moving_average(x, 5);
  CHECK(m.sum() == doctest::Approx(5.0));
  CHECK(m[2] == doctest::Approx(1.0));
  Vector y = 2.0 * x.array() + 1.0;
  CHECK(pearson(x, y) == doctest::Approx(1.0));
  CHECK_THROWS_AS(pearson(x, Vector::Ones(5)), Error);
}

}  // TEST_SUITE
