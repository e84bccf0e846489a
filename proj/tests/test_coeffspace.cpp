// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include "lhg/coeffspace.hpp"
#include "support.hpp"

using namespace lhg;
using lhg::test::TempDir;

namespace {

std::string header(int n_beta) {
  std::string h = "frame";
  for (int i = 0; i < n_beta; ++i) h += ",beta_" + std::to_string(i);
  for (int i = 0; i < kPoseDim; ++i) h += ",pose_" + std::to_string(i);
  return h + "\n";
}

std::string zero_row(int t, int n) {
  std::string r = std::to_string(t);
  for (int i = 0; i < n; ++i) r += ",0";
  return r + "\n";
}

}  // namespace

TEST_SUITE("coeffspace") {

TEST_CASE("two zero rows load as two zero frames") {
  TempDir dir("coeff");
  test::write_file(dir / "z.csv", header(64) + zero_row(0, 70) + zero_row(1, 70));
  const auto seq = load_coefficient_sequence(dir / "z.csv");
  REQUIRE(seq.size() == 2);
  for (const auto& f : seq.frames) {
    CHECK(f.beta.isZero(0.0));
    CHECK(f.pose.isZero(0.0));
    CHECK(f.extra.size() == 0);
  }
}

TEST_CASE("63 beta columns is rejected naming the missing column") {
  TempDir dir("coeff");
  test::write_file(dir / "bad.csv", header(63) + zero_row(0, 69));
  try {
    load_coefficient_sequence(dir / "bad.csv");
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(std::string(e.what()).find("beta_63") != std::string::npos);
  }
}

TEST_CASE("non-numeric cell reports row and column") {
  TempDir dir("coeff");
  std::string row = "0";
  for (int i = 0; i < 70; ++i) row += i == 5 ? ",abc" : ",0";
  test::write_file(dir / "bad.csv", header(64) + row + "\n");
  try {
    load_coefficient_sequence(dir / "bad.csv");
    FAIL("expected an error");
  } catch (const Error& e) {
    const std::string msg = e.what();
    CHECK(msg.find("row") != std::string::npos);
    CHECK(msg.find("column") != std::string::npos);
  }
}

TEST_CASE("save then load is the identity, extras included") {
  TempDir dir("coeff");
  auto seq = test::random_sequence(7, 11, 3);
  seq.fps = 25.0;
  save_coefficient_sequence(seq, dir / "a.csv");
  const auto back = load_coefficient_sequence(dir / "a.csv");
  REQUIRE(back.size() == seq.size());
  CHECK(back.fps == 25.0);
  for (std::size_t t = 0; t < seq.size(); ++t) {
    CHECK((back.frames[t].beta - seq.frames[t].beta).cwiseAbs().maxCoeff() <= 1e-12);
    CHECK((back.frames[t].pose - seq.frames[t].pose).cwiseAbs().maxCoeff() <= 1e-12);
    CHECK((back.frames[t].extra - seq.frames[t].extra).cwiseAbs().maxCoeff() <= 1e-12);
  }
  save_coefficient_sequence(back, dir / "b.csv");
  CHECK(load_coefficient_sequence(dir / "b.csv") == back);
}

TEST_CASE("extra columns follow the pose columns") {
  TempDir dir("coeff");
  save_coefficient_sequence(test::random_sequence(2, 3, 2), dir / "x.csv");
  const std::string text = test::read_file(dir / "x.csv");
  const auto pose_pos = text.find("pose_5");
  const auto extra_pos = text.find("extra_0");
  REQUIRE(pose_pos != std::string::npos);
  REQUIRE(extra_pos != std::string::npos);
  CHECK(pose_pos < extra_pos);
}

TEST_CASE("empty sequence cannot be saved") {
  TempDir dir("coeff");
  CHECK_THROWS_WITH_AS(save_coefficient_sequence(CoefficientSequence{}, dir / "e.csv"),
                       doctest::Contains("empty sequence"), Error);
}

TEST_CASE("frame deltas") {
  SUBCASE("constant sequence has zero deltas") {
    CoefficientSequence seq;
    CoefficientFrame f;
    f.beta.setConstant(0.3);
    f.pose.setConstant(-0.1);
    seq.frames.assign(5, f);
    for (const auto& d : frame_delta(seq)) {
      CHECK(d.beta.isZero(0.0));
      CHECK(d.pose.isZero(0.0));
    }
  }
  SUBCASE("linear ramp has constant delta c") {
    ExpressionVector c;
    for (int i = 0; i < kExpressionDim; ++i) c[i] = 0.01 * (i - 32);
    CoefficientSequence seq;
    for (int t = 0; t < 6; ++t) {
      CoefficientFrame f;
      f.beta = t * c;
      seq.frames.push_back(f);
    }
    for (const auto& d : frame_delta(seq)) CHECK((d.beta - c).cwiseAbs().maxCoeff() <= 1e-15);
  }
  SUBCASE("length one is an error") {
    CoefficientSequence seq;
    seq.frames.resize(1);
    CHECK_THROWS_AS(frame_delta(seq), Error);
  }
}

TEST_CASE("cumulative deltas reconstruct the sequence") {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const auto seq = test::random_sequence(20, seed);
    const auto deltas = frame_delta(seq);
    ExpressionVector beta = seq.frames[0].beta;
    PoseVector pose = seq.frames[0].pose;
    for (std::size_t t = 0; t < deltas.size(); ++t) {
      beta += deltas[t].beta;
      pose += deltas[t].pose;
      CHECK((beta - seq.frames[t + 1].beta).cwiseAbs().maxCoeff() <= 1e-9);
      CHECK((pose - seq.frames[t + 1].pose).cwiseAbs().maxCoeff() <= 1e-9);
    }
  }
}

TEST_CASE("motion matrix packs beta then pose") {
  const auto seq = test::random_sequence(4, 9);
  const Matrix m = to_motion_matrix(seq);
  REQUIRE(m.rows() == kMotionDim);
  REQUIRE(m.cols() == 4);
  CHECK(m(kExpressionDim + 2, 3) == seq.frames[3].pose[2]);
  const auto back = from_motion_matrix(m, seq.fps);
  for (std::size_t t = 0; t < 4; ++t) CHECK(back.frames[t].beta == seq.frames[t].beta);
}

TEST_CASE("validate rejects non-finite values and ragged extras") {
  auto seq = test::random_sequence(3, 1, 2);
  seq.frames[1].extra = Vector(1);
  CHECK_THROWS_AS(validate(seq), Error);
  seq = test::random_sequence(3, 1);
  seq.frames[2].pose[0] = std::nan("");
  CHECK_THROWS_AS(validate(seq), Error);
}

}  // TEST_SUITE
