#include <doctest.h>

#include <random>

#include "cosyn/chunk.hpp"
#include "cosyn/resample.hpp"
#include "cosyn/sequence.hpp"
#include "test_util.hpp"

using namespace cosyn;

TEST_CASE("anchor_resample: constant unchanged") {
  Mat seq = Mat::Constant(20, 3, 4.2);
  Mat out = anchor_resample(seq);
  CHECK((out - seq).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("anchor_resample: linear ramp reproduced") {
  Mat seq(17, 2);
  for (int t = 0; t < 17; ++t) seq.row(t) = Eigen::RowVector2d(2.0 * t - 1.0, -0.5 * t + 3.0);
  Mat out = anchor_resample(seq);
  CHECK((out - seq).cwiseAbs().maxCoeff() < 1e-9);
}

TEST_CASE("anchor_resample: anchors exact, spike between anchors removed") {
  std::mt19937_64 rng(11);
  Mat seq = testutil::random_mat(16, 1, rng);
  Mat spiked = seq;
  spiked(7, 0) += 100.0;  // frame 7 is not an anchor (anchors at 0,3,6,9,12,15)
  Mat out = anchor_resample(spiked);
  for (int a = 0; a < 16; a += 3) CHECK(out(a, 0) == spiked(a, 0));
  // Value at the spike equals the Catmull-Rom prediction from the anchors.
  auto cr = [](double p0, double p1, double p2, double p3, double s) {
    double s2 = s * s, s3 = s2 * s;
    return 0.5 * (2 * p1 + (-p0 + p2) * s + (2 * p0 - 5 * p1 + 4 * p2 - p3) * s2 +
                  (-p0 + 3 * p1 - 3 * p2 + p3) * s3);
  };
  double expect = cr(seq(3, 0), seq(6, 0), seq(9, 0), seq(12, 0), 1.0 / 3.0);
  CHECK(out(7, 0) == doctest::Approx(expect).epsilon(1e-12));
}

TEST_CASE("anchor_resample: too short raises") {
  Mat seq = Mat::Zero(9, 1);  // anchors 0,3,6 -> only 3
  CHECK_THROWS_AS((void)anchor_resample(seq), TooShort);
}

static MotionSample make_sample(int frames) {
  MotionSample s;
  s.face.positions = PointSeq(frames, 4);
  s.pose.positions = PointSeq(frames, 3);
  for (int t = 0; t < frames; ++t) {
    s.face.positions.data.row(t).setConstant(t);
    s.pose.positions.data.row(t).setConstant(-t);
  }
  s.audio.samples.assign(static_cast<size_t>(frames * 16000 / 15), 0.0);
  return s;
}

TEST_CASE("chunk: exact single window") {
  auto w = chunk(make_sample(34), 34, 4, 34);
  REQUIRE(w.size() == 1);
  CHECK(w[0].face.frames() == 34);
  CHECK(w[0].seed_frames == 4);
}

TEST_CASE("chunk: stride 34 over 102 frames") {
  auto w = chunk(make_sample(102), 34, 4, 34);
  REQUIRE(w.size() == 3);
  for (int i = 0; i < 3; ++i) CHECK(w[i].face.positions.data(0, 0) == doctest::Approx(34.0 * i));
}

TEST_CASE("chunk: stride 10 over 100 frames drops the remainder") {
  auto w = chunk(make_sample(100), 34, 4, 10);
  REQUIRE(w.size() == 7);
  for (int i = 0; i < 7; ++i) CHECK(w[i].face.positions.data(0, 0) == doctest::Approx(10.0 * i));
}

TEST_CASE("chunk: too short raises") {
  CHECK_THROWS_AS((void)chunk(make_sample(33), 34, 4, 10), TooShort);
}

TEST_CASE("face deltas: round trip and constant offset") {
  std::mt19937_64 rng(21);
  ReferenceFace ref{testutil::random_cloud(5, rng)};
  FaceLandmarkSequence seq;
  seq.positions = PointSeq(3, 5);
  for (int t = 0; t < 3; ++t)
    seq.positions.set_frame(t, ref.positions + Eigen::RowVector3d(0, 0, 2.0).replicate(5, 1));
  auto d = face_to_deltas(seq, ref);
  for (int t = 0; t < 3; ++t)
    for (int n = 0; n < 5; ++n) CHECK((d.deltas.at(t, n) - Vec3(0, 0, 2)).norm() < 1e-12);
  auto back = deltas_to_face(d, ref);
  CHECK((back.positions.data - seq.positions.data).cwiseAbs().maxCoeff() == 0.0);

  // Identical to ref -> zero deltas.
  FaceLandmarkSequence flat;
  flat.positions = PointSeq(2, 5);
  for (int t = 0; t < 2; ++t) flat.positions.set_frame(t, ref.positions);
  CHECK(face_to_deltas(flat, ref).deltas.data.cwiseAbs().maxCoeff() == 0.0);
}

static Skeleton chain3() {
  Skeleton s;
  s.joint_count = 3;
  s.parent_index = {-1, 0, 1};
  s.bone_lengths = {100.0, 50.0};
  return s;
}

TEST_CASE("pose_to_units: T-pose chain along +x") {
  Skeleton skel = chain3();
  PoseJointSequence pose;
  pose.positions = PointSeq(2, 3);
  for (int t = 0; t < 2; ++t) {
    pose.positions.set(t, 0, Vec3::Zero());
    pose.positions.set(t, 1, Vec3(100, 0, 0));
    pose.positions.set(t, 2, Vec3(150, 0, 0));
  }
  auto u = pose_to_units(pose, skel);
  for (int t = 0; t < 2; ++t)
    for (int b = 0; b < 2; ++b) CHECK((u.vectors.at(t, b) - Vec3(1, 0, 0)).norm() < 1e-12);
}

TEST_CASE("units_to_pose: chain with unit z directions") {
  Skeleton skel = chain3();
  PoseUnitSequence u;
  u.vectors = PointSeq(1, 2);
  u.vectors.set(0, 0, Vec3(0, 0, 1));
  u.vectors.set(0, 1, Vec3(0, 0, 1));
  auto p = units_to_pose(u, skel);
  CHECK((p.positions.at(0, 1) - Vec3(0, 0, 100)).norm() < 1e-12);
  CHECK((p.positions.at(0, 2) - Vec3(0, 0, 150)).norm() < 1e-12);

  // Un-normalized input gives the identical pose (only direction matters).
  u.vectors.set(0, 0, Vec3(0, 0, 5));
  u.vectors.set(0, 1, Vec3(0, 0, 5));
  auto p2 = units_to_pose(u, skel);
  CHECK((p2.positions.data - p.positions.data).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("pose/unit round trips") {
  std::mt19937_64 rng(31);
  Skeleton skel;
  skel.joint_count = 5;
  skel.parent_index = {-1, 0, 1, 1, 3};
  skel.bone_lengths = {120.0, 80.0, 90.0, 60.0};

  // Random unit sequence -> pose -> units is the identity.
  PoseUnitSequence u;
  u.vectors = PointSeq(6, 4);
  std::uniform_real_distribution<double> uni(-1.0, 1.0);
  for (int t = 0; t < 6; ++t)
    for (int b = 0; b < 4; ++b) {
      Vec3 v(uni(rng), uni(rng), uni(rng));
      u.vectors.set(t, b, v.normalized());
    }
  auto pose = units_to_pose(u, skel);
  // Root at origin and bone lengths respected.
  for (int t = 0; t < 6; ++t) {
    CHECK(pose.positions.at(t, 0).norm() < 1e-12);
    for (int j = 1; j < 5; ++j) {
      double len = (pose.positions.at(t, j) - pose.positions.at(t, skel.parent_index[j])).norm();
      CHECK(len == doctest::Approx(skel.bone_lengths[j - 1]).epsilon(1e-9));
    }
  }
  auto u2 = pose_to_units(pose, skel);
  CHECK((u2.vectors.data - u.vectors.data).cwiseAbs().maxCoeff() < 1e-9);

  // Bone lengths deviating from the skeleton snap back on the round trip.
  PoseJointSequence stretched = pose;
  stretched.positions.data.rightCols(stretched.positions.data.cols() - 3) *= 1.5;
  auto snapped = units_to_pose(pose_to_units(stretched, skel), skel);
  for (int j = 1; j < 5; ++j) {
    double len = (snapped.positions.at(0, j) - snapped.positions.at(0, skel.parent_index[j])).norm();
    CHECK(len == doctest::Approx(skel.bone_lengths[j - 1]).epsilon(1e-9));
  }
}

TEST_CASE("pose_to_units: zero bone raises") {
  Skeleton skel = chain3();
  PoseJointSequence pose;
  pose.positions = PointSeq(1, 3);
  pose.positions.set(0, 1, Vec3(100, 0, 0));
  pose.positions.set(0, 2, Vec3(100, 0, 0));  // coincides with its parent
  CHECK_THROWS_AS((void)pose_to_units(pose, skel), ZeroBone);
}

TEST_CASE("scale_to_unit_bbox") {
  PointSeq cube(1, 8);
  int i = 0;
  for (int x : {0, 1})
    for (int y : {0, 1})
      for (int z : {0, 1}) cube.set(0, i++, Vec3(x, y, z) * (2000.0 / std::sqrt(3.0)));
  std::vector<PointSeq> v{cube};
  CHECK(scale_to_unit_bbox(v) == doctest::Approx(0.5).epsilon(1e-12));

  // Already at 1000 mm diagonal -> scale 1, unchanged.
  std::vector<PointSeq> w{v[0]};
  Mat before = w[0].data;
  CHECK(scale_to_unit_bbox(w) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK((w[0].data - before).cwiseAbs().maxCoeff() < 1e-9);

  // Two clouds with union diagonal 400 mm -> scale 2.5, recheck diagonal.
  PointSeq a(1, 1), b(1, 1);
  a.set(0, 0, Vec3::Zero());
  b.set(0, 0, Vec3(400.0 / std::sqrt(3.0), 400.0 / std::sqrt(3.0), 400.0 / std::sqrt(3.0)));
  std::vector<PointSeq> pair{a, b};
  CHECK(scale_to_unit_bbox(pair) == doctest::Approx(2.5).epsilon(1e-9));
  double diag = (pair[1].at(0, 0) - pair[0].at(0, 0)).norm();
  CHECK(diag == doctest::Approx(1000.0).epsilon(1e-9));

  std::vector<PointSeq> degenerate{PointSeq(1, 2)};
  CHECK_THROWS_AS((void)scale_to_unit_bbox(degenerate), DegenerateExtent);
}
