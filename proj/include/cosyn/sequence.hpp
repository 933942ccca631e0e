#pragma once

#include <cmath>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "cosyn/common.hpp"

namespace cosyn {

struct FaceLandmarkSequence {
  PointSeq positions;  // T x L x 3, mm
  double frame_rate = 15.0;

  int frames() const { return positions.frames(); }
  int landmarks() const { return positions.points(); }
};

struct ReferenceFace {
  Eigen::MatrixX3d positions;  // L x 3, mm
  int landmarks() const { return static_cast<int>(positions.rows()); }
};

struct FaceDeltaSequence {
  PointSeq deltas;  // T x L x 3, mm
  int frames() const { return deltas.frames(); }
  int landmarks() const { return deltas.points(); }
};

struct Skeleton {
  int joint_count = 0;
  std::vector<int> parent_index;       // parent_index[0] == -1 (root)
  std::vector<double> bone_lengths;    // bone b spans parent_index[b+1] -> b+1, mm

  int bones() const { return joint_count - 1; }

  void validate() const {
    require(joint_count >= 2, "Skeleton: need at least 2 joints");
    require(static_cast<int>(parent_index.size()) == joint_count, "Skeleton: parent list size");
    require(static_cast<int>(bone_lengths.size()) == joint_count - 1, "Skeleton: bone length count");
    require(parent_index[0] == -1, "Skeleton: joint 0 must be the root");
    for (int j = 1; j < joint_count; ++j)
      require(parent_index[j] >= 0 && parent_index[j] < j, "Skeleton: parents must precede children");
    for (double l : bone_lengths) require(l > 0.0, "Skeleton: bone lengths must be positive");
  }
};

struct PoseJointSequence {
  PointSeq positions;  // T x J x 3, mm; root at the origin every frame
  double frame_rate = 15.0;

  int frames() const { return positions.frames(); }
  int joints() const { return positions.points(); }
};

struct PoseUnitSequence {
  PointSeq vectors;  // T x (J-1) x 3, unit norm
  int frames() const { return vectors.frames(); }
  int bones() const { return vectors.points(); }
};

struct WordSpan {
  std::string word;
  int start_frame = -1;  // -1 marks an unaligned word
  int end_frame = -1;
};

struct AudioClip {
  std::vector<double> samples;  // mono, [-1, 1]
  int sample_rate = 16000;
};

struct MotionSample {
  AudioClip audio;
  std::vector<WordSpan> transcript;
  int speaker = 0;
  int speaker_count = 1;
  FaceLandmarkSequence face;
  PoseJointSequence pose;
  int seed_frames = 0;  // leading frames flagged as seed context
};

inline FaceDeltaSequence face_to_deltas(const FaceLandmarkSequence& seq, const ReferenceFace& ref) {
  if (seq.landmarks() != ref.landmarks())
    throw ShapeMismatch("face_to_deltas: landmark counts differ");
  FaceDeltaSequence out;
  out.deltas.data = seq.positions.data;
  for (int t = 0; t < seq.frames(); ++t)
    out.deltas.set_frame(t, seq.positions.frame(t) - ref.positions);
  return out;
}

inline FaceLandmarkSequence deltas_to_face(const FaceDeltaSequence& d, const ReferenceFace& ref,
                                           double frame_rate = 15.0) {
  if (d.landmarks() != ref.landmarks())
    throw ShapeMismatch("deltas_to_face: landmark counts differ");
  FaceLandmarkSequence out;
  out.frame_rate = frame_rate;
  out.positions.data = d.deltas.data;
  for (int t = 0; t < d.frames(); ++t)
    out.positions.set_frame(t, d.deltas.frame(t) + ref.positions);
  return out;
}

inline PoseUnitSequence pose_to_units(const PoseJointSequence& seq, const Skeleton& skel) {
  skel.validate();
  if (seq.joints() != skel.joint_count)
    throw ShapeMismatch("pose_to_units: joint count mismatch");
  const int T = seq.frames();
  PoseUnitSequence out;
  out.vectors = PointSeq(T, skel.bones());
  for (int t = 0; t < T; ++t) {
    for (int b = 0; b < skel.bones(); ++b) {
      const int child = b + 1;
      const Vec3 d = seq.positions.at(t, child) - seq.positions.at(t, skel.parent_index[child]);
      const double norm = d.norm();
      if (norm <= 1e-9)
        throw ZeroBone("pose_to_units: zero bone at frame " + std::to_string(t) + ", bone " +
                       std::to_string(b));
      out.vectors.set(t, b, d / norm);
    }
  }
  return out;
}

inline PoseJointSequence units_to_pose(const PoseUnitSequence& units, const Skeleton& skel,
                                       double frame_rate = 15.0) {
  skel.validate();
  if (units.bones() != skel.bones())
    throw ShapeMismatch("units_to_pose: bone count mismatch");
  const int T = units.frames();
  PoseJointSequence out;
  out.frame_rate = frame_rate;
  out.positions = PointSeq(T, skel.joint_count);
  for (int t = 0; t < T; ++t) {
    out.positions.set(t, 0, Vec3::Zero());
    for (int j = 1; j < skel.joint_count; ++j) {
      Vec3 u = units.vectors.at(t, j - 1);
      const double norm = u.norm();
      require(norm > 1e-12, "units_to_pose: zero direction vector");
      // d_b = s_b + (|b|/|u|) u: only the direction of u matters.
      out.positions.set(t, j,
                        out.positions.at(t, skel.parent_index[j]) + skel.bone_lengths[j - 1] * u / norm);
    }
  }
  return out;
}

// One global scale so the union axis-aligned bounding box has a 1000 mm diagonal.
inline double scale_to_unit_bbox(std::vector<PointSeq>& samples) {
  require(!samples.empty(), "scale_to_unit_bbox: empty input");
  Vec3 lo = Vec3::Constant(std::numeric_limits<double>::infinity());
  Vec3 hi = -lo;
  for (const auto& s : samples) {
    for (int t = 0; t < s.frames(); ++t) {
      for (int n = 0; n < s.points(); ++n) {
        const Vec3 p = s.at(t, n);
        lo = lo.cwiseMin(p);
        hi = hi.cwiseMax(p);
      }
    }
  }
  const double diag = (hi - lo).norm();
  if (!(diag > 0.0)) throw DegenerateExtent("scale_to_unit_bbox: zero-diagonal bounding box");
  const double scale = 1000.0 / diag;
  for (auto& s : samples) s.data *= scale;
  return scale;
}

}  // namespace cosyn
