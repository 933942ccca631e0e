#pragma once

#include <random>

#include "cosyn/net.hpp"
#include "cosyn/trainer.hpp"
#include "test_util.hpp"

namespace cosyn::testutil {

// Miniature setup for network tests: all latent dims 4, L = 8, J = 5.
inline Skeleton mini_skeleton() {
  Skeleton s;
  s.joint_count = 5;
  s.parent_index = {-1, 0, 1, 1, 1};
  s.bone_lengths = {100.0, 80.0, 80.0, 60.0};
  return s;
}

inline ReferenceFace mini_face_template(unsigned seed = 7) {
  std::mt19937_64 rng(seed);
  return ReferenceFace{random_cloud(8, rng, 50.0)};
}

inline NetConfig mini_config(int speakers = 2) {
  NetConfig cfg;
  cfg.dims = DimensionPlan::miniature();
  cfg.landmarks = 8;
  cfg.joints = 5;
  cfg.speakers = speakers;
  cfg.embed_buckets = 16;
  cfg.embed_dim = 4;
  return cfg;
}

inline GraphSet mini_graphs(unsigned seed = 7) {
  ComponentPartition face_part{{0, 0, 1, 1, 2, 2, 3, 3}, 4};
  GraphSet g;
  auto tmpl = mini_face_template(seed);
  auto skel = mini_skeleton();
  g.face_partition = face_part;
  g.pose_partition = default_pose_partition(skel);
  g.face_landmark = build_face_landmark_graph(tmpl, face_part, 2);
  g.face_anatomy = build_face_anatomy_graph(face_part, 2);
  g.pose_bone = build_pose_graph(skel, 2);
  g.pose_anatomy = build_pose_anatomy_graph(2);
  g.face_plan = CollationPlan::from_partition(g.face_partition);
  g.pose_plan = CollationPlan::from_partition(g.pose_partition);
  return g;
}

inline Mat random_units(int frames, int bones, std::mt19937_64& rng) {
  Mat u(frames * bones, 3);
  std::uniform_real_distribution<double> uni(-1.0, 1.0);
  for (int r = 0; r < u.rows(); ++r) {
    Vec3 v;
    do {
      v = Vec3(uni(rng), uni(rng), uni(rng));
    } while (v.norm() < 1e-3);
    u.row(r) = v.normalized().transpose();
  }
  return u;
}

// Same random directions but in the frame-major PointSeq layout.
inline PoseUnitSequence random_unit_seq(int frames, int bones, std::mt19937_64& rng) {
  PoseUnitSequence seq;
  seq.vectors = PointSeq(detail::merge_stack(random_units(frames, bones, rng), frames, bones));
  return seq;
}

inline TrainWindow mini_window(const NetConfig& cfg, std::mt19937_64& rng, int speaker = 0) {
  TrainWindow w;
  w.speaker = speaker;
  w.mfcc = random_mat(cfg.window, cfg.mfcc_channels, rng);
  w.transcript = {{"hello", 0, 17}, {"world", 17, 34}};
  w.face_deltas = random_mat(cfg.window * cfg.landmarks, 3, rng, 5.0);
  w.pose_units = random_units(cfg.window, cfg.joints - 1, rng);
  return w;
}

inline TrainerContext mini_context(const NetConfig& cfg, unsigned seed = 7) {
  TrainerContext ctx;
  for (int k = 0; k < cfg.speakers; ++k) ctx.reference_faces.push_back(mini_face_template(seed + k));
  ctx.skeleton = mini_skeleton();
  ctx.fk = fk_matrix(ctx.skeleton);
  return ctx;
}

}  // namespace cosyn::testutil
