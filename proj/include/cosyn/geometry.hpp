#pragma once

#include <Eigen/Dense>
#include <Eigen/SVD>

#include "cosyn/common.hpp"
#include "cosyn/sequence.hpp"

namespace cosyn {

struct RigidTransform {
  Mat3 rotation = Mat3::Identity();
  Vec3 translation = Vec3::Zero();

  Vec3 apply(const Vec3& p) const { return rotation * p + translation; }

  Eigen::MatrixX3d apply(const Eigen::MatrixX3d& pts) const {
    return (pts * rotation.transpose()).rowwise() + translation.transpose();
  }
};

// Least-squares rigid alignment (rotation + translation, no scale) of source
// onto target, with the determinant correction that rejects reflections.
inline RigidTransform umeyama_fit(const Eigen::MatrixX3d& source, const Eigen::MatrixX3d& target) {
  if (source.rows() != target.rows())
    throw ShapeMismatch("umeyama_fit: point counts differ");
  const int n = static_cast<int>(source.rows());
  if (n < 3) throw DegenerateConfiguration("umeyama_fit: need at least 3 points");

  const Eigen::RowVector3d mu_s = source.colwise().mean();
  const Eigen::RowVector3d mu_t = target.colwise().mean();
  const Eigen::MatrixX3d cs = source.rowwise() - mu_s;
  const Eigen::MatrixX3d ct = target.rowwise() - mu_t;

  const Mat3 sigma = ct.transpose() * cs / double(n);
  Eigen::JacobiSVD<Mat3> svd(sigma, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const Vec3 sv = svd.singularValues();
  if (sv(1) <= 1e-12 * std::max(1.0, sv(0)))
    throw DegenerateConfiguration("umeyama_fit: centered source has rank < 2");

  Mat3 s = Mat3::Identity();
  if ((svd.matrixU() * svd.matrixV().transpose()).determinant() < 0) s(2, 2) = -1.0;

  RigidTransform out;
  out.rotation = svd.matrixU() * s * svd.matrixV().transpose();
  out.translation = mu_t.transpose() - out.rotation * mu_s.transpose();
  return out;
}

// Rigidly maps every frame onto the frame at reference_frame_index.
inline FaceLandmarkSequence view_normalize(const FaceLandmarkSequence& seq, int reference_frame_index = 0) {
  const int T = seq.positions.frames();
  require(reference_frame_index >= 0 && reference_frame_index < T,
          "view_normalize: reference frame out of range");
  const Eigen::MatrixX3d ref = seq.positions.frame(reference_frame_index);

  FaceLandmarkSequence out = seq;
  for (int t = 0; t < T; ++t) {
    if (t == reference_frame_index) continue;
    try {
      const RigidTransform rt = umeyama_fit(seq.positions.frame(t), ref);
      out.positions.set_frame(t, rt.apply(seq.positions.frame(t)));
    } catch (const DegenerateConfiguration& e) {
      throw DegenerateConfiguration("view_normalize: frame " + std::to_string(t) + ": " + e.what());
    }
  }
  return out;
}

}  // namespace cosyn
