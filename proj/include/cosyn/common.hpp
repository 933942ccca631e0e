#pragma once

#include <Eigen/Dense>
#include <stdexcept>
#include <string>
#include <vector>

namespace cosyn {

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;
using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

#define COSYN_DEFINE_ERROR(NAME) \
  struct NAME : Error {          \
    using Error::Error;          \
  }

COSYN_DEFINE_ERROR(DegenerateConfiguration);
COSYN_DEFINE_ERROR(ShapeMismatch);
COSYN_DEFINE_ERROR(TooShort);
COSYN_DEFINE_ERROR(TooShortAudio);
COSYN_DEFINE_ERROR(ZeroBone);
COSYN_DEFINE_ERROR(ZeroVector);
COSYN_DEFINE_ERROR(DegenerateExtent);
COSYN_DEFINE_ERROR(EmptyComponent);
COSYN_DEFINE_ERROR(NotOneHot);
COSYN_DEFINE_ERROR(DomainError);
COSYN_DEFINE_ERROR(SameSpeaker);
COSYN_DEFINE_ERROR(NonPsd);
COSYN_DEFINE_ERROR(SingularCovariance);
COSYN_DEFINE_ERROR(EmptyCorpus);
COSYN_DEFINE_ERROR(EmptySplit);
COSYN_DEFINE_ERROR(IndexOverlap);
COSYN_DEFINE_ERROR(IoError);
COSYN_DEFINE_ERROR(PlanMismatch);
COSYN_DEFINE_ERROR(AmbiguousTwist);

#undef COSYN_DEFINE_ERROR

// A T x N x 3 point sequence stored as a T x 3N matrix, one frame per row,
// columns grouped as (x,y,z) per point. Matches the row-major on-disk layout.
struct PointSeq {
  Mat data;

  PointSeq() = default;
  PointSeq(int frames, int points) : data(Mat::Zero(frames, 3 * points)) {}
  explicit PointSeq(Mat m) : data(std::move(m)) {}

  int frames() const { return static_cast<int>(data.rows()); }
  int points() const { return static_cast<int>(data.cols()) / 3; }

  Vec3 at(int t, int n) const { return data.block<1, 3>(t, 3 * n).transpose(); }
  void set(int t, int n, const Vec3& v) { data.block<1, 3>(t, 3 * n) = v.transpose(); }

  // One frame as an N x 3 matrix.
  Eigen::MatrixX3d frame(int t) const {
    Eigen::MatrixX3d f(points(), 3);
    for (int n = 0; n < points(); ++n) f.row(n) = at(t, n).transpose();
    return f;
  }
  void set_frame(int t, const Eigen::MatrixX3d& f) {
    for (int n = 0; n < static_cast<int>(f.rows()); ++n) set(t, n, f.row(n).transpose());
  }
};

inline void require(bool cond, const std::string& msg) {
  if (!cond) throw Error(msg);
}

}  // namespace cosyn
