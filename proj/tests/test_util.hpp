#pragma once

#include <random>

#include "cosyn/common.hpp"

namespace cosyn::testutil {

inline Mat3 random_rotation(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  Vec3 axis;
  do {
    axis = Vec3(u(rng), u(rng), u(rng));
  } while (axis.norm() < 1e-3);
  axis.normalize();
  std::uniform_real_distribution<double> ang(0.0, 2.0 * M_PI);
  return Eigen::AngleAxisd(ang(rng), axis).toRotationMatrix();
}

inline Eigen::MatrixX3d random_cloud(int n, std::mt19937_64& rng, double extent = 100.0) {
  std::uniform_real_distribution<double> u(-extent, extent);
  Eigen::MatrixX3d m(n, 3);
  for (int i = 0; i < n; ++i) m.row(i) = Eigen::RowVector3d(u(rng), u(rng), u(rng));
  return m;
}

inline Mat random_mat(int r, int c, std::mt19937_64& rng, double extent = 1.0) {
  std::uniform_real_distribution<double> u(-extent, extent);
  Mat m(r, c);
  for (int i = 0; i < r; ++i)
    for (int j = 0; j < c; ++j) m(i, j) = u(rng);
  return m;
}

}  // namespace cosyn::testutil
