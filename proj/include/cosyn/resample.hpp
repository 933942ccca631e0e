#pragma once

#include <cmath>

#include "cosyn/common.hpp"

namespace cosyn {

namespace detail {

// Catmull-Rom basis at local parameter s for control points p0..p3 spanning p1->p2.
inline double catmull_rom(double p0, double p1, double p2, double p3, double s) {
  const double s2 = s * s, s3 = s2 * s;
  return 0.5 * ((2.0 * p1) + (-p0 + p2) * s + (2.0 * p0 - 5.0 * p1 + 4.0 * p2 - p3) * s2 +
                (-p0 + 3.0 * p1 - 3.0 * p2 + p3) * s3);
}

}  // namespace detail

// Keeps only anchor frames (every native/anchor-th frame) and re-fills the rest
// with Catmull-Rom interpolation per channel. Anchor frames pass through
// bit-exactly; frames past the last anchor evaluate the final segment's cubic.
inline Mat anchor_resample(const Mat& seq, double native_rate = 15.0, double anchor_rate = 5.0) {
  const int step_i = static_cast<int>(std::lround(native_rate / anchor_rate));
  require(step_i >= 1 && std::abs(native_rate - step_i * anchor_rate) < 1e-9,
          "anchor_resample: native rate must be an integer multiple of anchor rate");
  const int T = static_cast<int>(seq.rows());
  const int n_anchors = (T + step_i - 1) / step_i;
  if (n_anchors < 4) throw TooShort("anchor_resample: need at least 4 anchor frames");

  // Virtual anchors beyond either end are linearly extrapolated so the spline
  // reproduces affine signals exactly at the boundary segments.
  auto anchor_val = [&](int a, int c) -> double {
    if (a < 0) return 2.0 * seq(0, c) - seq(step_i, c);
    if (a > n_anchors - 1) return 2.0 * seq((n_anchors - 1) * step_i, c) - seq((n_anchors - 2) * step_i, c);
    return seq(a * step_i, c);
  };

  Mat out(T, seq.cols());
  for (int t = 0; t < T; ++t) {
    if (t % step_i == 0 && t / step_i < n_anchors) {
      out.row(t) = seq.row(t);
      continue;
    }
    int seg = t / step_i;
    double s = double(t - seg * step_i) / step_i;
    if (seg >= n_anchors - 1) {  // past the last anchor: extrapolate the last segment
      s += double(seg - (n_anchors - 2));
      seg = n_anchors - 2;
    }
    for (int c = 0; c < seq.cols(); ++c) {
      out(t, c) = detail::catmull_rom(anchor_val(seg - 1, c), anchor_val(seg, c),
                                      anchor_val(seg + 1, c), anchor_val(seg + 2, c), s);
    }
  }
  return out;
}

}  // namespace cosyn
