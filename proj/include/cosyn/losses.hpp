#pragma once

#include "cosyn/autodiff.hpp"

namespace cosyn {

struct LossWeights {
  double lambda_vel = 0.1;
  double lambda_acc = 0.1;
  double lambda_csd = 0.1;
  double lambda_adv = 1.0;
  double csd_margin = 0.5;
};

// l1 terms reduce as mean over channel entries per frame, summed over frames;
// inputs are T x C matrices (per-frame flattened landmarks/joints).

inline ad::Var loss_phoneme(const ad::Var& lips_gt, const ad::Var& lips_syn) {
  if (lips_gt.rows() != lips_syn.rows() || lips_gt.cols() != lips_syn.cols())
    throw ShapeMismatch("loss_phoneme: shape mismatch");
  ad::Var pos = ad::l1(lips_gt, lips_syn);
  ad::Var vel = ad::l1(ad::time_diff(lips_gt), ad::time_diff(lips_syn));
  return ad::add(pos, vel);
}

struct ReconstructionInputs {
  ad::Var face_gt, face_syn;      // absolute landmark positions, T x 3L
  ad::Var pose_gt, pose_syn;      // absolute joint positions, T x 3J
  ad::Var deltas_gt, deltas_syn;  // face deltas, T x 3L
  ad::Var units_gt, units_syn;    // bone unit vectors, T x 3(J-1)
};

inline ad::Var loss_reconstruction(const ReconstructionInputs& in, const LossWeights& w) {
  ad::Var pos = ad::add(ad::l1(in.face_gt, in.face_syn), ad::l1(in.pose_gt, in.pose_syn));
  ad::Var vel = ad::add(ad::l1(in.deltas_gt, in.deltas_syn), ad::l1(in.units_gt, in.units_syn));
  ad::Var acc = ad::add(ad::l1(ad::time_diff(in.deltas_gt), ad::time_diff(in.deltas_syn)),
                        ad::l1(ad::time_diff(in.units_gt), ad::time_diff(in.units_syn)));
  return ad::add(pos, ad::add(ad::scale(vel, w.lambda_vel), ad::scale(acc, w.lambda_acc)));
}

// Mean absolute difference over all entries of both modalities.
inline ad::Var motion_distance(const ad::Var& face_a, const ad::Var& pose_a, const ad::Var& face_b,
                               const ad::Var& pose_b) {
  const double n = double(face_a.rows()) * face_a.cols() + double(pose_a.rows()) * pose_a.cols();
  return ad::scale(ad::add(ad::abs_sum(ad::sub(face_a, face_b)), ad::abs_sum(ad::sub(pose_a, pose_b))),
                   1.0 / n);
}

// Hinge ranking on precomputed distances: max(0, margin + d_same - d_other).
inline ad::Var csd_hinge(const ad::Var& d_same, const ad::Var& d_other, double margin) {
  ad::Var raw = ad::add(ad::sub(d_same, d_other), ad::Var::constant(Mat::Constant(1, 1, margin)));
  return ad::leaky_relu(raw, 0.0);
}

// Ranking loss pushing the matched-speaker synthesis closer to ground truth
// than a mismatched-speaker synthesis.
inline ad::Var loss_csd(const ad::Var& face_same, const ad::Var& pose_same, const ad::Var& face_other,
                        const ad::Var& pose_other, const ad::Var& face_gt, const ad::Var& pose_gt,
                        double margin) {
  ad::Var d_same = motion_distance(face_gt, pose_gt, face_same, pose_same);
  ad::Var d_other = motion_distance(face_gt, pose_gt, face_other, pose_other);
  return csd_hinge(d_same, d_other, margin);
}

namespace detail {

inline void check_probability(const ad::Var& c, const char* who) {
  const double v = c.scalar();
  if (!(v > 0.0 && v < 1.0)) throw DomainError(std::string(who) + ": probability outside (0,1)");
}

}  // namespace detail

// Non-saturating generator objective: -log c on synthesized samples.
inline ad::Var loss_adversarial_g(const ad::Var& c_on_synthesized) {
  detail::check_probability(c_on_synthesized, "loss_adversarial_g");
  return ad::scale(ad::log(c_on_synthesized), -1.0);
}

// L_Dis = -log(c_gt) - log(1 - c_sn).
inline ad::Var loss_adversarial_d(const ad::Var& c_on_gt, const ad::Var& c_on_synthesized) {
  detail::check_probability(c_on_gt, "loss_adversarial_d");
  detail::check_probability(c_on_synthesized, "loss_adversarial_d");
  ad::Var one_minus = ad::sub(ad::Var::constant(Mat::Ones(1, 1)), c_on_synthesized);
  return ad::sub(ad::scale(ad::log(c_on_gt), -1.0), ad::log(one_minus));
}

}  // namespace cosyn
