#pragma once

#include <algorithm>
#include <map>
#include <random>
#include <vector>

#include "cosyn/adam.hpp"
#include "cosyn/losses.hpp"
#include "cosyn/net.hpp"

namespace cosyn {

// A fully prepared training window: everything the generator consumes, in
// network layout.
struct TrainWindow {
  Mat mfcc;                        // T x M
  std::vector<WordSpan> transcript;
  int speaker = 0;
  Mat face_deltas;                 // (T*L) x 3, mm, relative to the speaker's reference face
  Mat pose_units;                  // (T*(J-1)) x 3, unit rows
};

// Linear forward-kinematics map: merged units (T x 3(J-1)) * fk = merged
// joint positions (T x 3J), root at the origin.
inline Mat fk_matrix(const Skeleton& skel) {
  skel.validate();
  const int J = skel.joint_count;
  Mat fk = Mat::Zero(3 * (J - 1), 3 * J);
  for (int j = 1; j < J; ++j) {
    // Accumulate bone contributions along the path from the root to joint j.
    int cur = j;
    while (cur != 0) {
      const int b = cur - 1;
      for (int a = 0; a < 3; ++a) fk(3 * b + a, 3 * j + a) += skel.bone_lengths[b];
      cur = skel.parent_index[cur];
    }
  }
  return fk;
}

struct TrainerContext {
  std::vector<ReferenceFace> reference_faces;  // per speaker
  Skeleton skeleton;
  Mat fk;  // from fk_matrix

  const ReferenceFace& ref_for(int speaker) const {
    require(speaker >= 0 && speaker < static_cast<int>(reference_faces.size()),
            "TrainerContext: speaker out of range");
    return reference_faces[speaker];
  }

  Mat ref_row(int speaker) const {
    const auto& r = ref_for(speaker).positions;
    Mat row(1, 3 * r.rows());
    for (int l = 0; l < r.rows(); ++l) row.block(0, 3 * l, 1, 3) = r.row(l);
    return row;
  }
};

namespace detail {

struct GeneratorPass {
  ad::Var face_deltas_merged;  // T x 3L
  ad::Var pose_units_merged;   // T x 3(J-1)
  ad::Var face_raw, pose_raw;  // (T*N) x 3 stacks
};

inline GeneratorPass run_generator(const Generator& gen, const TrainWindow& w, int speaker,
                                   const Mat& noise) {
  const int T = gen.cfg.window, Ts = gen.cfg.seed;
  const int L = gen.cfg.landmarks, B = gen.cfg.joints - 1;
  ad::Var a = gen.encode_audio(ad::Var::constant(w.mfcc));
  ad::Var txt = gen.encode_text(w.transcript, T);
  ad::Var k = gen.sample_speaker(gen.encode_speaker(speaker), noise);
  ad::Var l = gen.encode_face(ad::Var::constant(Mat(w.face_deltas.topRows(Ts * L))));
  ad::Var v = gen.encode_pose(ad::Var::constant(Mat(w.pose_units.topRows(Ts * B))));
  ad::Var fused = gen.fuse(a, txt, k, l, v);
  GeneratorPass out;
  out.face_raw = gen.decode_face(fused);
  out.pose_raw = gen.decode_pose(fused);
  out.face_deltas_merged = ad::merge_nodes(out.face_raw, T, L);
  out.pose_units_merged = ad::merge_nodes(out.pose_raw, T, B);
  return out;
}

inline Mat merge_stack(const Mat& stack, int frames, int nodes) {
  const int d = static_cast<int>(stack.cols());
  Mat out(frames, nodes * d);
  for (int t = 0; t < frames; ++t)
    for (int n = 0; n < nodes; ++n) out.block(t, n * d, 1, d) = stack.row(t * nodes + n);
  return out;
}

}  // namespace detail

// One adversarial training step: a discriminator update on (ground truth,
// detached synthesized), then a generator update on
// L_Rec + lambda_csd * L_CSD + lambda_adv * L_G.
inline std::map<std::string, double> train_step(const std::vector<const TrainWindow*>& batch,
                                                Generator& gen, Discriminator& disc,
                                                const TrainerContext& ctx, const LossWeights& weights,
                                                Adam& gen_opt, Adam& disc_opt, double gen_lr,
                                                double disc_lr, std::mt19937_64& rng,
                                                bool use_discriminator = true) {
  require(!batch.empty(), "train_step: empty batch");
  const int T = gen.cfg.window;
  const int L = gen.cfg.landmarks, B = gen.cfg.joints - 1;
  const int K = gen.cfg.speakers;
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::uniform_int_distribution<int> pick_other(1, std::max(1, K - 1));

  // Draw per-sample randomness up front so the two phases see the same inputs.
  std::vector<Mat> noises;
  std::vector<int> other_speakers;
  for (const auto* w : batch) {
    Mat n(1, gen.cfg.dims.d_speaker);
    for (int c = 0; c < n.cols(); ++c) n(0, c) = gauss(rng);
    noises.push_back(n);
    if (weights.lambda_csd > 0.0) {
      if (K < 2) throw SameSpeaker("train_step: CSD loss needs at least 2 speakers");
      other_speakers.push_back((w->speaker + pick_other(rng)) % K);
    } else {
      other_speakers.push_back(w->speaker);
    }
  }

  std::map<std::string, double> log;

  // Phase 1: discriminator on ground truth vs detached synthesized motion.
  if (use_discriminator) {
    std::vector<ad::Var> d_losses;
    for (size_t i = 0; i < batch.size(); ++i) {
      const auto* w = batch[i];
      auto pass = detail::run_generator(gen, *w, w->speaker, noises[i]);
      ad::Var c_gt = disc.discriminate(ad::Var::constant(w->face_deltas),
                                       ad::Var::constant(w->pose_units));
      ad::Var c_sn = disc.discriminate(ad::Var::constant(pass.face_raw.val()),
                                       ad::Var::constant(pass.pose_raw.val()));
      d_losses.push_back(loss_adversarial_d(c_gt, c_sn));
    }
    ad::Var d_total = d_losses[0];
    for (size_t i = 1; i < d_losses.size(); ++i) d_total = ad::add(d_total, d_losses[i]);
    d_total = ad::scale(d_total, 1.0 / d_losses.size());
    ad::backward(d_total);
    disc_opt.step(disc.params, disc_lr);
    log["loss_d"] = d_total.scalar();
  }

  // Phase 2: generator.
  std::vector<ad::Var> g_terms;
  double rec_acc = 0, csd_acc = 0, adv_acc = 0;
  for (size_t i = 0; i < batch.size(); ++i) {
    const auto* w = batch[i];
    auto pass = detail::run_generator(gen, *w, w->speaker, noises[i]);

    const Mat ref = ctx.ref_row(w->speaker);
    const Mat gt_deltas = detail::merge_stack(w->face_deltas, T, L);
    const Mat gt_units = detail::merge_stack(w->pose_units, T, B);

    ReconstructionInputs rin;
    rin.deltas_gt = ad::Var::constant(gt_deltas);
    rin.deltas_syn = pass.face_deltas_merged;
    rin.units_gt = ad::Var::constant(gt_units);
    rin.units_syn = pass.pose_units_merged;
    rin.face_gt = ad::Var::constant(gt_deltas.rowwise() + Eigen::RowVectorXd(ref.row(0)));
    rin.face_syn = ad::add(pass.face_deltas_merged, ad::repeat_row(ad::Var::constant(ref), T));
    rin.pose_gt = ad::Var::constant(gt_units * ctx.fk);
    rin.pose_syn = ad::matmul(pass.pose_units_merged, ad::Var::constant(ctx.fk));
    ad::Var rec = loss_reconstruction(rin, weights);
    rec_acc += rec.scalar();
    ad::Var total = rec;

    if (weights.lambda_csd > 0.0) {
      auto other = detail::run_generator(gen, *w, other_speakers[i], noises[i]);
      ad::Var csd = loss_csd(pass.face_deltas_merged, pass.pose_units_merged,
                             other.face_deltas_merged, other.pose_units_merged,
                             rin.deltas_gt, rin.units_gt, weights.csd_margin);
      csd_acc += csd.scalar();
      total = ad::add(total, ad::scale(csd, weights.lambda_csd));
    }

    if (use_discriminator && weights.lambda_adv > 0.0) {
      ad::Var c_sn = disc.discriminate(pass.face_raw, pass.pose_raw);
      ad::Var adv = loss_adversarial_g(c_sn);
      adv_acc += adv.scalar();
      total = ad::add(total, ad::scale(adv, weights.lambda_adv));
    }
    g_terms.push_back(total);
  }
  ad::Var g_total = g_terms[0];
  for (size_t i = 1; i < g_terms.size(); ++i) g_total = ad::add(g_total, g_terms[i]);
  g_total = ad::scale(g_total, 1.0 / g_terms.size());
  ad::backward(g_total);
  gen_opt.step(gen.params, gen_lr);

  log["loss_rec"] = rec_acc / batch.size();
  log["loss_csd"] = csd_acc / batch.size();
  log["loss_g_adv"] = adv_acc / batch.size();
  log["loss_g_total"] = g_total.scalar();
  if (!use_discriminator) log["loss_d"] = 0.0;
  return log;
}

// Deterministic inference pass (zero speaker noise unless supplied).
struct SynthesisResult {
  Mat face_deltas;  // (T*L) x 3
  Mat pose_units;   // (T*(J-1)) x 3
};

inline SynthesisResult synthesize_window(const Generator& gen, const TrainWindow& w,
                                         const Mat* speaker_noise = nullptr) {
  Mat noise = speaker_noise ? *speaker_noise : Mat::Zero(1, gen.cfg.dims.d_speaker);
  auto pass = detail::run_generator(gen, w, w.speaker, noise);
  SynthesisResult out{pass.face_raw.val(), pass.pose_raw.val()};
  // Degenerate raw directions fall back to the last seed frame's direction.
  const int B = gen.cfg.joints - 1;
  for (int t = 0; t < gen.cfg.window; ++t)
    for (int b = 0; b < B; ++b)
      if (out.pose_units.row(t * B + b).norm() < 1e-12)
        out.pose_units.row(t * B + b) = w.pose_units.row((gen.cfg.seed - 1) * B + b);
  return out;
}

// Mean per-point Euclidean error between two (T*N) x 3 stacks.
inline double mean_point_error(const Mat& a, const Mat& b) {
  require(a.rows() == b.rows() && a.cols() == b.cols(), "mean_point_error: shape mismatch");
  double acc = 0;
  for (int r = 0; r < a.rows(); ++r) acc += (a.row(r) - b.row(r)).norm();
  return acc / a.rows();
}

// Phoneme predictor training: minimizes loss_phoneme over (spectrogram, lip)
// pairs; returns the epoch whose validation loss was best, with the best
// parameters left in the predictor.
struct PhonemeSample {
  Mat spectrogram;  // T x mel_channels
  Mat lips_merged;  // T x 3*L_lip
};

inline double phoneme_epoch_loss(const PhonemePredictor& net, const std::vector<PhonemeSample>& set) {
  double acc = 0;
  for (const auto& s : set) {
    ad::Var pred = net.predict(ad::Var::constant(s.spectrogram));
    ad::Var merged = ad::merge_nodes(pred, net.window, net.lip_landmarks);
    acc += loss_phoneme(ad::Var::constant(s.lips_merged), merged).scalar();
  }
  return acc / set.size();
}

inline int train_phoneme(std::vector<PhonemeSample> train_set, const std::vector<PhonemeSample>& val_set,
                         PhonemePredictor& net, const OptimizerConfig& opt, std::mt19937_64& rng,
                         int epochs_override = -1,
                         const std::function<void(int, double, double)>& on_epoch = nullptr) {
  if (train_set.empty()) throw EmptyCorpus("train_phoneme: empty corpus");
  Adam adam(opt.beta1, opt.beta2, opt.epsilon);
  const int epochs = epochs_override > 0 ? epochs_override : opt.phoneme_epochs;

  std::map<std::string, Mat> best;
  double best_val = std::numeric_limits<double>::infinity();
  int best_epoch = -1;

  std::vector<size_t> order(train_set.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;

  for (int epoch = 0; epoch < epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double train_loss = 0;
    for (size_t start = 0; start < order.size(); start += opt.phoneme_batch_size) {
      std::vector<ad::Var> terms;
      for (size_t i = start; i < order.size() && i < start + opt.phoneme_batch_size; ++i) {
        const auto& s = train_set[order[i]];
        ad::Var pred = net.predict(ad::Var::constant(s.spectrogram));
        ad::Var merged = ad::merge_nodes(pred, net.window, net.lip_landmarks);
        terms.push_back(loss_phoneme(ad::Var::constant(s.lips_merged), merged));
      }
      ad::Var total = terms[0];
      for (size_t i = 1; i < terms.size(); ++i) total = ad::add(total, terms[i]);
      total = ad::scale(total, 1.0 / terms.size());
      ad::backward(total);
      adam.step(net.params, opt.phoneme_lr);
      train_loss += total.scalar() * terms.size();
    }
    train_loss /= train_set.size();

    const double val_loss = val_set.empty() ? train_loss : phoneme_epoch_loss(net, val_set);
    if (val_loss < best_val) {
      best_val = val_loss;
      best_epoch = epoch;
      best.clear();
      for (const auto& [name, p] : net.params.params) best[name] = p.val();
    }
    if (on_epoch) on_epoch(epoch, train_loss, val_loss);
  }
  for (auto& [name, m] : best) net.params.params.at(name).mutable_val() = m;
  return best_epoch;
}

}  // namespace cosyn
