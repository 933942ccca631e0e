#pragma once

#include <nlohmann/json.hpp>
#include <random>
#include <vector>

#include "cosyn/adam.hpp"
#include "cosyn/layers.hpp"
#include "cosyn/sequence.hpp"

namespace cosyn {

// Table-1 column order: MALE, MAJE, MAcE-LM, MAcE-P, FLD, FGD.
struct MetricReport {
  double male_mm = 0;
  double maje_mm = 0;
  double mace_lm = 0;
  double mace_p = 0;
  double fld = 0;
  double fgd = 0;
  int sample_count = 0;
};

inline nlohmann::json report_to_json(const MetricReport& r) {
  return {{"male_mm", r.male_mm}, {"maje_mm", r.maje_mm}, {"mace_lm", r.mace_lm},
          {"mace_p", r.mace_p},   {"fld", r.fld},         {"fgd", r.fgd},
          {"sample_count", r.sample_count}};
}

inline std::string report_to_csv(const MetricReport& r) {
  std::ostringstream os;
  os.precision(12);
  os << "male_mm,maje_mm,mace_lm,mace_p,fld,fgd\n"
     << r.male_mm << ',' << r.maje_mm << ',' << r.mace_lm << ',' << r.mace_p << ',' << r.fld << ','
     << r.fgd << '\n';
  return os.str();
}

namespace detail {

inline void check_corpus_pair(const std::vector<PointSeq>& gt, const std::vector<PointSeq>& syn) {
  require(gt.size() == syn.size(), "metrics: corpus size mismatch");
  for (size_t i = 0; i < gt.size(); ++i)
    if (gt[i].data.rows() != syn[i].data.rows() || gt[i].data.cols() != syn[i].data.cols())
      throw ShapeMismatch("metrics: window " + std::to_string(i) + " shape mismatch");
}

}  // namespace detail

// Mean per-point Euclidean error over all samples, frames and points, in the
// input unit (mm after scale_to_unit_bbox).
inline double mean_absolute_error(const std::vector<PointSeq>& gt,
                                  const std::vector<PointSeq>& syn) {
  detail::check_corpus_pair(gt, syn);
  double acc = 0;
  long count = 0;
  for (size_t i = 0; i < gt.size(); ++i) {
    const int T = gt[i].frames(), N = gt[i].points();
    for (int t = 0; t < T; ++t)
      for (int n = 0; n < N; ++n) acc += (gt[i].at(t, n) - syn[i].at(t, n)).norm();
    count += static_cast<long>(T) * N;
  }
  require(count > 0, "metrics: empty corpus");
  return acc / count;
}

inline double male(const std::vector<PointSeq>& gt_faces, const std::vector<PointSeq>& syn_faces) {
  return mean_absolute_error(gt_faces, syn_faces);
}
inline double maje(const std::vector<PointSeq>& gt_poses, const std::vector<PointSeq>& syn_poses) {
  return mean_absolute_error(gt_poses, syn_poses);
}

// Second discrete difference of positions scaled by frame_rate^2 (mm/s^2),
// mean Euclidean error of the acceleration vectors.
inline double mace(const std::vector<PointSeq>& gt, const std::vector<PointSeq>& syn,
                   double frame_rate = 15.0) {
  detail::check_corpus_pair(gt, syn);
  const double fr2 = frame_rate * frame_rate;
  double acc = 0;
  long count = 0;
  for (size_t i = 0; i < gt.size(); ++i) {
    const int T = gt[i].frames(), N = gt[i].points();
    if (T < 3) throw TooShort("mace: window " + std::to_string(i) + " has fewer than 3 frames");
    for (int t = 1; t + 1 < T; ++t)
      for (int n = 0; n < N; ++n) {
        const Vec3 a_gt = (gt[i].at(t + 1, n) - 2.0 * gt[i].at(t, n) + gt[i].at(t - 1, n)) * fr2;
        const Vec3 a_sn = (syn[i].at(t + 1, n) - 2.0 * syn[i].at(t, n) + syn[i].at(t - 1, n)) * fr2;
        acc += (a_gt - a_sn).norm();
      }
    count += static_cast<long>(T - 2) * N;
  }
  require(count > 0, "mace: empty corpus");
  return acc / count;
}

struct FeatureGaussian {
  Vec mean;
  Mat covariance;

  void validate() const {
    require(covariance.rows() == covariance.cols(), "FeatureGaussian: covariance not square");
    require(covariance.rows() == mean.size(), "FeatureGaussian: dim mismatch");
    const double asym = (covariance - covariance.transpose()).cwiseAbs().maxCoeff();
    require(asym <= 1e-9, "FeatureGaussian: covariance not symmetric");
    Eigen::SelfAdjointEigenSolver<Mat> es(covariance);
    if (es.eigenvalues().minCoeff() < -1e-9)
      throw NonPsd("FeatureGaussian: negative eigenvalue in covariance");
  }
};

// Gaussian fit to feature rows (one sample per row). Fewer samples than
// D_enc + 1 would make the sample covariance singular, so small corpora use a
// Ledoit-Wolf shrinkage estimate toward a scaled identity.
inline FeatureGaussian fit_gaussian(const Mat& features) {
  const int n = static_cast<int>(features.rows());
  const int d = static_cast<int>(features.cols());
  if (n < 2) throw SingularCovariance("fit_gaussian: needs at least 2 samples");
  FeatureGaussian g;
  g.mean = features.colwise().mean().transpose();
  Mat centered = features.rowwise() - g.mean.transpose();
  if (n >= d + 1) {
    g.covariance = centered.transpose() * centered / (n - 1);
  } else {
    // Ledoit-Wolf (2004) well-conditioned estimator.
    Mat s = centered.transpose() * centered / n;
    const double m = s.trace() / d;
    const double d2 = (s - m * Mat::Identity(d, d)).squaredNorm();
    double b2 = 0;
    for (int i = 0; i < n; ++i) {
      Mat outer = centered.row(i).transpose() * centered.row(i);
      b2 += (outer - s).squaredNorm();
    }
    b2 = std::min(b2 / (n * n), d2);
    const double rho = d2 > 0 ? b2 / d2 : 1.0;
    g.covariance = rho * m * Mat::Identity(d, d) + (1.0 - rho) * s;
  }
  g.covariance = 0.5 * (g.covariance + g.covariance.transpose());
  return g;
}

namespace detail {

// Symmetric PSD square root with tiny-negative clamping; throws NonPsd when
// the clamped mass exceeds the tolerance.
inline Mat psd_sqrt(const Mat& m, double tol = 1e-6) {
  Eigen::SelfAdjointEigenSolver<Mat> es(0.5 * (m + m.transpose()));
  Vec ev = es.eigenvalues();
  const double scale = std::max(1.0, ev.cwiseAbs().maxCoeff());
  for (int i = 0; i < ev.size(); ++i) {
    if (ev(i) < -tol * scale) throw NonPsd("psd_sqrt: eigenvalue " + std::to_string(ev(i)));
    ev(i) = std::sqrt(std::max(0.0, ev(i)));
  }
  return es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
}

}  // namespace detail

// ||mu1-mu2||^2 + Tr(S1 + S2 - 2 (S1 S2)^{1/2}), the Frechet distance between
// two Gaussians, computed through the symmetrized product
// S1^{1/2} S2 S1^{1/2}.
inline double frechet_gaussian_distance(const FeatureGaussian& g1, const FeatureGaussian& g2) {
  require(g1.mean.size() == g2.mean.size(), "frechet: dimension mismatch");
  g1.validate();
  g2.validate();
  const Mat s1_half = detail::psd_sqrt(g1.covariance);
  const Mat cross = detail::psd_sqrt(s1_half * g2.covariance * s1_half);
  const double d = (g1.mean - g2.mean).squaredNorm() + g1.covariance.trace() +
                   g2.covariance.trace() - 2.0 * cross.trace();
  return std::max(0.0, d);
}

// Temporal-convolutional autoencoder over flattened point channels. The
// encoder pools its conv features over time into a single D_enc vector; the
// decoder expands that vector back to the full T x C window.
class WindowAutoencoder {
 public:
  int frames = 0, channels = 0, feature_dim = 32, hidden = 64;
  ad::ParamStore params;

  WindowAutoencoder() = default;
  WindowAutoencoder(int t, int c, int d_enc, int h, std::mt19937_64& rng)
      : frames(t), channels(c), feature_dim(d_enc), hidden(h) {
    enc_conv0_ = nn::TemporalConv(params, "ae.enc0", channels, hidden, 3, rng);
    enc_conv1_ = nn::TemporalConv(params, "ae.enc1", hidden, hidden, 3, rng);
    enc_fc_ = nn::Linear(params, "ae.encfc", hidden, feature_dim, rng);
    dec_fc_ = nn::Linear(params, "ae.decfc", feature_dim, frames * hidden, rng);
    dec_conv_ = nn::TemporalConv(params, "ae.dec0", hidden, channels, 3, rng);
  }

  // window: T x C -> 1 x D_enc.
  ad::Var encode(const ad::Var& window) const {
    if (window.rows() != frames || window.cols() != channels)
      throw ShapeMismatch("autoencoder encode: window shape");
    ad::Var h = ad::leaky_relu(enc_conv0_(window, frames), 0.2);
    h = ad::leaky_relu(enc_conv1_(h, frames), 0.2);
    return enc_fc_(ad::mean_rows(h));
  }

  // 1 x D_enc -> T x C.
  ad::Var decode(const ad::Var& feature) const {
    ad::Var h = ad::leaky_relu(dec_fc_(feature), 0.2);
    // Unfold the single row into T rows of `hidden` channels.
    h = ad::split_nodes(h, frames);
    return dec_conv_(h, frames);
  }

  Vec encode_window(const PointSeq& w) const {
    return encode(ad::Var::constant(w.data)).val().row(0).transpose();
  }

 private:
  nn::TemporalConv enc_conv0_, enc_conv1_;
  nn::Linear enc_fc_;
  nn::Linear dec_fc_;
  nn::TemporalConv dec_conv_;
};

struct AutoencoderTrainResult {
  double final_train_l1 = 0;  // mean per-entry reconstruction l1
  double holdout_l1 = 0;
};

// Trains a WindowAutoencoder on the given corpus with Adam; reports the mean
// per-entry l1 reconstruction error on the training data and on an optional
// holdout set.
inline AutoencoderTrainResult train_autoencoder(WindowAutoencoder& ae,
                                                const std::vector<PointSeq>& train_set,
                                                const std::vector<PointSeq>& holdout,
                                                std::mt19937_64& rng, int epochs = 300,
                                                double lr = 1e-3, int batch_size = 16) {
  if (train_set.empty()) throw EmptyCorpus("train_autoencoder: empty corpus");
  for (const auto& w : train_set)
    if (w.data.rows() != ae.frames || w.data.cols() != ae.channels)
      throw ShapeMismatch("train_autoencoder: window shape");

  Adam adam(0.9, 0.999, 1e-8);
  std::vector<size_t> order(train_set.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;

  auto recon_l1 = [&](const PointSeq& w) {
    ad::Var out = ae.decode(ae.encode(ad::Var::constant(w.data)));
    return ad::scale(ad::abs_sum(ad::sub(out, ad::Var::constant(w.data))),
                     1.0 / (ae.frames * ae.channels));
  };

  AutoencoderTrainResult res;
  for (int epoch = 0; epoch < epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double acc = 0;
    for (size_t start = 0; start < order.size(); start += batch_size) {
      std::vector<ad::Var> terms;
      for (size_t i = start; i < order.size() && i < start + static_cast<size_t>(batch_size); ++i)
        terms.push_back(recon_l1(train_set[order[i]]));
      ad::Var total = terms[0];
      for (size_t i = 1; i < terms.size(); ++i) total = ad::add(total, terms[i]);
      total = ad::scale(total, 1.0 / terms.size());
      ad::backward(total);
      adam.step(ae.params, lr);
      acc += total.scalar() * terms.size();
    }
    res.final_train_l1 = acc / train_set.size();
  }
  if (!holdout.empty()) {
    double acc = 0;
    for (const auto& w : holdout) acc += recon_l1(w).scalar();
    res.holdout_l1 = acc / holdout.size();
  }
  return res;
}

// Encodes every window and fits a Gaussian to the feature rows.
inline FeatureGaussian corpus_gaussian(const std::vector<PointSeq>& corpus,
                                       const WindowAutoencoder& encoder) {
  if (corpus.empty()) throw EmptyCorpus("corpus_gaussian: empty corpus");
  Mat feats(static_cast<int>(corpus.size()), encoder.feature_dim);
  for (size_t i = 0; i < corpus.size(); ++i)
    feats.row(static_cast<int>(i)) = encoder.encode_window(corpus[i]).transpose();
  return fit_gaussian(feats);
}

// Frechet Landmark Distance / Frechet Gesture Distance: Frechet distance
// between Gaussians fitted to encoded features of the two corpora; the
// encoder must be trained on ground-truth data only.
inline double frechet_feature_distance(const std::vector<PointSeq>& gt,
                                       const std::vector<PointSeq>& syn,
                                       const WindowAutoencoder& encoder) {
  return frechet_gaussian_distance(corpus_gaussian(gt, encoder), corpus_gaussian(syn, encoder));
}

inline double fld(const std::vector<PointSeq>& gt_faces, const std::vector<PointSeq>& syn_faces,
                  const WindowAutoencoder& encoder) {
  return frechet_feature_distance(gt_faces, syn_faces, encoder);
}

inline double fgd(const std::vector<PointSeq>& gt_poses, const std::vector<PointSeq>& syn_poses,
                  const WindowAutoencoder& encoder) {
  return frechet_feature_distance(gt_poses, syn_poses, encoder);
}

}  // namespace cosyn
