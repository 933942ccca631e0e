#include <doctest.h>

#include <random>

#include "cosyn/checkpoint.hpp"
#include "cosyn/net.hpp"
#include "fixtures.hpp"
#include "gradcheck.hpp"

using namespace cosyn;
using ad::Var;

TEST_CASE("dimension plan: fused width is the sum") {
  DimensionPlan p;
  CHECK(p.fused() == p.d_audio + p.d_text + p.d_speaker + p.d_face_latent + p.d_pose_latent);
  auto m = DimensionPlan::miniature();
  CHECK(m.fused() == 20);
}

TEST_CASE("generator: full forward pass shapes and finiteness") {
  std::mt19937_64 rng(81);
  auto cfg = testutil::mini_config();
  auto graphs = testutil::mini_graphs();
  Generator gen(cfg, graphs, rng);
  auto w = testutil::mini_window(cfg, rng);
  Mat face_seed = w.face_deltas.topRows(cfg.seed * cfg.landmarks);
  Mat pose_seed = w.pose_units.topRows(cfg.seed * (cfg.joints - 1));
  auto out = gen.forward(w.mfcc, w.transcript, 0, face_seed, pose_seed,
                         Mat::Zero(1, cfg.dims.d_speaker));
  CHECK(out.face_deltas.rows() == 34 * 8);
  CHECK(out.face_deltas.cols() == 3);
  CHECK(out.pose_units.rows() == 34 * 4);
  CHECK(out.face_deltas.val().allFinite());
  CHECK(out.pose_units.val().allFinite());
  for (int r = 0; r < out.pose_units.rows(); ++r)
    CHECK(out.pose_units.val().row(r).norm() == doctest::Approx(1.0).epsilon(1e-6));
}

TEST_CASE("encode_audio: shape, constant on zero input") {
  std::mt19937_64 rng(82);
  auto cfg = testutil::mini_config();
  Generator gen(cfg, testutil::mini_graphs(), rng);
  Var e = gen.encode_audio(Var::constant(Mat::Zero(34, cfg.mfcc_channels)));
  CHECK(e.rows() == 34);
  CHECK(e.cols() == cfg.dims.d_audio);
  // Zero input with zero-initialized biases: constant (zero) over time.
  for (int t = 1; t < 34; ++t)
    CHECK((e.val().row(t) - e.val().row(0)).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("encode_text: empty transcript constant, shifted word shifts output") {
  std::mt19937_64 rng(83);
  auto cfg = testutil::mini_config();
  Generator gen(cfg, testutil::mini_graphs(), rng);
  Var empty = gen.encode_text({}, 34);
  CHECK(empty.rows() == 34);
  CHECK(empty.cols() == cfg.dims.d_text);
  // Constant input: interior frames (away from the zero-padded conv boundary,
  // receptive radius 2) produce identical rows.
  for (int t = 3; t < 32; ++t)
    CHECK((empty.val().row(t) - empty.val().row(2)).cwiseAbs().maxCoeff() < 1e-12);

  Var e1 = gen.encode_text({{"sun", 0, 10}}, 34);
  Var e2 = gen.encode_text({{"sun", 5, 15}}, 34);
  // Identical word shifted by 5 frames: rows away from boundaries match shifted.
  for (int t = 8; t < 12; ++t)
    CHECK((e2.val().row(t + 5) - e1.val().row(t)).cwiseAbs().maxCoeff() < 1e-9);
}

TEST_CASE("speaker encoder: reparameterized sampling") {
  std::mt19937_64 rng(84);
  auto cfg = testutil::mini_config(3);
  Generator gen(cfg, testutil::mini_graphs(), rng);
  auto lat = gen.encode_speaker(1);
  CHECK(lat.sigma.val().minCoeff() > 0.0);

  // Zero noise -> exactly mu.
  Var k0 = gen.sample_speaker(lat, Mat::Zero(1, cfg.dims.d_speaker));
  CHECK((k0.val() - lat.mu.val()).cwiseAbs().maxCoeff() == 0.0);

  // Monte-Carlo mean approaches mu.
  const int n = 100000;
  Mat acc = Mat::Zero(1, cfg.dims.d_speaker);
  std::normal_distribution<double> gauss(0, 1);
  for (int i = 0; i < n; ++i) {
    Mat noise(1, cfg.dims.d_speaker);
    for (int c = 0; c < noise.cols(); ++c) noise(0, c) = gauss(rng);
    acc += gen.sample_speaker(lat, noise).val();
  }
  acc /= n;
  for (int c = 0; c < cfg.dims.d_speaker; ++c) {
    double sigma = std::sqrt(lat.sigma.val()(0, c));
    CHECK(std::abs(acc(0, c) - lat.mu.val()(0, c)) < 3.5 * sigma / std::sqrt(double(n)));
  }

  // Invalid one-hots rejected.
  CHECK_THROWS_AS((void)gen.encode_speaker(Var::constant(Mat::Constant(1, 3, 0.5))), NotOneHot);
  Mat two = Mat::Zero(1, 3);
  two(0, 0) = two(0, 1) = 1.0;
  CHECK_THROWS_AS((void)gen.encode_speaker(Var::constant(two)), NotOneHot);
}

TEST_CASE("fuse: concatenation order and isolation of channels") {
  std::mt19937_64 rng(85);
  auto cfg = testutil::mini_config();
  Generator gen(cfg, testutil::mini_graphs(), rng);
  const auto& d = cfg.dims;
  Mat a = testutil::random_mat(34, d.d_audio, rng);
  Mat w = testutil::random_mat(34, d.d_text, rng);
  Mat k = testutil::random_mat(1, d.d_speaker, rng);
  Mat l = testutil::random_mat(34, d.d_face_latent, rng);
  Mat v = testutil::random_mat(34, d.d_pose_latent, rng);
  Var fused = gen.fuse(Var::constant(a), Var::constant(w), Var::constant(k), Var::constant(l),
                       Var::constant(v));
  CHECK(fused.rows() == 34);
  CHECK(fused.cols() == d.fused());
  CHECK((fused.val().leftCols(d.d_audio) - a).cwiseAbs().maxCoeff() == 0.0);
  CHECK((fused.val().rightCols(d.d_pose_latent) - v).cwiseAbs().maxCoeff() == 0.0);
  // Speaker block is the same row repeated over T.
  for (int t = 0; t < 34; ++t)
    CHECK((fused.val().block(t, d.d_audio + d.d_text, 1, d.d_speaker) - k).cwiseAbs().maxCoeff() ==
          0.0);

  // Zeroing v changes only the trailing block.
  Var fused0 = gen.fuse(Var::constant(a), Var::constant(w), Var::constant(k), Var::constant(l),
                        Var::constant(Mat::Zero(34, d.d_pose_latent)));
  CHECK((fused0.val().leftCols(d.fused() - d.d_pose_latent) -
         fused.val().leftCols(d.fused() - d.d_pose_latent))
            .cwiseAbs()
            .maxCoeff() == 0.0);
}

TEST_CASE("encode_face: within-component permutation equivariance") {
  std::mt19937_64 rng1(86), rng2(86);
  auto cfg = testutil::mini_config();
  auto graphs = testutil::mini_graphs();

  // Swap landmarks 0 and 1 (both in component 0) everywhere: adjacency rows/
  // cols, collation order, and the input rows.
  const int a = 0, b = 1;
  GraphSet permuted = graphs;
  Mat perm = Mat::Identity(8, 8);
  perm(a, a) = perm(b, b) = 0;
  perm(a, b) = perm(b, a) = 1;
  permuted.face_landmark.adjacency = perm * graphs.face_landmark.adjacency * perm.transpose();
  for (auto& comp : permuted.face_plan.component_nodes)
    for (auto& n : comp) n = (n == a) ? b : (n == b ? a : n);

  Generator gen1(cfg, graphs, rng1);
  Generator gen2(cfg, permuted, rng2);  // identical weights: same seed, same shapes

  auto w = testutil::mini_window(cfg, rng1);
  Mat seed = w.face_deltas.topRows(cfg.seed * cfg.landmarks);
  Mat seed_perm = seed;
  for (int t = 0; t < cfg.seed; ++t) {
    seed_perm.row(t * 8 + a) = seed.row(t * 8 + b);
    seed_perm.row(t * 8 + b) = seed.row(t * 8 + a);
  }
  Var e1 = gen1.encode_face(Var::constant(seed));
  Var e2 = gen2.encode_face(Var::constant(seed_perm));
  CHECK((e1.val() - e2.val()).cwiseAbs().maxCoeff() < 1e-9);
}

TEST_CASE("encode_pose: shape and sensitivity to the seed") {
  std::mt19937_64 rng(87);
  auto cfg = testutil::mini_config();
  Generator gen(cfg, testutil::mini_graphs(), rng);
  std::mt19937_64 data_rng(870);
  Mat seed = testutil::random_units(cfg.seed, cfg.joints - 1, data_rng);
  Var e = gen.encode_pose(Var::constant(seed));
  CHECK(e.rows() == 34);
  CHECK(e.cols() == cfg.dims.d_pose_latent);
  Mat seed2 = testutil::random_units(cfg.seed, cfg.joints - 1, data_rng);
  Var e2 = gen.encode_pose(Var::constant(seed2));
  CHECK((e.val() - e2.val()).cwiseAbs().maxCoeff() > 0.0);
}

TEST_CASE("decoders: shapes and perturbation propagation") {
  std::mt19937_64 rng(88);
  auto cfg = testutil::mini_config();
  Generator gen(cfg, testutil::mini_graphs(), rng);
  Mat e = testutil::random_mat(34, cfg.dims.fused(), rng);
  Var f = gen.decode_face(Var::constant(e));
  Var u = gen.decode_pose(Var::constant(e));
  CHECK(f.rows() == 34 * cfg.landmarks);
  CHECK(u.rows() == 34 * (cfg.joints - 1));

  // Perturbing one frame of the embedding changes the output near that frame.
  Mat e2 = e;
  e2.row(17) += Mat::Constant(1, cfg.dims.fused(), 0.5);
  Var f2 = gen.decode_face(Var::constant(e2));
  double diff = (f2.val().middleRows(17 * cfg.landmarks, cfg.landmarks) -
                 f.val().middleRows(17 * cfg.landmarks, cfg.landmarks))
                    .cwiseAbs()
                    .maxCoeff();
  CHECK(diff > 0.0);
}

TEST_CASE("discriminator: range, determinism, parameter independence") {
  std::mt19937_64 rng(89);
  auto cfg = testutil::mini_config();
  auto graphs = testutil::mini_graphs();
  Generator gen(cfg, graphs, rng);
  Discriminator disc(cfg, graphs, rng);
  std::mt19937_64 data_rng(890);
  auto w = testutil::mini_window(cfg, data_rng);

  Var c1 = disc.discriminate(Var::constant(w.face_deltas), Var::constant(w.pose_units));
  Var c2 = disc.discriminate(Var::constant(w.face_deltas), Var::constant(w.pose_units));
  CHECK(c1.scalar() > 0.0);
  CHECK(c1.scalar() < 1.0);
  CHECK(c1.scalar() == c2.scalar());

  // Mutating generator parameters never changes discriminator output.
  for (auto& [name, p] : gen.params.params) p.mutable_val().array() += 1.0;
  Var c3 = disc.discriminate(Var::constant(w.face_deltas), Var::constant(w.pose_units));
  CHECK(c3.scalar() == c1.scalar());
}

TEST_CASE("phoneme predictor: shape and silence stationarity") {
  std::mt19937_64 rng(90);
  PhonemePredictor ph(34, 4, 8, rng);
  AudioClip silence;
  silence.samples.assign(16000 * 3, 0.0);
  Var p = ph.predict(silence);
  CHECK(p.rows() == 34 * 4);
  CHECK(p.cols() == 3);
  // Silence: interior frames identical (zero-padded convs touch the first and
  // last couple of frames).
  for (int t = 3; t < 32; ++t)
    CHECK((p.val().middleRows(t * 4, 4) - p.val().middleRows(2 * 4, 4)).cwiseAbs().maxCoeff() <
          1e-9);
}

TEST_CASE("mfcc: distinguishes tones, aligns frame count") {
  AudioClip tone440, tone880;
  tone440.samples.resize(16000 * 3);
  tone880.samples.resize(16000 * 3);
  for (size_t i = 0; i < tone440.samples.size(); ++i) {
    tone440.samples[i] = 0.5 * std::sin(2 * M_PI * 440.0 * i / 16000);
    tone880.samples[i] = 0.5 * std::sin(2 * M_PI * 880.0 * i / 16000);
  }
  Mat m440 = compute_mfcc(tone440, 34);
  Mat m880 = compute_mfcc(tone880, 34);
  CHECK(m440.rows() == 34);
  CHECK(m440.cols() == 26);
  CHECK((m440 - m880).norm() > 1.0);

  // Silence: constant columns.
  AudioClip silence;
  silence.samples.assign(16000 * 3, 0.0);
  Mat ms = compute_mfcc(silence, 34);
  for (int t = 1; t < 34; ++t) CHECK((ms.row(t) - ms.row(0)).cwiseAbs().maxCoeff() < 1e-9);

  AudioClip tiny;
  tiny.samples.assign(100, 0.0);
  CHECK_THROWS_AS((void)compute_mfcc(tiny, 34), TooShortAudio);
}

TEST_CASE("checkpoint: round trip, plan mismatch is fatal") {
  std::mt19937_64 rng(91);
  auto cfg = testutil::mini_config();
  auto graphs = testutil::mini_graphs();
  Generator gen(cfg, graphs, rng);
  Discriminator disc(cfg, graphs, rng);
  const auto path = std::filesystem::temp_directory_path() / "cosyn_ckpt_test.bin";
  save_checkpoint(path, gen, disc);

  std::mt19937_64 rng2(999);
  Generator gen2(cfg, graphs, rng2);
  Discriminator disc2(cfg, graphs, rng2);
  load_checkpoint(path, gen2, disc2);
  for (const auto& [name, p] : gen.params.params)
    CHECK((p.val() - gen2.params.get(name).val()).cwiseAbs().maxCoeff() == 0.0);

  auto cfg_other = cfg;
  cfg_other.dims.d_audio = 6;
  std::mt19937_64 rng3(1);
  Generator gen3(cfg_other, graphs, rng3);
  Discriminator disc3(cfg_other, graphs, rng3);
  CHECK_THROWS_AS(load_checkpoint(path, gen3, disc3), PlanMismatch);
  std::filesystem::remove(path);
}
