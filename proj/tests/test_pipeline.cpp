#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "cosyn/pipeline.hpp"
#include "fixtures.hpp"

using namespace cosyn;
namespace fs = std::filesystem;

namespace {

// Fresh scratch directory, removed on destruction.
struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& tag) {
    path = fs::temp_directory_path() / ("cosyn_" + tag);
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

// Per-frame mean absolute audio amplitude.
std::vector<double> frame_envelope(const AudioClip& audio, int frames, double frame_rate) {
  std::vector<double> env(static_cast<size_t>(frames), 0.0);
  const double spf = double(audio.sample_rate) / frame_rate;
  for (int t = 0; t < frames; ++t) {
    const auto s0 = static_cast<size_t>(t * spf), s1 = static_cast<size_t>((t + 1) * spf);
    double acc = 0;
    for (size_t s = s0; s < s1 && s < audio.samples.size(); ++s) acc += std::abs(audio.samples[s]);
    env[static_cast<size_t>(t)] = acc / std::max<size_t>(1, s1 - s0);
  }
  return env;
}

double pearson(const std::vector<double>& a, const std::vector<double>& b) {
  REQUIRE(a.size() == b.size());
  const double n = double(a.size());
  double ma = 0, mb = 0;
  for (size_t i = 0; i < a.size(); ++i) ma += a[i], mb += b[i];
  ma /= n, mb /= n;
  double sab = 0, saa = 0, sbb = 0;
  for (size_t i = 0; i < a.size(); ++i) {
    sab += (a[i] - ma) * (b[i] - mb);
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
  }
  return sab / std::sqrt(saa * sbb);
}

SyntheticCorpusSpec tiny_spec() {
  SyntheticCorpusSpec spec;
  spec.speakers = 2;
  spec.clips_per_speaker = 4;
  spec.clip_frames = 102;
  return spec;
}

}  // namespace

TEST_CASE("float32 matrix files round trip at float precision") {
  TempDir dir("f32");
  std::mt19937_64 rng(3);
  const Mat m = testutil::random_mat(7, 5, rng, 100.0);
  write_f32(dir.path / "m.f32", m);
  const Mat back = read_f32(dir.path / "m.f32", 5);
  REQUIRE(back.rows() == 7);
  for (int r = 0; r < 7; ++r)
    for (int c = 0; c < 5; ++c) CHECK(back(r, c) == double(float(m(r, c))));

  CHECK_THROWS_AS(read_f32(dir.path / "m.f32", 4), IoError);  // 35 floats, not /4
  CHECK_THROWS_AS(read_f32(dir.path / "missing.f32", 5), IoError);
}

TEST_CASE("clip directories round trip") {
  TempDir dir("clip");
  std::mt19937_64 rng(9);
  const Skeleton skel = canonical_skeleton();
  const auto rest = canonical_rest_pose(skel);

  MotionSample s;
  s.speaker = 1;
  s.speaker_count = 3;
  s.face.positions = PointSeq(testutil::random_mat(6, 3 * 68, rng, 80.0));
  s.pose.positions = PointSeq(6, skel.joint_count);
  for (int t = 0; t < 6; ++t) s.pose.positions.set_frame(t, rest);
  s.audio.samples.assign(1600, 0.25);
  s.transcript = {{"alpha", 0, 3}, {"beta", 3, 6}};

  write_clip(dir.path / "c0", s, skel);
  const RawClip back = read_clip(dir.path / "c0");

  CHECK(back.sample.speaker == 1);
  CHECK(back.sample.speaker_count == 3);
  CHECK(back.skeleton.parent_index == skel.parent_index);
  CHECK(back.skeleton.bone_lengths == skel.bone_lengths);
  CHECK(back.sample.face.frames() == 6);
  CHECK(back.sample.face.landmarks() == 68);
  CHECK((back.sample.face.positions.data - s.face.positions.data).cwiseAbs().maxCoeff() < 1e-4);
  CHECK((back.sample.pose.positions.data - s.pose.positions.data).cwiseAbs().maxCoeff() < 1e-3);
  REQUIRE(back.sample.transcript.size() == 2);
  CHECK(back.sample.transcript[0].word == "alpha");
  CHECK(back.sample.transcript[1].start_frame == 3);
  REQUIRE(back.sample.audio.samples.size() == 1600);
  CHECK(back.sample.audio.samples[10] == doctest::Approx(0.25).epsilon(1e-3));
}

TEST_CASE("manifest split is a deterministic 80/10/10 interleave") {
  std::vector<std::string> names;
  for (int i = 0; i < 20; ++i) names.push_back("clip_" + std::to_string(100 + i));
  std::reverse(names.begin(), names.end());  // make_manifest sorts internally
  const CorpusManifest m = make_manifest(names);
  CHECK(m.train.size() == 16);
  CHECK(m.val.size() == 2);
  CHECK(m.test.size() == 2);
  // Clip i of the sorted list lands in val at i%10==8, test at i%10==9.
  CHECK(m.val[0] == "clip_108");
  CHECK(m.test[0] == "clip_109");
  CHECK(m.val[1] == "clip_118");
  CHECK(m.test[1] == "clip_119");

  TempDir dir("manifest");
  write_manifest(dir.path, m);
  const CorpusManifest back = read_manifest(dir.path);
  CHECK(back.train == m.train);
  CHECK(back.val == m.val);
  CHECK(back.test == m.test);
}

TEST_CASE("synthetic corpus has the documented shape") {
  TempDir dir("synth_shape");
  generate_synthetic_corpus(tiny_spec(), dir.path, 17);

  const CorpusManifest m = read_manifest(dir.path);
  CHECK(m.all().size() == 8);  // 2 speakers x 4 clips

  for (const auto& name : m.all()) {
    const RawClip c = read_clip(dir.path / name);
    CHECK(c.sample.face.frames() == 102);
    CHECK(c.sample.face.landmarks() == 68);
    CHECK(c.sample.pose.joints() == 10);
    // Non-overlapping chunking: 3 whole windows of 34.
    CHECK(chunk(c.sample, 34, 4, 34).size() == 3);
    CHECK_FALSE(c.sample.transcript.empty());
    // Bone lengths hold by construction, up to the float32 storage.
    for (int t = 0; t < c.sample.face.frames(); ++t)
      for (int j = 1; j < 10; ++j) {
        const double len =
            (c.sample.pose.positions.at(t, j) - c.sample.pose.positions.at(t, c.skeleton.parent_index[j]))
                .norm();
        CHECK(len == doctest::Approx(c.skeleton.bone_lengths[j - 1]).epsilon(1e-5));
      }
  }
}

TEST_CASE("synthetic corpus couples the audio envelope to wrist speed") {
  TempDir dir("synth_couple");
  SyntheticCorpusSpec spec = tiny_spec();
  spec.coupling = 1.0;
  generate_synthetic_corpus(spec, dir.path, 21);

  for (const auto& name : read_manifest(dir.path).all()) {
    const RawClip c = read_clip(dir.path / name);
    const int T = c.sample.pose.frames();
    const auto env = frame_envelope(c.sample.audio, T - 1, spec.frame_rate);
    std::vector<double> wrist_speed(static_cast<size_t>(T - 1));
    const int wrist = 6;  // end of the left arm chain
    for (int t = 0; t + 1 < T; ++t)
      wrist_speed[static_cast<size_t>(t)] =
          (c.sample.pose.positions.at(t + 1, wrist) - c.sample.pose.positions.at(t, wrist)).norm();
    CHECK(pearson(env, wrist_speed) > 0.5);
  }
}

TEST_CASE("synthetic speakers differ by the configured amplitude gap") {
  TempDir dir("synth_gap");
  SyntheticCorpusSpec spec = tiny_spec();
  spec.signature_gap = 0.5;
  generate_synthetic_corpus(spec, dir.path, 33);

  // Mean wrist speed per speaker scales with the amplitude signature 1 + gap*k.
  std::vector<double> mean_speed(2, 0.0);
  std::vector<int> counts(2, 0);
  for (const auto& name : read_manifest(dir.path).all()) {
    const RawClip c = read_clip(dir.path / name);
    double acc = 0;
    for (int t = 0; t + 1 < c.sample.pose.frames(); ++t)
      acc += (c.sample.pose.positions.at(t + 1, 6) - c.sample.pose.positions.at(t, 6)).norm();
    mean_speed[static_cast<size_t>(c.sample.speaker)] += acc / (c.sample.pose.frames() - 1);
    ++counts[static_cast<size_t>(c.sample.speaker)];
  }
  for (int k = 0; k < 2; ++k) mean_speed[static_cast<size_t>(k)] /= counts[static_cast<size_t>(k)];
  const double ratio = mean_speed[1] / mean_speed[0];
  CHECK(ratio > 1.2);
  CHECK(ratio < 1.9);  // centered on 1.5 = (1 + gap) / 1

  CHECK_THROWS_AS(generate_synthetic_corpus([] {
                    SyntheticCorpusSpec s;
                    s.speakers = 1;
                    return s;
                  }(),
                                            dir.path / "bad", 1),
                  Error);
}

TEST_CASE("key=value config parsing") {
  TempDir dir("cfg");
  {
    std::ofstream f(dir.path / "a.cfg");
    f << "# header comment\n"
      << "epochs = 12\n"
      << "gen_lr=5e-3   # trailing comment\n"
      << "  name =  run one \n"
      << "\n";
  }
  const auto cfg = KeyValueConfig::load(dir.path / "a.cfg");
  CHECK(cfg.get("epochs", 0) == 12);
  CHECK(cfg.get("gen_lr", 0.0) == doctest::Approx(5e-3));
  CHECK(cfg.get("name", std::string()) == "run one");
  CHECK(cfg.get("missing", 7) == 7);

  {
    std::ofstream f(dir.path / "b.cfg");
    f << "no equals sign here\n";
  }
  CHECK_THROWS_AS(KeyValueConfig::load(dir.path / "b.cfg"), IoError);
  CHECK_THROWS_AS(KeyValueConfig::load(dir.path / "missing.cfg"), IoError);
}

TEST_CASE("preprocess produces the expected windows and is deterministic") {
  TempDir dir("prep");
  generate_synthetic_corpus(tiny_spec(), dir.path / "corpus", 29);

  PreprocessOptions opts;
  const auto res = cmd_preprocess(dir.path / "corpus", dir.path / "proc", opts);
  CHECK(res.clips_total == 8);
  CHECK(res.clips_skipped == 0);
  CHECK(res.ok());
  // 8 clips, val/test borrow one train clip each; stride 10 over 102 frames
  // gives floor((102-34)/10)+1 = 7 windows per clip.
  CHECK(res.window_counts.at("train") == 6 * 7);
  CHECK(res.window_counts.at("val") == 7);
  CHECK(res.window_counts.at("test") == 7);

  const ProcessedMeta meta = read_processed_meta(dir.path / "proc");
  CHECK(meta.landmarks == 68);
  CHECK(meta.joints == 10);
  CHECK(meta.speakers == 2);
  CHECK(meta.reference_faces.size() == 2);
  CHECK(meta.rest_pose.rows() == 10);

  const auto train = read_windows(dir.path / "proc" / "train.bin");
  REQUIRE(train.size() == 42);
  for (const auto& pw : train) {
    CHECK(pw.window.mfcc.rows() == 34);
    CHECK(pw.window.mfcc.cols() == 26);
    CHECK(pw.window.face_deltas.rows() == 34 * 68);
    CHECK(pw.window.pose_units.rows() == 34 * 9);
    // Direction rows stay unit length through resampling + normalization.
    for (int r = 0; r < pw.window.pose_units.rows(); r += 97)
      CHECK(pw.window.pose_units.row(r).norm() == doctest::Approx(1.0).epsilon(1e-9));
    CHECK_FALSE(pw.audio.samples.empty());
  }

  // Deltas are small against the reference face for the (noise-only) jitter.
  double mean_delta = 0;
  for (const auto& pw : train) mean_delta += pw.window.face_deltas.cwiseAbs().mean();
  CHECK(mean_delta / train.size() < 10.0);

  // Re-running from the same corpus reproduces the binaries byte for byte.
  cmd_preprocess(dir.path / "corpus", dir.path / "proc2", opts);
  for (const auto* name : {"train.bin", "val.bin", "test.bin"}) {
    std::ifstream a(dir.path / "proc" / name, std::ios::binary);
    std::ifstream b(dir.path / "proc2" / name, std::ios::binary);
    std::stringstream sa, sb;
    sa << a.rdbuf(), sb << b.rdbuf();
    CHECK(sa.str() == sb.str());
  }
}

TEST_CASE("preprocess skips broken clips and reports the loss") {
  TempDir dir("prep_skip");
  generate_synthetic_corpus(tiny_spec(), dir.path / "corpus", 41);
  // Truncate one clip's landmark file mid-row.
  fs::resize_file(dir.path / "corpus" / "clip_s1_c02" / "face.f32", 1001);

  const auto res = cmd_preprocess(dir.path / "corpus", dir.path / "proc", {});
  CHECK(res.clips_total == 8);
  CHECK(res.clips_skipped == 1);
  CHECK_FALSE(res.ok());  // 1/8 > 10%
  // The surviving clips still produced usable splits.
  CHECK(read_windows(dir.path / "proc" / "train.bin").size() > 0);
}

TEST_CASE("processed window files round trip") {
  TempDir dir("winio");
  std::mt19937_64 rng(5);
  std::vector<ProcessedWindow> ws(2);
  ws[0].window.speaker = 1;
  ws[0].window.mfcc = testutil::random_mat(34, 26, rng);
  ws[0].window.face_deltas = testutil::random_mat(34 * 8, 3, rng);
  ws[0].window.pose_units = testutil::random_mat(34 * 4, 3, rng);
  ws[0].window.transcript = {{"w", 2, 9}};
  ws[0].audio.samples = {0.1, -0.2, 0.3};
  ws[1] = ws[0];
  ws[1].window.speaker = 0;

  write_windows(dir.path / "w.bin", ws);
  const auto back = read_windows(dir.path / "w.bin");
  REQUIRE(back.size() == 2);
  CHECK(back[0].window.speaker == 1);
  CHECK(back[1].window.speaker == 0);
  CHECK(back[0].window.mfcc == ws[0].window.mfcc);
  CHECK(back[0].window.face_deltas == ws[0].window.face_deltas);
  CHECK(back[0].window.pose_units == ws[0].window.pose_units);
  REQUIRE(back[0].window.transcript.size() == 1);
  CHECK(back[0].window.transcript[0].word == "w");
  CHECK(back[0].audio.samples == ws[0].audio.samples);
}

TEST_CASE("train / synthesize / evaluate run end to end on a tiny corpus") {
  TempDir dir("endtoend");
  SyntheticCorpusSpec spec = tiny_spec();
  generate_synthetic_corpus(spec, dir.path / "corpus", 13);
  cmd_preprocess(dir.path / "corpus", dir.path / "proc", {});

  TrainOptions topts;
  topts.dims = DimensionPlan::miniature();
  topts.opt.epochs = 2;
  topts.opt.batch_size = 8;
  topts.eval_every = 1;
  topts.seed = 5;
  const TrainResult tr = cmd_train(dir.path / "proc", dir.path / "run", topts);
  CHECK(tr.epochs_run == 2);
  CHECK(std::isfinite(tr.final_loss));
  CHECK(fs::exists(dir.path / "run" / "checkpoint_latest.bin"));
  CHECK(fs::exists(dir.path / "run" / "checkpoint_best.bin"));
  CHECK(fs::exists(dir.path / "run" / "train_log.csv"));

  SynthesizeOptions sopts;
  sopts.speaker = 0;
  const int frames = cmd_synthesize(dir.path / "proc", dir.path / "run" / "checkpoint_best.bin",
                                    dir.path / "corpus" / "clip_s0_c00" / "audio.wav",
                                    dir.path / "corpus" / "clip_s0_c00" / "transcript.tsv",
                                    dir.path / "anim.json", sopts);
  // 102 frames of audio: windows at 0/30/60 -> 34 + 2*30 output frames.
  CHECK(frames == 94);
  const AnimationDocument doc = import_animation(dir.path / "anim.json");
  CHECK(doc.rotations.frames() == 94);
  CHECK(doc.landmarks.frames() == 94);
  CHECK(doc.landmarks.points() == 68);
  CHECK(doc.skeleton.parent_index == canonical_skeleton().parent_index);

  EvaluateOptions eopts;
  eopts.ae_epochs = 2;
  const MetricReport report =
      cmd_evaluate(dir.path / "proc", dir.path / "run" / "checkpoint_best.bin", dir.path / "eval", eopts);
  CHECK(report.sample_count == 7);
  for (double v : {report.male_mm, report.maje_mm, report.mace_lm, report.mace_p, report.fld, report.fgd}) {
    CHECK(std::isfinite(v));
    CHECK(v >= 0.0);
  }
  CHECK(fs::exists(dir.path / "eval" / "metrics.json"));
  CHECK(fs::exists(dir.path / "eval" / "metrics.csv"));
}

TEST_CASE("interrupted training resumes onto the uninterrupted trajectory") {
  TempDir dir("resume");
  generate_synthetic_corpus(tiny_spec(), dir.path / "corpus", 19);
  cmd_preprocess(dir.path / "corpus", dir.path / "proc", {});

  TrainOptions base;
  base.dims = DimensionPlan::miniature();
  base.opt.batch_size = 16;
  base.eval_every = 2;
  base.seed = 8;

  TrainOptions four = base;
  four.opt.epochs = 4;
  cmd_train(dir.path / "proc", dir.path / "runA", four);

  TrainOptions two = base;
  two.opt.epochs = 2;
  cmd_train(dir.path / "proc", dir.path / "runB", two);
  TrainOptions rest = four;
  rest.resume = true;
  cmd_train(dir.path / "proc", dir.path / "runB", rest);

  for (const auto* name : {"checkpoint_latest.bin", "train_state.bin"}) {
    std::ifstream a(dir.path / "runA" / name, std::ios::binary);
    std::ifstream b(dir.path / "runB" / name, std::ios::binary);
    std::stringstream sa, sb;
    sa << a.rdbuf(), sb << b.rdbuf();
    CHECK_MESSAGE(sa.str() == sb.str(), name);
  }
}
