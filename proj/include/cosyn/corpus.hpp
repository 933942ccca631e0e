#pragma once

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>
#include <nlohmann/json.hpp>
#include <random>
#include <sstream>
#include <vector>

#include "cosyn/sequence.hpp"
#include "cosyn/wav.hpp"

namespace cosyn {

namespace fs = std::filesystem;

// ----------------------------------------------------------------------------
// float32 matrix files (row-major little-endian, shape implied by the reader)

inline void write_f32(const fs::path& path, const Mat& m) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("write_f32: cannot open " + path.string());
  std::vector<float> row(static_cast<size_t>(m.cols()));
  for (int r = 0; r < m.rows(); ++r) {
    for (int c = 0; c < m.cols(); ++c) row[static_cast<size_t>(c)] = static_cast<float>(m(r, c));
    f.write(reinterpret_cast<const char*>(row.data()),
            static_cast<std::streamsize>(row.size() * sizeof(float)));
  }
  if (!f) throw IoError("write_f32: write failed for " + path.string());
}

inline Mat read_f32(const fs::path& path, int cols) {
  std::ifstream f(path, std::ios::binary | std::ios::ate);
  if (!f) throw IoError("read_f32: cannot open " + path.string());
  const auto bytes = static_cast<size_t>(f.tellg());
  require(cols > 0, "read_f32: need a positive column count");
  const size_t row_bytes = static_cast<size_t>(cols) * sizeof(float);
  if (bytes % row_bytes != 0)
    throw IoError("read_f32: " + path.string() + " is not a whole number of rows");
  const int rows = static_cast<int>(bytes / row_bytes);
  f.seekg(0);
  Mat m(rows, cols);
  std::vector<float> row(static_cast<size_t>(cols));
  for (int r = 0; r < rows; ++r) {
    f.read(reinterpret_cast<char*>(row.data()), static_cast<std::streamsize>(row_bytes));
    for (int c = 0; c < cols; ++c) m(r, c) = row[static_cast<size_t>(c)];
  }
  return m;
}

// ----------------------------------------------------------------------------
// Clip directories

// One clip directory: audio.wav, transcript.tsv, face.f32, pose.f32, meta.json.
struct RawClip {
  MotionSample sample;
  Skeleton skeleton;
};

inline void write_clip(const fs::path& dir, const MotionSample& sample, const Skeleton& skel) {
  fs::create_directories(dir);
  write_wav(dir / "audio.wav", sample.audio);

  std::ofstream tsv(dir / "transcript.tsv");
  if (!tsv) throw IoError("write_clip: cannot open transcript.tsv");
  for (const auto& w : sample.transcript)
    tsv << w.word << '\t' << w.start_frame << '\t' << w.end_frame << '\n';

  write_f32(dir / "face.f32", sample.face.positions.data);
  write_f32(dir / "pose.f32", sample.pose.positions.data);

  nlohmann::json meta{{"frame_rate", sample.face.frame_rate},
                      {"speaker", sample.speaker},
                      {"speaker_count", sample.speaker_count},
                      {"landmarks", sample.face.landmarks()},
                      {"joints", sample.pose.joints()},
                      {"parent_index", skel.parent_index},
                      {"bone_lengths", skel.bone_lengths}};
  std::ofstream mj(dir / "meta.json");
  if (!mj) throw IoError("write_clip: cannot open meta.json");
  mj << meta.dump(1) << '\n';
}

inline RawClip read_clip(const fs::path& dir) {
  std::ifstream mj(dir / "meta.json");
  if (!mj) throw IoError("read_clip: missing meta.json in " + dir.string());
  nlohmann::json meta;
  try {
    mj >> meta;
  } catch (const nlohmann::json::exception& e) {
    throw IoError("read_clip: bad meta.json: " + std::string(e.what()));
  }

  RawClip clip;
  clip.sample.speaker = meta.at("speaker").get<int>();
  clip.sample.speaker_count = meta.at("speaker_count").get<int>();
  const int L = meta.at("landmarks").get<int>();
  const int J = meta.at("joints").get<int>();
  const double fr = meta.at("frame_rate").get<double>();
  clip.skeleton.parent_index = meta.at("parent_index").get<std::vector<int>>();
  clip.skeleton.bone_lengths = meta.at("bone_lengths").get<std::vector<double>>();
  clip.skeleton.joint_count = static_cast<int>(clip.skeleton.parent_index.size());
  clip.skeleton.validate();
  require(clip.skeleton.joint_count == J, "read_clip: joint count disagrees with skeleton");

  clip.sample.audio = read_wav(dir / "audio.wav");
  clip.sample.face.frame_rate = fr;
  clip.sample.pose.frame_rate = fr;
  clip.sample.face.positions = PointSeq(read_f32(dir / "face.f32", 3 * L));
  clip.sample.pose.positions = PointSeq(read_f32(dir / "pose.f32", 3 * J));
  require(clip.sample.face.frames() == clip.sample.pose.frames(),
          "read_clip: face/pose frame counts differ");

  std::ifstream tsv(dir / "transcript.tsv");
  if (!tsv) throw IoError("read_clip: missing transcript.tsv in " + dir.string());
  std::string line;
  while (std::getline(tsv, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    WordSpan w;
    if (!(ls >> w.word >> w.start_frame >> w.end_frame))
      throw IoError("read_clip: bad transcript line: " + line);
    clip.sample.transcript.push_back(w);
  }
  return clip;
}

// ----------------------------------------------------------------------------
// Manifest (train/val/test clip lists, 80/10/10)

struct CorpusManifest {
  std::vector<std::string> train, val, test;

  std::vector<std::string> all() const {
    std::vector<std::string> out(train);
    out.insert(out.end(), val.begin(), val.end());
    out.insert(out.end(), test.begin(), test.end());
    return out;
  }
};

// Deterministic interleaved split: clip i of the sorted list goes to val if
// i % 10 == 8, test if i % 10 == 9, train otherwise. Keeps every speaker in
// every split once clips are ordered clip-major.
inline CorpusManifest make_manifest(std::vector<std::string> clip_dirs) {
  std::sort(clip_dirs.begin(), clip_dirs.end());
  CorpusManifest m;
  for (size_t i = 0; i < clip_dirs.size(); ++i) {
    switch (i % 10) {
      case 8: m.val.push_back(clip_dirs[i]); break;
      case 9: m.test.push_back(clip_dirs[i]); break;
      default: m.train.push_back(clip_dirs[i]);
    }
  }
  return m;
}

inline void write_manifest(const fs::path& root, const CorpusManifest& m) {
  nlohmann::json j{{"train", m.train}, {"val", m.val}, {"test", m.test}};
  std::ofstream f(root / "manifest.json");
  if (!f) throw IoError("write_manifest: cannot open manifest.json");
  f << j.dump(1) << '\n';
}

inline CorpusManifest read_manifest(const fs::path& root) {
  std::ifstream f(root / "manifest.json");
  if (!f) throw IoError("read_manifest: missing manifest.json in " + root.string());
  nlohmann::json j;
  try {
    f >> j;
  } catch (const nlohmann::json::exception& e) {
    throw IoError("read_manifest: bad JSON: " + std::string(e.what()));
  }
  CorpusManifest m;
  m.train = j.at("train").get<std::vector<std::string>>();
  m.val = j.at("val").get<std::vector<std::string>>();
  m.test = j.at("test").get<std::vector<std::string>>();
  return m;
}

// ----------------------------------------------------------------------------
// Canonical templates

// 68-landmark face template (mm): jaw arc 0-16, brows 17-26, nose 27-35,
// eyes 36-47, lips 48-67 — the standard sparse layout, laid out on an oval.
inline ReferenceFace canonical_face_template() {
  Eigen::MatrixX3d p(68, 3);
  auto set = [&](int i, double x, double y, double z) { p.row(i) = Eigen::RowVector3d(x, y, z); };
  // Jaw: semicircle from left ear to right ear through the chin.
  for (int i = 0; i <= 16; ++i) {
    const double a = M_PI * (1.0 - i / 16.0);  // pi .. 0
    set(i, 70.0 * std::cos(a), -20.0 - 50.0 * std::sin(a) * 0.9, 10.0 * std::sin(a));
  }
  // Brows: two arcs.
  for (int i = 0; i < 5; ++i) {
    const double y = 38.0 + 3.0 * std::sin(M_PI * i / 4.0);
    set(17 + i, -45.0 + 8.0 * i, y, 8.0);
    set(22 + i, 13.0 + 8.0 * i, y, 8.0);
  }
  // Nose: bridge 27-30, base 31-35.
  for (int i = 0; i < 4; ++i) set(27 + i, 0.0, 30.0 - 12.0 * i, 12.0 + 4.0 * i);
  for (int i = 0; i < 5; ++i) set(31 + i, -10.0 + 5.0 * i, -10.0, 18.0 - 2.0 * std::abs(i - 2));
  // Eyes: two hexagons.
  for (int i = 0; i < 6; ++i) {
    const double a = 2.0 * M_PI * i / 6.0;
    set(36 + i, -30.0 + 12.0 * std::cos(a), 22.0 + 5.0 * std::sin(a), 6.0);
    set(42 + i, 30.0 + 12.0 * std::cos(a), 22.0 + 5.0 * std::sin(a), 6.0);
  }
  // Lips: outer ring of 12 (48-59), inner ring of 8 (60-67).
  for (int i = 0; i < 12; ++i) {
    const double a = 2.0 * M_PI * i / 12.0;
    set(48 + i, 22.0 * std::cos(a), -35.0 + 10.0 * std::sin(a), 12.0);
  }
  for (int i = 0; i < 8; ++i) {
    const double a = 2.0 * M_PI * i / 8.0;
    set(60 + i, 13.0 * std::cos(a), -35.0 + 5.0 * std::sin(a), 13.0);
  }
  return ReferenceFace{p};
}

// 10-joint upper body: root pelvis, spine, neck/head chain, two arms off the
// chest joint. Lengths in mm.
inline Skeleton canonical_skeleton() {
  Skeleton s;
  s.joint_count = 10;
  s.parent_index = {-1, 0, 1, 2, 1, 4, 5, 1, 7, 8};
  s.bone_lengths = {200.0, 80.0, 100.0, 180.0, 250.0, 230.0, 180.0, 250.0, 230.0};
  return s;
}

// Rest pose for the canonical skeleton: spine up, clavicles sideways, arms
// hanging down.
inline Eigen::MatrixX3d canonical_rest_pose(const Skeleton& skel) {
  skel.validate();
  std::vector<Vec3> dirs(skel.bones());
  for (int b = 0; b < skel.bones(); ++b) dirs[b] = Vec3(0, 1, 0);  // trunk default: up
  if (skel.joint_count == 10) {
    dirs[3] = Vec3(-1, 0, 0);  // left clavicle
    dirs[4] = Vec3(0, -1, 0);  // left upper arm
    dirs[5] = Vec3(0, -1, 0);  // left forearm
    dirs[6] = Vec3(1, 0, 0);   // right clavicle
    dirs[7] = Vec3(0, -1, 0);
    dirs[8] = Vec3(0, -1, 0);
  }
  Eigen::MatrixX3d p(skel.joint_count, 3);
  p.row(0).setZero();
  for (int j = 1; j < skel.joint_count; ++j)
    p.row(j) = p.row(skel.parent_index[j]) + (skel.bone_lengths[j - 1] * dirs[j - 1]).transpose();
  return p;
}

// ----------------------------------------------------------------------------
// Synthetic corpus

struct SyntheticCorpusSpec {
  int speakers = 4;
  int clips_per_speaker = 4;
  int clip_frames = 102;
  double noise_level = 0.05;    // mm of iid landmark jitter
  double coupling = 1.0;        // audio envelope -> motion amplitude, in [0,1]
  double signature_gap = 0.5;   // relative amplitude gap between speakers
  double frame_rate = 15.0;
  int sample_rate = 16000;

  void validate() const {
    require(speakers >= 2, "SyntheticCorpusSpec: CSD needs at least 2 speakers");
    require(coupling >= 0.0 && coupling <= 1.0, "SyntheticCorpusSpec: coupling in [0,1]");
    require(clips_per_speaker >= 1 && clip_frames >= 34, "SyntheticCorpusSpec: too small");
  }
};

// Procedural stand-in corpus: an amplitude-modulated tone whose envelope
// drives lip opening and arm swing, with per-speaker amplitude/phase
// signatures, small landmark jitter and a slow head wobble for the view
// normalizer to undo.
inline void generate_synthetic_corpus(const SyntheticCorpusSpec& spec, const fs::path& root,
                                      uint64_t seed) {
  spec.validate();
  fs::create_directories(root);
  const auto face_tmpl = canonical_face_template();
  const auto skel = canonical_skeleton();
  const auto rest = canonical_rest_pose(skel);
  const int L = face_tmpl.landmarks();
  const int J = skel.joint_count;

  std::mt19937_64 rng(seed);
  std::normal_distribution<double> jitter(0.0, 1.0);
  std::vector<std::string> clip_dirs;

  for (int k = 0; k < spec.speakers; ++k) {
    const double amp_k = 1.0 + spec.signature_gap * k;   // gesture amplitude signature
    const double phase_k = 2.0 * M_PI * k / spec.speakers;
    const double tone_hz = 180.0 + 60.0 * k;

    for (int c = 0; c < spec.clips_per_speaker; ++c) {
      const int T = spec.clip_frames;
      const double env_hz = 0.9 + 0.15 * c;

      auto envelope = [&](double sec) {
        return 0.5 + 0.5 * std::sin(2.0 * M_PI * env_hz * sec + phase_k);
      };

      MotionSample s;
      s.speaker = k;
      s.speaker_count = spec.speakers;
      s.face.frame_rate = spec.frame_rate;
      s.pose.frame_rate = spec.frame_rate;

      // Audio: envelope-modulated tone.
      s.audio.sample_rate = spec.sample_rate;
      const int n_samples = static_cast<int>(std::llround(T / spec.frame_rate * spec.sample_rate));
      s.audio.samples.resize(static_cast<size_t>(n_samples));
      for (int i = 0; i < n_samples; ++i) {
        const double sec = double(i) / spec.sample_rate;
        s.audio.samples[static_cast<size_t>(i)] =
            0.8 * envelope(sec) * std::sin(2.0 * M_PI * tone_hz * sec);
      }

      // Face: lips open with the envelope, everything jitters a little, and
      // the whole head wobbles rigidly.
      s.face.positions = PointSeq(T, L);
      // Pose: arm bones swing about z with envelope-modulated angular speed.
      s.pose.positions = PointSeq(T, J);
      double swing = 0.0;
      for (int t = 0; t < T; ++t) {
        const double sec = t / spec.frame_rate;
        const double env = envelope(sec);
        const double open_amount =
            8.0 * amp_k * ((1.0 - spec.coupling) + spec.coupling * env);

        Eigen::MatrixX3d face = face_tmpl.positions;
        for (int l = 48; l < 68; ++l)
          if (face_tmpl.positions(l, 1) < -35.0)  // lower lip half opens downward
            face(l, 1) -= open_amount;
        for (int l = 0; l < L; ++l)
          for (int a = 0; a < 3; ++a) face(l, a) += spec.noise_level * jitter(rng);
        // Rigid head wobble: slow rotation about y plus a drift.
        const double beta = 0.15 * std::sin(2.0 * M_PI * 0.35 * sec + phase_k);
        Mat3 wobble = Eigen::AngleAxisd(beta, Vec3::UnitY()).toRotationMatrix();
        face = (face * wobble.transpose()).eval();
        face.rowwise() += Eigen::RowVector3d(30.0 * std::sin(0.7 * sec), 5.0 * std::cos(0.9 * sec), 0.0);
        s.face.positions.set_frame(t, face);

        // Arm swing: angular velocity proportional to the envelope.
        const double rate = ((1.0 - spec.coupling) + spec.coupling * env) *
                            std::sin(2.0 * M_PI * 1.1 * sec + phase_k);
        swing += amp_k * 0.9 * rate / spec.frame_rate;
        Mat3 rot = Eigen::AngleAxisd(swing, Vec3::UnitZ()).toRotationMatrix();

        Eigen::MatrixX3d pose(J, 3);
        pose.row(0).setZero();
        for (int j = 1; j < J; ++j) {
          Vec3 dir = (rest.row(j) - rest.row(skel.parent_index[j])).transpose().normalized();
          const bool arm = (J == 10) && (j == 5 || j == 6 || j == 8 || j == 9);
          if (arm) dir = rot * dir;
          pose.row(j) = pose.row(skel.parent_index[j]) +
                        (skel.bone_lengths[j - 1] * dir).transpose();
        }
        s.pose.positions.set_frame(t, pose);
      }

      // Transcript: one pseudo-word every 10 frames.
      for (int f0 = 0; f0 < T; f0 += 10) {
        WordSpan w;
        w.word = "spk" + std::to_string(k) + "w" + std::to_string(f0 / 10 % 7);
        w.start_frame = f0;
        w.end_frame = std::min(T, f0 + 10);
        s.transcript.push_back(w);
      }

      std::ostringstream name;
      name << "clip_s" << k << "_c" << std::setw(2) << std::setfill('0') << c;
      write_clip(root / name.str(), s, skel);
      clip_dirs.push_back(name.str());
    }
  }
  write_manifest(root, make_manifest(clip_dirs));
}

// ----------------------------------------------------------------------------
// key=value config files

// Flat key=value text config ('#' comments). Typed getters with defaults.
struct KeyValueConfig {
  std::map<std::string, std::string> values;

  static KeyValueConfig load(const fs::path& path) {
    std::ifstream f(path);
    if (!f) throw IoError("config: cannot open " + path.string());
    KeyValueConfig cfg;
    std::string line;
    int lineno = 0;
    while (std::getline(f, line)) {
      ++lineno;
      const auto hash = line.find('#');
      if (hash != std::string::npos) line = line.substr(0, hash);
      const auto strip = [](std::string s) {
        const auto b = s.find_first_not_of(" \t\r");
        if (b == std::string::npos) return std::string();
        const auto e = s.find_last_not_of(" \t\r");
        return s.substr(b, e - b + 1);
      };
      line = strip(line);
      if (line.empty()) continue;
      const auto eq = line.find('=');
      if (eq == std::string::npos)
        throw IoError("config: line " + std::to_string(lineno) + " is not key=value");
      cfg.values[strip(line.substr(0, eq))] = strip(line.substr(eq + 1));
    }
    return cfg;
  }

  std::string get(const std::string& key, const std::string& fallback) const {
    auto it = values.find(key);
    return it == values.end() ? fallback : it->second;
  }
  double get(const std::string& key, double fallback) const {
    auto it = values.find(key);
    return it == values.end() ? fallback : std::stod(it->second);
  }
  int get(const std::string& key, int fallback) const {
    auto it = values.find(key);
    return it == values.end() ? fallback : std::stoi(it->second);
  }
};

}  // namespace cosyn
