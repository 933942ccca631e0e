#pragma once

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <sstream>

#include "cosyn/checkpoint.hpp"
#include "cosyn/chunk.hpp"
#include "cosyn/corpus.hpp"
#include "cosyn/geometry.hpp"
#include "cosyn/metrics.hpp"
#include "cosyn/mfcc.hpp"
#include "cosyn/resample.hpp"
#include "cosyn/retarget.hpp"
#include "cosyn/trainer.hpp"

namespace cosyn {

// ----------------------------------------------------------------------------
// Layout helpers: frame-major PointSeq (T x 3N) <-> network stacks ((T*N) x 3)

inline Mat seq_to_stack(const PointSeq& s) {
  const int T = s.frames(), N = s.points();
  Mat stack(T * N, 3);
  for (int t = 0; t < T; ++t)
    for (int n = 0; n < N; ++n) stack.row(t * N + n) = s.at(t, n).transpose();
  return stack;
}

inline PointSeq stack_to_seq(const Mat& stack, int frames, int nodes) {
  require(static_cast<int>(stack.rows()) == frames * nodes && stack.cols() == 3,
          "stack_to_seq: shape mismatch");
  return PointSeq(detail::merge_stack(stack, frames, nodes));
}

// ----------------------------------------------------------------------------
// Processed corpus: meta.json + one binary window file per split

struct ProcessedWindow {
  TrainWindow window;
  AudioClip audio;  // the raw samples behind window.mfcc (phoneme training)
};

struct ProcessedMeta {
  int landmarks = 0, joints = 0, speakers = 0;
  double frame_rate = 15.0;
  int window = kWindowFrames, seed = kSeedFrames;
  int mfcc_channels = 26;
  Skeleton skeleton;
  std::vector<ReferenceFace> reference_faces;  // per speaker, mm
  Eigen::MatrixX3d rest_pose;                  // J x 3, mm
};

namespace detail {

inline constexpr int32_t kWindowsMagic = 0x43575331;  // "CWS1"

inline nlohmann::json points_to_json(const Eigen::MatrixX3d& p) {
  nlohmann::json j = nlohmann::json::array();
  for (int r = 0; r < p.rows(); ++r) j.push_back({p(r, 0), p(r, 1), p(r, 2)});
  return j;
}

inline Eigen::MatrixX3d points_from_json(const nlohmann::json& j) {
  Eigen::MatrixX3d p(static_cast<int>(j.size()), 3);
  for (size_t r = 0; r < j.size(); ++r)
    for (int c = 0; c < 3; ++c) p(static_cast<int>(r), c) = j[r][static_cast<size_t>(c)].get<double>();
  return p;
}

}  // namespace detail

inline void write_processed_meta(const fs::path& dir, const ProcessedMeta& m,
                                 const nlohmann::json& stats = {}) {
  nlohmann::json j{{"landmarks", m.landmarks},
                   {"joints", m.joints},
                   {"speakers", m.speakers},
                   {"frame_rate", m.frame_rate},
                   {"window", m.window},
                   {"seed", m.seed},
                   {"mfcc_channels", m.mfcc_channels},
                   {"parent_index", m.skeleton.parent_index},
                   {"bone_lengths", m.skeleton.bone_lengths},
                   {"rest_pose", detail::points_to_json(m.rest_pose)}};
  j["reference_faces"] = nlohmann::json::array();
  for (const auto& r : m.reference_faces) j["reference_faces"].push_back(detail::points_to_json(r.positions));
  if (!stats.is_null() && !stats.empty()) j["stats"] = stats;
  std::ofstream f(dir / "meta.json");
  if (!f) throw IoError("write_processed_meta: cannot open meta.json");
  f << j.dump(1) << '\n';
}

inline ProcessedMeta read_processed_meta(const fs::path& dir) {
  std::ifstream f(dir / "meta.json");
  if (!f) throw IoError("read_processed_meta: missing meta.json in " + dir.string());
  nlohmann::json j;
  try {
    f >> j;
  } catch (const nlohmann::json::exception& e) {
    throw IoError("read_processed_meta: bad JSON: " + std::string(e.what()));
  }
  ProcessedMeta m;
  m.landmarks = j.at("landmarks").get<int>();
  m.joints = j.at("joints").get<int>();
  m.speakers = j.at("speakers").get<int>();
  m.frame_rate = j.at("frame_rate").get<double>();
  m.window = j.at("window").get<int>();
  m.seed = j.at("seed").get<int>();
  m.mfcc_channels = j.at("mfcc_channels").get<int>();
  m.skeleton.parent_index = j.at("parent_index").get<std::vector<int>>();
  m.skeleton.bone_lengths = j.at("bone_lengths").get<std::vector<double>>();
  m.skeleton.joint_count = static_cast<int>(m.skeleton.parent_index.size());
  m.skeleton.validate();
  m.rest_pose = detail::points_from_json(j.at("rest_pose"));
  for (const auto& r : j.at("reference_faces"))
    m.reference_faces.push_back(ReferenceFace{detail::points_from_json(r)});
  require(static_cast<int>(m.reference_faces.size()) == m.speakers,
          "read_processed_meta: reference face count");
  return m;
}

inline void write_windows(const fs::path& path, const std::vector<ProcessedWindow>& ws) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("write_windows: cannot open " + path.string());
  detail::write_i32(f, detail::kWindowsMagic);
  detail::write_i32(f, static_cast<int32_t>(ws.size()));
  for (const auto& pw : ws) {
    detail::write_i32(f, pw.window.speaker);
    detail::write_mat(f, pw.window.mfcc);
    detail::write_mat(f, pw.window.face_deltas);
    detail::write_mat(f, pw.window.pose_units);
    detail::write_i32(f, static_cast<int32_t>(pw.window.transcript.size()));
    for (const auto& w : pw.window.transcript) {
      detail::write_string(f, w.word);
      detail::write_i32(f, w.start_frame);
      detail::write_i32(f, w.end_frame);
    }
    detail::write_i32(f, pw.audio.sample_rate);
    detail::write_i32(f, static_cast<int32_t>(pw.audio.samples.size()));
    f.write(reinterpret_cast<const char*>(pw.audio.samples.data()),
            static_cast<std::streamsize>(pw.audio.samples.size() * sizeof(double)));
  }
  if (!f) throw IoError("write_windows: write failed for " + path.string());
}

inline std::vector<ProcessedWindow> read_windows(const fs::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("read_windows: cannot open " + path.string());
  if (detail::read_i32(f) != detail::kWindowsMagic)
    throw IoError("read_windows: bad magic in " + path.string());
  const int n = detail::read_i32(f);
  std::vector<ProcessedWindow> out(static_cast<size_t>(n));
  for (auto& pw : out) {
    pw.window.speaker = detail::read_i32(f);
    pw.window.mfcc = detail::read_mat(f);
    pw.window.face_deltas = detail::read_mat(f);
    pw.window.pose_units = detail::read_mat(f);
    const int nw = detail::read_i32(f);
    pw.window.transcript.resize(static_cast<size_t>(nw));
    for (auto& w : pw.window.transcript) {
      w.word = detail::read_string(f);
      w.start_frame = detail::read_i32(f);
      w.end_frame = detail::read_i32(f);
    }
    pw.audio.sample_rate = detail::read_i32(f);
    const int ns = detail::read_i32(f);
    pw.audio.samples.resize(static_cast<size_t>(ns));
    f.read(reinterpret_cast<char*>(pw.audio.samples.data()),
           static_cast<std::streamsize>(pw.audio.samples.size() * sizeof(double)));
    if (!f) throw IoError("read_windows: truncated file " + path.string());
  }
  return out;
}

// ----------------------------------------------------------------------------
// preprocess

struct PreprocessOptions {
  int stride = 10;
  double anchor_rate = 5.0;
  int window = kWindowFrames;
  int seed = kSeedFrames;
  int mfcc_channels = 26;
};

struct PreprocessResult {
  int clips_total = 0;
  int clips_skipped = 0;
  std::map<std::string, int> window_counts;  // split -> windows

  bool ok() const {
    return clips_total > 0 && clips_skipped * 10 <= clips_total;
  }
};

namespace detail {

inline Eigen::MatrixX3d per_landmark_median(const std::vector<const FaceLandmarkSequence*>& seqs) {
  require(!seqs.empty(), "per_landmark_median: no sequences");
  const int L = seqs[0]->landmarks();
  Eigen::MatrixX3d out(L, 3);
  std::vector<double> vals;
  for (int l = 0; l < L; ++l) {
    for (int a = 0; a < 3; ++a) {
      vals.clear();
      for (const auto* s : seqs)
        for (int t = 0; t < s->frames(); ++t) vals.push_back(s->positions.data(t, 3 * l + a));
      const size_t mid = vals.size() / 2;
      std::nth_element(vals.begin(), vals.begin() + static_cast<long>(mid), vals.end());
      out(l, a) = vals[mid];
    }
  }
  return out;
}

}  // namespace detail

// Raw clip corpus -> windowed training tensors. Clips that fail to load or
// normalize are skipped; the run only counts as successful when at most 10%
// of the clips were dropped (see PreprocessResult::ok).
inline PreprocessResult cmd_preprocess(const fs::path& corpus_root, const fs::path& out_dir,
                                       const PreprocessOptions& opts = {},
                                       std::ostream* log = nullptr) {
  CorpusManifest manifest = read_manifest(corpus_root);
  // Tiny corpora may leave val/test empty under the interleaved split; borrow
  // from the back of the training list so every split is usable.
  if (manifest.val.empty() && manifest.train.size() > 2) {
    manifest.val.push_back(manifest.train.back());
    manifest.train.pop_back();
  }
  if (manifest.test.empty() && manifest.train.size() > 2) {
    manifest.test.push_back(manifest.train.back());
    manifest.train.pop_back();
  }

  struct Loaded {
    std::string split;
    RawClip clip;
  };
  std::vector<Loaded> clips;
  PreprocessResult res;

  auto load_split = [&](const std::vector<std::string>& names, const std::string& split) {
    for (const auto& name : names) {
      ++res.clips_total;
      try {
        RawClip c = read_clip(corpus_root / name);
        c.sample.face = view_normalize(c.sample.face);
        c.sample.face.positions.data =
            anchor_resample(c.sample.face.positions.data, c.sample.face.frame_rate, opts.anchor_rate);
        c.sample.pose.positions.data =
            anchor_resample(c.sample.pose.positions.data, c.sample.pose.frame_rate, opts.anchor_rate);
        clips.push_back({split, std::move(c)});
      } catch (const std::exception& e) {
        ++res.clips_skipped;
        if (log) *log << "preprocess: skipping " << name << ": " << e.what() << '\n';
      }
    }
  };
  load_split(manifest.train, "train");
  load_split(manifest.val, "val");
  load_split(manifest.test, "test");
  if (clips.empty()) throw EmptyCorpus("cmd_preprocess: no usable clips");

  ProcessedMeta meta;
  meta.skeleton = clips[0].clip.skeleton;
  meta.landmarks = clips[0].clip.sample.face.landmarks();
  meta.joints = meta.skeleton.joint_count;
  meta.speakers = clips[0].clip.sample.speaker_count;
  meta.frame_rate = clips[0].clip.sample.face.frame_rate;
  meta.window = opts.window;
  meta.seed = opts.seed;
  meta.mfcc_channels = opts.mfcc_channels;
  meta.rest_pose = clips[0].clip.sample.pose.positions.frame(0);
  for (const auto& lc : clips) {
    require(lc.clip.skeleton.parent_index == meta.skeleton.parent_index &&
                lc.clip.skeleton.bone_lengths == meta.skeleton.bone_lengths,
            "cmd_preprocess: clips disagree on the skeleton");
    require(lc.clip.sample.face.landmarks() == meta.landmarks,
            "cmd_preprocess: clips disagree on the landmark count");
    require(lc.clip.sample.speaker_count == meta.speakers,
            "cmd_preprocess: clips disagree on the speaker count");
  }

  // Per-speaker reference face: coordinate-wise median over the speaker's
  // normalized training frames (all frames of all splits as a fallback for
  // speakers absent from the training split).
  for (int k = 0; k < meta.speakers; ++k) {
    std::vector<const FaceLandmarkSequence*> train_seqs, any_seqs;
    for (const auto& lc : clips) {
      if (lc.clip.sample.speaker != k) continue;
      any_seqs.push_back(&lc.clip.sample.face);
      if (lc.split == "train") train_seqs.push_back(&lc.clip.sample.face);
    }
    if (any_seqs.empty()) throw EmptySplit("cmd_preprocess: no clips for speaker " + std::to_string(k));
    meta.reference_faces.push_back(
        ReferenceFace{detail::per_landmark_median(train_seqs.empty() ? any_seqs : train_seqs)});
  }

  fs::create_directories(out_dir);
  std::map<std::string, std::vector<ProcessedWindow>> split_windows;
  for (const auto& lc : clips) {
    try {
      const ReferenceFace& ref = meta.reference_faces[static_cast<size_t>(lc.clip.sample.speaker)];
      FaceDeltaSequence deltas = face_to_deltas(lc.clip.sample.face, ref);
      PoseUnitSequence units = pose_to_units(lc.clip.sample.pose, meta.skeleton);

      MotionSample prepared = lc.clip.sample;  // carries audio/transcript/speaker
      prepared.face.positions = deltas.deltas;  // windows slice deltas, not positions
      prepared.pose.positions = units.vectors;
      for (const auto& piece : chunk(prepared, opts.window, opts.seed, opts.stride)) {
        ProcessedWindow pw;
        pw.window.speaker = piece.speaker;
        pw.window.transcript = piece.transcript;
        pw.window.mfcc = compute_mfcc(piece.audio, opts.window);
        pw.window.face_deltas = seq_to_stack(piece.face.positions);
        pw.window.pose_units = seq_to_stack(piece.pose.positions);
        pw.audio = piece.audio;
        split_windows[lc.split].push_back(std::move(pw));
      }
    } catch (const std::exception& e) {
      ++res.clips_skipped;
      if (log) *log << "preprocess: skipping clip windows: " << e.what() << '\n';
    }
  }

  for (const auto& split : {"train", "val", "test"}) {
    const auto& ws = split_windows[split];
    res.window_counts[split] = static_cast<int>(ws.size());
    write_windows(out_dir / (std::string(split) + ".bin"), ws);
  }
  if (split_windows["train"].empty()) throw EmptySplit("cmd_preprocess: no training windows");

  nlohmann::json stats{{"clips_total", res.clips_total},
                       {"clips_skipped", res.clips_skipped},
                       {"windows", res.window_counts},
                       {"stride", opts.stride},
                       {"anchor_rate", opts.anchor_rate}};
  write_processed_meta(out_dir, meta, stats);
  return res;
}

// ----------------------------------------------------------------------------
// train

struct TrainOptions {
  OptimizerConfig opt;
  LossWeights weights;
  DimensionPlan dims;
  uint64_t seed = 4;
  bool use_discriminator = true;
  int eval_every = 10;  // validation + best-checkpoint cadence, in epochs
  bool resume = false;
};

struct TrainResult {
  int epochs_run = 0;
  double final_loss = 0;
  double best_val = std::numeric_limits<double>::infinity();
};

namespace detail {

inline Mat unmerge_rows(const Mat& merged, int nodes) {
  const int T = static_cast<int>(merged.rows());
  require(merged.cols() % nodes == 0, "unmerge_rows: width not divisible");
  const int d = static_cast<int>(merged.cols()) / nodes;
  Mat stack(T * nodes, d);
  for (int t = 0; t < T; ++t)
    for (int n = 0; n < nodes; ++n) stack.row(t * nodes + n) = merged.block(t, n * d, 1, d);
  return stack;
}

// Validation score: mean landmark error (mm, on deltas) plus mean joint error
// (mm, after forward kinematics) over deterministic zero-noise synthesis.
inline std::pair<double, double> validation_errors(const Generator& gen,
                                                   const std::vector<ProcessedWindow>& val,
                                                   const TrainerContext& ctx) {
  if (val.empty()) return {0.0, 0.0};
  const int T = gen.cfg.window, L = gen.cfg.landmarks, B = gen.cfg.joints - 1;
  double male_acc = 0, maje_acc = 0;
  for (const auto& pw : val) {
    SynthesisResult syn = synthesize_window(gen, pw.window);
    male_acc += mean_point_error(syn.face_deltas, pw.window.face_deltas);
    const Mat gt_joints = merge_stack(pw.window.pose_units, T, B) * ctx.fk;
    const Mat syn_joints = merge_stack(syn.pose_units, T, B) * ctx.fk;
    maje_acc += mean_point_error(unmerge_rows(syn_joints, gen.cfg.joints),
                                 unmerge_rows(gt_joints, gen.cfg.joints));
  }
  return {male_acc / val.size(), maje_acc / val.size()};
}

inline ReferenceFace mean_reference(const std::vector<ReferenceFace>& refs) {
  require(!refs.empty(), "mean_reference: empty");
  Eigen::MatrixX3d acc = refs[0].positions;
  for (size_t i = 1; i < refs.size(); ++i) acc += refs[i].positions;
  return ReferenceFace{acc / double(refs.size())};
}

inline constexpr int32_t kTrainStateMagic = 0x43545331;  // "CTS1"

inline void save_train_state(const fs::path& path, int next_epoch, double best_val,
                             const std::mt19937_64& rng, const Adam& gen_opt, const Adam& disc_opt) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("save_train_state: cannot open " + path.string());
  write_i32(f, kTrainStateMagic);
  write_i32(f, next_epoch);
  f.write(reinterpret_cast<const char*>(&best_val), sizeof(double));
  std::ostringstream rs;
  rs << rng;
  write_string(f, rs.str());
  gen_opt.save_state(f);
  disc_opt.save_state(f);
}

inline void load_train_state(const fs::path& path, int& next_epoch, double& best_val,
                             std::mt19937_64& rng, Adam& gen_opt, Adam& disc_opt) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("load_train_state: cannot open " + path.string());
  if (read_i32(f) != kTrainStateMagic) throw IoError("load_train_state: bad magic");
  next_epoch = read_i32(f);
  f.read(reinterpret_cast<char*>(&best_val), sizeof(double));
  std::istringstream rs(read_string(f));
  rs >> rng;
  gen_opt.load_state(f);
  disc_opt.load_state(f);
}

}  // namespace detail

inline NetConfig net_config_for(const ProcessedMeta& meta, const DimensionPlan& dims) {
  NetConfig cfg;
  cfg.dims = dims;
  cfg.window = meta.window;
  cfg.seed = meta.seed;
  cfg.landmarks = meta.landmarks;
  cfg.joints = meta.joints;
  cfg.speakers = meta.speakers;
  cfg.mfcc_channels = meta.mfcc_channels;
  return cfg;
}

// Adversarial training over a processed corpus. Writes checkpoint_latest.bin
// + train_state.bin every epoch (resume restores the exact trajectory),
// checkpoint_best.bin at the best validation score, and appends to
// train_log.csv.
inline TrainResult cmd_train(const fs::path& processed_dir, const fs::path& out_dir,
                             const TrainOptions& options, std::ostream* log = nullptr) {
  const ProcessedMeta meta = read_processed_meta(processed_dir);
  auto train_set = read_windows(processed_dir / "train.bin");
  auto val_set = read_windows(processed_dir / "val.bin");
  if (train_set.empty()) throw EmptyCorpus("cmd_train: empty training split");

  const NetConfig cfg = net_config_for(meta, options.dims);
  const GraphSet graphs = GraphSet::build(detail::mean_reference(meta.reference_faces), meta.skeleton);
  std::mt19937_64 rng(options.seed);
  Generator gen(cfg, graphs, rng);
  Discriminator disc(cfg, graphs, rng);

  TrainerContext ctx;
  ctx.reference_faces = meta.reference_faces;
  ctx.skeleton = meta.skeleton;
  ctx.fk = fk_matrix(meta.skeleton);

  Adam gen_opt(options.opt.beta1, options.opt.beta2, options.opt.epsilon);
  Adam disc_opt(options.opt.beta1, options.opt.beta2, options.opt.epsilon);

  fs::create_directories(out_dir);
  const fs::path latest = out_dir / "checkpoint_latest.bin";
  const fs::path best = out_dir / "checkpoint_best.bin";
  const fs::path state = out_dir / "train_state.bin";
  const fs::path csv = out_dir / "train_log.csv";

  int start_epoch = 0;
  double best_val = std::numeric_limits<double>::infinity();
  if (options.resume && fs::exists(state)) {
    load_checkpoint(latest, gen, disc);
    detail::load_train_state(state, start_epoch, best_val, rng, gen_opt, disc_opt);
    if (log) *log << "train: resuming at epoch " << start_epoch << '\n';
  }
  if (!fs::exists(csv) || !options.resume) {
    std::ofstream c(csv);
    c << "epoch,loss_d,loss_rec,loss_csd,loss_g_adv,loss_g_total,val_male_mm,val_maje_mm\n";
  }

  std::vector<size_t> order(train_set.size());
  std::iota(order.begin(), order.end(), size_t{0});

  TrainResult res;
  res.best_val = best_val;
  for (int epoch = start_epoch; epoch < options.opt.epochs; ++epoch) {
    // Shuffle from the identity so the permutation depends only on the RNG
    // state, not on how many epochs this process has already run (resume).
    std::iota(order.begin(), order.end(), size_t{0});
    std::shuffle(order.begin(), order.end(), rng);
    const double decay = std::pow(options.opt.lr_decay, epoch);
    std::map<std::string, double> acc;
    int batches = 0;
    for (size_t start = 0; start < order.size(); start += options.opt.batch_size) {
      std::vector<const TrainWindow*> batch;
      for (size_t i = start; i < order.size() && i < start + static_cast<size_t>(options.opt.batch_size); ++i)
        batch.push_back(&train_set[order[i]].window);
      auto losses = train_step(batch, gen, disc, ctx, options.weights, gen_opt, disc_opt,
                               options.opt.gen_lr * decay, options.opt.disc_lr * decay, rng,
                               options.use_discriminator);
      for (const auto& [k, v] : losses) acc[k] += v;
      ++batches;
    }
    for (auto& [k, v] : acc) v /= batches;

    double val_male = -1, val_maje = -1;
    const bool eval_now = (epoch % options.eval_every == options.eval_every - 1) ||
                          epoch + 1 == options.opt.epochs;
    if (eval_now && !val_set.empty()) {
      std::tie(val_male, val_maje) = detail::validation_errors(gen, val_set, ctx);
      if (val_male + val_maje < best_val) {
        best_val = val_male + val_maje;
        save_checkpoint(best, gen, disc);
      }
    }

    std::ofstream c(csv, std::ios::app);
    c << epoch << ',' << acc["loss_d"] << ',' << acc["loss_rec"] << ',' << acc["loss_csd"] << ','
      << acc["loss_g_adv"] << ',' << acc["loss_g_total"] << ',' << val_male << ',' << val_maje << '\n';
    if (log)
      *log << "train: epoch " << epoch << " loss_g_total " << acc["loss_g_total"]
           << (val_male >= 0 ? " val " + std::to_string(val_male + val_maje) : "") << '\n';

    save_checkpoint(latest, gen, disc);
    detail::save_train_state(state, epoch + 1, best_val, rng, gen_opt, disc_opt);
    res.epochs_run = epoch + 1;
    res.final_loss = acc["loss_g_total"];
  }
  if (!fs::exists(best)) save_checkpoint(best, gen, disc);
  res.best_val = best_val;
  return res;
}

// ----------------------------------------------------------------------------
// train-phoneme

struct PhonemeTrainResult {
  int best_epoch = -1;
  double val_loss = 0;
};

// Trains the audio->lip-shape predictor on the lip rows of the processed
// corpus and saves its parameters next to a small JSON description.
inline PhonemeTrainResult cmd_train_phoneme(const fs::path& processed_dir, const fs::path& out_dir,
                                            const OptimizerConfig& opt, uint64_t seed,
                                            int hidden = 32, std::ostream* log = nullptr) {
  const ProcessedMeta meta = read_processed_meta(processed_dir);
  require(meta.landmarks == 68, "cmd_train_phoneme: needs the 68-landmark layout");
  const LipLayout layout = default_lip_layout();
  const auto order = layout.phoneme_order();
  const int Ll = static_cast<int>(order.size());

  auto build_set = [&](const std::vector<ProcessedWindow>& ws) {
    std::vector<PhonemeSample> out;
    for (const auto& pw : ws) {
      PhonemeSample s;
      s.spectrogram = mel_spectrogram(pw.audio, meta.window, meta.mfcc_channels);
      s.lips_merged = Mat(meta.window, 3 * Ll);
      const auto& ref = meta.reference_faces[static_cast<size_t>(pw.window.speaker)].positions;
      for (int t = 0; t < meta.window; ++t)
        for (int li = 0; li < Ll; ++li) {
          const int l = order[static_cast<size_t>(li)];
          s.lips_merged.block(t, 3 * li, 1, 3) =
              pw.window.face_deltas.row(t * meta.landmarks + l) + ref.row(l);
        }
      out.push_back(std::move(s));
    }
    return out;
  };
  auto train_samples = build_set(read_windows(processed_dir / "train.bin"));
  auto val_samples = build_set(read_windows(processed_dir / "val.bin"));

  std::mt19937_64 rng(seed);
  PhonemePredictor net(meta.window, Ll, hidden, rng);
  PhonemeTrainResult res;
  res.best_epoch = train_phoneme(train_samples, val_samples, net, opt, rng, -1,
                                 [&](int epoch, double tr, double va) {
                                   if (log && epoch % 10 == 0)
                                     *log << "phoneme: epoch " << epoch << " train " << tr
                                          << " val " << va << '\n';
                                 });
  res.val_loss = val_samples.empty() ? phoneme_epoch_loss(net, train_samples)
                                     : phoneme_epoch_loss(net, val_samples);

  fs::create_directories(out_dir);
  save_params(out_dir / "phoneme.bin", net.params);
  nlohmann::json j{{"hidden", hidden}, {"lip_landmarks", Ll}, {"window", meta.window},
                   {"best_epoch", res.best_epoch}, {"val_loss", res.val_loss}};
  std::ofstream f(out_dir / "phoneme.json");
  f << j.dump(1) << '\n';
  return res;
}

// ----------------------------------------------------------------------------
// synthesize

struct SynthesizeOptions {
  int speaker = 0;
  fs::path phoneme_dir;  // empty: skip lip superposition
  uint64_t seed = 4;     // network build seed; inference itself is zero-noise
};

inline std::vector<WordSpan> parse_transcript(const fs::path& path) {
  std::ifstream tsv(path);
  if (!tsv) throw IoError("parse_transcript: cannot open " + path.string());
  std::vector<WordSpan> out;
  std::string line;
  while (std::getline(tsv, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    WordSpan w;
    if (!(ls >> w.word >> w.start_frame >> w.end_frame))
      throw IoError("parse_transcript: bad line: " + line);
    out.push_back(w);
  }
  return out;
}

namespace detail {

// Windows start every (window - seed) frames; each contributes its non-seed
// frames, the first contributes all of them.
struct StitchPlan {
  std::vector<int> starts;
  int total_frames = 0;
};

inline StitchPlan stitch_plan(int available_frames, int window, int seed) {
  if (available_frames < window) throw TooShortAudio("synthesize: audio shorter than one window");
  StitchPlan p;
  const int step = window - seed;
  for (int s = 0; s + window <= available_frames; s += step) p.starts.push_back(s);
  p.total_frames = window + step * (static_cast<int>(p.starts.size()) - 1);
  return p;
}

inline AudioClip slice_audio(const AudioClip& audio, int start_frame, int frames, double frame_rate) {
  AudioClip out;
  out.sample_rate = audio.sample_rate;
  const double spf = double(audio.sample_rate) / frame_rate;
  const auto s0 = static_cast<size_t>(std::llround(start_frame * spf));
  const auto s1 = static_cast<size_t>(std::llround((start_frame + frames) * spf));
  for (size_t s = s0; s < s1 && s < audio.samples.size(); ++s) out.samples.push_back(audio.samples[s]);
  return out;
}

inline std::vector<WordSpan> slice_transcript(const std::vector<WordSpan>& words, int start,
                                              int frames) {
  std::vector<WordSpan> out;
  for (const auto& w : words) {
    if (w.start_frame < 0 || w.end_frame <= start || w.start_frame >= start + frames) continue;
    WordSpan local = w;
    local.start_frame = std::max(0, w.start_frame - start);
    local.end_frame = std::min(frames, w.end_frame - start);
    out.push_back(local);
  }
  return out;
}

}  // namespace detail

// Whole-take synthesis: windows are stitched autoregressively — the last seed
// frames of each synthesized window seed the next one; the first window is
// seeded by the reference face (zero deltas) and the rest pose.
inline int cmd_synthesize(const fs::path& processed_dir, const fs::path& checkpoint,
                          const fs::path& audio_path, const fs::path& transcript_path,
                          const fs::path& out_path, const SynthesizeOptions& options = {}) {
  const ProcessedMeta meta = read_processed_meta(processed_dir);
  require(options.speaker >= 0 && options.speaker < meta.speakers,
          "cmd_synthesize: speaker id out of range");
  const int T = meta.window, Ts = meta.seed, L = meta.landmarks, B = meta.joints - 1;

  const NetConfig base = net_config_for(meta, DimensionPlan{});
  // The checkpoint dictates the dimension plan; probe it before building.
  NetConfig cfg = base;
  {
    std::ifstream f(checkpoint, std::ios::binary);
    if (!f) throw IoError("cmd_synthesize: cannot open checkpoint " + checkpoint.string());
    if (detail::read_i32(f) != detail::kCheckpointMagic) throw IoError("cmd_synthesize: bad checkpoint");
    detail::read_i32(f);
    cfg.dims = detail::read_plan(f);
  }
  const GraphSet graphs = GraphSet::build(detail::mean_reference(meta.reference_faces), meta.skeleton);
  std::mt19937_64 rng(options.seed);
  Generator gen(cfg, graphs, rng);
  Discriminator disc(cfg, graphs, rng);
  load_checkpoint(checkpoint, gen, disc);

  const AudioClip audio = read_wav(audio_path);
  const auto transcript = transcript_path.empty() ? std::vector<WordSpan>{}
                                                  : parse_transcript(transcript_path);
  const int available =
      static_cast<int>(audio.samples.size() * meta.frame_rate / audio.sample_rate);
  const auto plan = detail::stitch_plan(available, T, Ts);

  // Seed for the first window: reference face (zero deltas), rest-pose bone
  // directions.
  Mat seed_deltas = Mat::Zero(Ts * L, 3);
  Mat seed_units(Ts * B, 3);
  for (int b = 0; b < B; ++b) {
    const Vec3 d = (meta.rest_pose.row(b + 1) - meta.rest_pose.row(meta.skeleton.parent_index[b + 1]))
                       .transpose();
    require(d.norm() > 1e-9, "cmd_synthesize: degenerate rest pose");
    for (int t = 0; t < Ts; ++t) seed_units.row(t * B + b) = d.normalized().transpose();
  }

  Mat out_deltas(plan.total_frames * L, 3);
  Mat out_units(plan.total_frames * B, 3);
  std::vector<AudioClip> window_audio;
  for (size_t wi = 0; wi < plan.starts.size(); ++wi) {
    const int start = plan.starts[wi];
    TrainWindow w;
    w.speaker = options.speaker;
    w.transcript = detail::slice_transcript(transcript, start, T);
    window_audio.push_back(detail::slice_audio(audio, start, T, meta.frame_rate));
    w.mfcc = compute_mfcc(window_audio.back(), T);
    w.face_deltas = seed_deltas;
    w.pose_units = seed_units;
    SynthesisResult syn = synthesize_window(gen, w);

    const int copy_from = wi == 0 ? 0 : Ts;  // later windows re-emit only new frames
    out_deltas.middleRows((start + copy_from) * L, (T - copy_from) * L) =
        syn.face_deltas.middleRows(copy_from * L, (T - copy_from) * L);
    out_units.middleRows((start + copy_from) * B, (T - copy_from) * B) =
        syn.pose_units.middleRows(copy_from * B, (T - copy_from) * B);

    seed_deltas = syn.face_deltas.bottomRows(Ts * L);
    seed_units = syn.pose_units.bottomRows(Ts * B);
  }

  const ReferenceFace& ref = meta.reference_faces[static_cast<size_t>(options.speaker)];
  FaceDeltaSequence deltas;
  deltas.deltas = stack_to_seq(out_deltas, plan.total_frames, L);
  FaceLandmarkSequence face = deltas_to_face(deltas, ref, meta.frame_rate);
  PoseUnitSequence units;
  units.vectors = stack_to_seq(out_units, plan.total_frames, B);
  PoseJointSequence pose = units_to_pose(units, meta.skeleton, meta.frame_rate);

  CombinedFaceSequence combined{face.positions};
  if (!options.phoneme_dir.empty()) {
    std::ifstream pj(options.phoneme_dir / "phoneme.json");
    if (!pj) throw IoError("cmd_synthesize: missing phoneme.json");
    nlohmann::json j;
    pj >> j;
    std::mt19937_64 prng(options.seed);
    PhonemePredictor ph(meta.window, j.at("lip_landmarks").get<int>(), j.at("hidden").get<int>(),
                        prng);
    load_params(options.phoneme_dir / "phoneme.bin", ph.params);
    const int Ll = ph.lip_landmarks;
    Mat lips_stack(plan.total_frames * Ll, 3);
    for (size_t wi = 0; wi < plan.starts.size(); ++wi) {
      const Mat pred = ph.predict(window_audio[wi]).val();  // (T*Ll) x 3
      const int copy_from = wi == 0 ? 0 : Ts;
      lips_stack.middleRows((plan.starts[wi] + copy_from) * Ll, (T - copy_from) * Ll) =
          pred.middleRows(copy_from * Ll, (T - copy_from) * Ll);
    }
    combined = superpose_lips(face.positions, ref,
                              stack_to_seq(lips_stack, plan.total_frames, Ll), default_lip_layout());
  }

  JointRotationSequence rots =
      positions_to_rotations(pose, meta.rest_pose, meta.skeleton, /*allow_antiparallel=*/true);
  export_animation(rots, combined, meta.skeleton, out_path);
  return plan.total_frames;
}

// ----------------------------------------------------------------------------
// evaluate

struct EvaluateOptions {
  uint64_t seed = 4;
  int ae_epochs = 60;
  int ae_feature_dim = 16;
  int ae_hidden = 32;
};

// Test-split metrics for a trained checkpoint: positional errors in the
// shared 1000 mm bounding-box frame plus Fréchet feature distances against
// autoencoders fitted on the training split's ground truth.
inline MetricReport cmd_evaluate(const fs::path& processed_dir, const fs::path& checkpoint,
                                 const fs::path& out_dir, const EvaluateOptions& options = {},
                                 std::ostream* log = nullptr) {
  const ProcessedMeta meta = read_processed_meta(processed_dir);
  auto test_set = read_windows(processed_dir / "test.bin");
  auto train_set = read_windows(processed_dir / "train.bin");
  if (test_set.empty()) throw EmptySplit("cmd_evaluate: empty test split");
  const int T = meta.window, L = meta.landmarks, J = meta.joints, B = J - 1;

  NetConfig cfg = net_config_for(meta, DimensionPlan{});
  {
    std::ifstream f(checkpoint, std::ios::binary);
    if (!f) throw IoError("cmd_evaluate: cannot open checkpoint " + checkpoint.string());
    if (detail::read_i32(f) != detail::kCheckpointMagic) throw IoError("cmd_evaluate: bad checkpoint");
    detail::read_i32(f);
    cfg.dims = detail::read_plan(f);
  }
  const GraphSet graphs = GraphSet::build(detail::mean_reference(meta.reference_faces), meta.skeleton);
  std::mt19937_64 rng(options.seed);
  Generator gen(cfg, graphs, rng);
  Discriminator disc(cfg, graphs, rng);
  load_checkpoint(checkpoint, gen, disc);
  const Mat fk = fk_matrix(meta.skeleton);

  auto face_of = [&](const Mat& deltas_stack, int speaker) {
    Mat merged = detail::merge_stack(deltas_stack, T, L);
    Mat ref(1, 3 * L);
    const auto& r = meta.reference_faces[static_cast<size_t>(speaker)].positions;
    for (int l = 0; l < L; ++l) ref.block(0, 3 * l, 1, 3) = r.row(l);
    merged.rowwise() += Eigen::RowVectorXd(ref.row(0));
    return PointSeq(merged);
  };
  auto pose_of = [&](const Mat& units_stack) {
    return PointSeq(Mat(detail::merge_stack(units_stack, T, B) * fk));
  };

  std::vector<PointSeq> gt_faces, syn_faces, gt_poses, syn_poses;
  for (const auto& pw : test_set) {
    SynthesisResult syn = synthesize_window(gen, pw.window);
    gt_faces.push_back(face_of(pw.window.face_deltas, pw.window.speaker));
    syn_faces.push_back(face_of(syn.face_deltas, pw.window.speaker));
    gt_poses.push_back(pose_of(pw.window.pose_units));
    syn_poses.push_back(pose_of(syn.pose_units));
  }
  std::vector<PointSeq> train_faces, train_poses;
  for (const auto& pw : train_set) {
    train_faces.push_back(face_of(pw.window.face_deltas, pw.window.speaker));
    train_poses.push_back(pose_of(pw.window.pose_units));
  }

  // One scale for everything, fitted on the ground-truth test split.
  std::vector<PointSeq> bbox_probe(gt_faces);
  bbox_probe.insert(bbox_probe.end(), gt_poses.begin(), gt_poses.end());
  const double scale = scale_to_unit_bbox(bbox_probe);
  for (auto* set : {&gt_faces, &syn_faces, &gt_poses, &syn_poses, &train_faces, &train_poses})
    for (auto& s : *set) s.data *= scale;

  MetricReport report;
  report.sample_count = static_cast<int>(test_set.size());
  report.male_mm = male(gt_faces, syn_faces);
  report.maje_mm = maje(gt_poses, syn_poses);
  report.mace_lm = mace(gt_faces, syn_faces, meta.frame_rate);
  report.mace_p = mace(gt_poses, syn_poses, meta.frame_rate);

  WindowAutoencoder face_ae(T, 3 * L, options.ae_feature_dim, options.ae_hidden, rng);
  train_autoencoder(face_ae, train_faces, {}, rng, options.ae_epochs);
  report.fld = fld(gt_faces, syn_faces, face_ae);
  WindowAutoencoder pose_ae(T, 3 * J, options.ae_feature_dim, options.ae_hidden, rng);
  train_autoencoder(pose_ae, train_poses, {}, rng, options.ae_epochs);
  report.fgd = fgd(gt_poses, syn_poses, pose_ae);

  fs::create_directories(out_dir);
  {
    std::ofstream f(out_dir / "metrics.json");
    f << report_to_json(report).dump(1) << '\n';
  }
  {
    std::ofstream f(out_dir / "metrics.csv");
    f << report_to_csv(report);
  }
  if (log)
    *log << "evaluate: male " << report.male_mm << " maje " << report.maje_mm << " fld "
         << report.fld << " fgd " << report.fgd << '\n';
  return report;
}

}  // namespace cosyn
