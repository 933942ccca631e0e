#pragma once

#include <random>
#include <string>
#include <vector>

#include "cosyn/chunk.hpp"
#include "cosyn/graphs.hpp"
#include "cosyn/layers.hpp"
#include "cosyn/mfcc.hpp"

namespace cosyn {

// Latent dimensions of all generator embeddings; H is their fused width.
struct DimensionPlan {
  int d_audio = 32;        // D_a
  int d_text = 32;         // D_w
  int d_speaker = 8;       // D_k
  int d_face_feat = 8;     // D_f (per-landmark graph features)
  int d_face_comp = 32;    // D_l (per-component graph features)
  int d_face_latent = 32;  // D_l~
  int d_pose_feat = 32;    // D_u
  int d_pose_comp = 32;    // D_v
  int d_pose_latent = 32;  // D_v~

  int fused() const { return d_audio + d_text + d_speaker + d_face_latent + d_pose_latent; }

  bool operator==(const DimensionPlan&) const = default;

  static DimensionPlan miniature() {
    DimensionPlan p;
    p.d_audio = p.d_text = p.d_speaker = p.d_face_feat = p.d_face_comp = p.d_face_latent =
        p.d_pose_feat = p.d_pose_comp = p.d_pose_latent = 4;
    return p;
  }
};

// Graphs and collation plans shared by generator and discriminator encoders.
struct GraphSet {
  AcGraph face_landmark, face_anatomy, pose_bone, pose_anatomy;
  ComponentPartition face_partition, pose_partition;
  CollationPlan face_plan, pose_plan;

  static GraphSet build(const ReferenceFace& tmpl, const Skeleton& skel, int temporal_window = 2) {
    GraphSet g;
    g.face_partition = default_face_partition(tmpl.landmarks());
    g.pose_partition = default_pose_partition(skel);
    g.face_landmark = build_face_landmark_graph(tmpl, g.face_partition, temporal_window);
    g.face_anatomy = build_face_anatomy_graph(g.face_partition, temporal_window);
    g.pose_bone = build_pose_graph(skel, temporal_window);
    g.pose_anatomy = build_pose_anatomy_graph(temporal_window);
    g.face_plan = CollationPlan::from_partition(g.face_partition);
    g.pose_plan = CollationPlan::from_partition(g.pose_partition);
    return g;
  }
};

struct NetConfig {
  DimensionPlan dims;
  int window = kWindowFrames;  // T
  int seed = kSeedFrames;      // T_s
  int landmarks = 68;          // L
  int joints = 10;             // J
  int speakers = 4;            // K
  int mfcc_channels = 26;
  int embed_buckets = 64;
  int embed_dim = 16;
  double slope = 0.2;
};

namespace detail {

inline int word_bucket(const std::string& w, int buckets) {
  uint64_t h = 1469598103934665603ull;  // FNV-1a
  for (char c : w) {
    h ^= static_cast<unsigned char>(c);
    h *= 1099511628211ull;
  }
  return 1 + static_cast<int>(h % static_cast<uint64_t>(buckets - 1));  // 0 = padding
}

}  // namespace detail

// Per-frame word bucket ids: explicit spans when present, else words spread
// uniformly over the frames; frames with no word use the padding bucket 0.
inline std::vector<int> frame_word_ids(const std::vector<WordSpan>& transcript, int frames,
                                       int buckets) {
  std::vector<int> ids(frames, 0);
  if (transcript.empty()) return ids;
  bool aligned = true;
  for (const auto& w : transcript) aligned = aligned && w.start_frame >= 0;
  if (aligned) {
    for (const auto& w : transcript)
      for (int t = std::max(0, w.start_frame); t < std::min(frames, w.end_frame); ++t)
        ids[t] = detail::word_bucket(w.word, buckets);
  } else {
    const int n = static_cast<int>(transcript.size());
    for (int t = 0; t < frames; ++t) ids[t] = detail::word_bucket(transcript[t * n / frames].word, buckets);
  }
  return ids;
}

// Face or pose branch shared by generator (T_s -> T) and discriminator (T -> T):
// landmark/bone ST-graph convolutions, collation, anatomy graph convolutions,
// then spatial and temporal convolutions to the latent width.
struct ExpressionEncoder {
  std::vector<nn::StGraphConv> node_blocks, comp_blocks;
  nn::Linear conv_s;
  nn::TemporalConv conv_t_same;
  nn::TemporalUpsample conv_t_up;
  CollationPlan plan;
  int frames_in = 0, frames_out = 0, nodes = 0;
  double slope = 0.2;

  ExpressionEncoder() = default;
  ExpressionEncoder(ad::ParamStore& ps, const std::string& name, const AcGraph& node_graph,
                    const AcGraph& comp_graph, const CollationPlan& collation, int d_feat,
                    int d_comp, int d_latent, int t_in, int t_out, std::mt19937_64& rng)
      : plan(collation), frames_in(t_in), frames_out(t_out), nodes(node_graph.node_count) {
    node_blocks.emplace_back(ps, name + ".g0", node_graph, 3, d_feat, rng);
    node_blocks.emplace_back(ps, name + ".g1", node_graph, d_feat, d_feat, rng);
    node_blocks.emplace_back(ps, name + ".g2", node_graph, d_feat, d_feat, rng);
    const int collated = plan.pad_to * d_feat;
    comp_blocks.emplace_back(ps, name + ".c0", comp_graph, collated, d_comp, rng);
    comp_blocks.emplace_back(ps, name + ".c1", comp_graph, d_comp, d_comp, rng);
    comp_blocks.emplace_back(ps, name + ".c2", comp_graph, d_comp, d_comp, rng);
    conv_s = nn::Linear(ps, name + ".convs", plan.components() * d_comp, d_latent, rng);
    if (t_in == t_out)
      conv_t_same = nn::TemporalConv(ps, name + ".convt", d_latent, d_latent, 3, rng);
    else
      conv_t_up = nn::TemporalUpsample(ps, name + ".convt", d_latent, d_latent, t_in, t_out, rng);
  }

  // x: (frames_in * nodes) x 3 stack of unit vectors or landmark deltas.
  ad::Var operator()(const ad::Var& x) const {
    ad::Var h = x;
    for (const auto& blk : node_blocks) h = blk(h, frames_in);
    h = nn::collate_var(h, frames_in, plan);
    for (const auto& blk : comp_blocks) h = blk(h, frames_in);
    h = ad::merge_nodes(h, frames_in, plan.components());
    h = ad::leaky_relu(conv_s(h), slope);
    return frames_in == frames_out ? conv_t_same(h, frames_out) : conv_t_up(h);
  }
};

// Decoder branch: temporal conv, spatial (per-frame) map, fully-connected
// head to per-node 3D outputs.
struct MotionDecoder {
  nn::TemporalConv conv_t;
  nn::Linear conv_s, fc_hidden, fc_out;
  int out_nodes = 0;
  double slope = 0.2;

  MotionDecoder() = default;
  MotionDecoder(ad::ParamStore& ps, const std::string& name, int fused, int nodes,
                std::mt19937_64& rng)
      : out_nodes(nodes) {
    conv_t = nn::TemporalConv(ps, name + ".convt", fused, fused, 3, rng);
    conv_s = nn::Linear(ps, name + ".convs", fused, fused, rng);
    fc_hidden = nn::Linear(ps, name + ".fc0", fused, fused, rng);
    fc_out = nn::Linear(ps, name + ".fc1", fused, 3 * nodes, rng);
  }

  // fused: T x H -> (T * out_nodes) x 3.
  ad::Var operator()(const ad::Var& fused, int frames) const {
    ad::Var h = ad::leaky_relu(conv_t(fused, frames), slope);
    h = ad::leaky_relu(conv_s(h), slope);
    h = ad::leaky_relu(fc_hidden(h), slope);
    return ad::split_nodes(fc_out(h), out_nodes);
  }
};

struct GeneratorOutput {
  ad::Var face_deltas;  // (T*L) x 3, mm
  ad::Var pose_units;   // (T*(J-1)) x 3, unit rows
};

class Generator {
 public:
  NetConfig cfg;
  ad::ParamStore params;

  Generator() = default;
  Generator(const NetConfig& config, const GraphSet& graphs, std::mt19937_64& rng) : cfg(config) {
    const auto& d = cfg.dims;
    audio_conv0_ = nn::TemporalConv(params, "mfcc.conv0", cfg.mfcc_channels, d.d_audio, 3, rng);
    audio_conv1_ = nn::TemporalConv(params, "mfcc.conv1", d.d_audio, d.d_audio, 3, rng);
    audio_fc_ = nn::Linear(params, "mfcc.fc", d.d_audio, d.d_audio, rng);

    embed_ = params.add("text.embed", ad::glorot(cfg.embed_buckets, cfg.embed_dim, rng,
                                                 cfg.embed_buckets, cfg.embed_dim));
    text_conv0_ = nn::TemporalConv(params, "text.conv0", cfg.embed_dim, d.d_text, 3, rng);
    text_conv1_ = nn::TemporalConv(params, "text.conv1", d.d_text, d.d_text, 3, rng);

    speaker_fc_ = nn::Linear(params, "speaker.fc", cfg.speakers, 16, rng);
    speaker_mu_ = nn::Linear(params, "speaker.mu", 16, d.d_speaker, rng);
    speaker_sigma_ = nn::Linear(params, "speaker.sigma", 16, d.d_speaker, rng);

    face_enc_ = ExpressionEncoder(params, "face_enc", graphs.face_landmark, graphs.face_anatomy,
                                  graphs.face_plan, d.d_face_feat, d.d_face_comp, d.d_face_latent,
                                  cfg.seed, cfg.window, rng);
    pose_enc_ = ExpressionEncoder(params, "pose_enc", graphs.pose_bone, graphs.pose_anatomy,
                                  graphs.pose_plan, d.d_pose_feat, d.d_pose_comp, d.d_pose_latent,
                                  cfg.seed, cfg.window, rng);

    face_dec_ = MotionDecoder(params, "face_dec", d.fused(), cfg.landmarks, rng);
    pose_dec_ = MotionDecoder(params, "pose_dec", d.fused(), cfg.joints - 1, rng);
  }

  ad::Var encode_audio(const ad::Var& mfcc) const {
    if (mfcc.cols() != cfg.mfcc_channels) throw ShapeMismatch("encode_audio: MFCC width");
    const int T = mfcc.rows();
    ad::Var h = ad::leaky_relu(audio_conv0_(mfcc, T), cfg.slope);
    h = ad::leaky_relu(audio_conv1_(h, T), cfg.slope);
    return audio_fc_(h);
  }

  ad::Var encode_text(const std::vector<WordSpan>& transcript, int frames) const {
    auto ids = frame_word_ids(transcript, frames, cfg.embed_buckets);
    ad::Var h = ad::rows_select(embed_, ids);
    h = ad::leaky_relu(text_conv0_(h, frames), cfg.slope);
    return text_conv1_(h, frames);
  }

  struct SpeakerLatent {
    ad::Var mu, sigma;  // 1 x D_k each; sigma strictly positive (softplus)
  };

  SpeakerLatent encode_speaker(int speaker) const {
    require(speaker >= 0 && speaker < cfg.speakers, "encode_speaker: id out of range");
    Mat onehot = Mat::Zero(1, cfg.speakers);
    onehot(0, speaker) = 1.0;
    return encode_speaker(ad::Var::constant(onehot));
  }

  SpeakerLatent encode_speaker(const ad::Var& onehot) const {
    if (onehot.rows() != 1 || onehot.cols() != cfg.speakers)
      throw ShapeMismatch("encode_speaker: one-hot shape");
    double s = onehot.val().sum();
    for (int c = 0; c < onehot.cols(); ++c) {
      const double v = onehot.val()(0, c);
      if (v != 0.0 && v != 1.0) throw NotOneHot("encode_speaker: entries must be 0 or 1");
    }
    if (std::abs(s - 1.0) > 1e-12) throw NotOneHot("encode_speaker: one-hot must sum to 1");
    ad::Var h = ad::leaky_relu(speaker_fc_(onehot), cfg.slope);
    return {speaker_mu_(h), ad::softplus(speaker_sigma_(h))};
  }

  // Reparameterized sample: k = mu + sqrt(sigma) .* noise.
  ad::Var sample_speaker(const SpeakerLatent& latent, const Mat& noise) const {
    return ad::add(latent.mu, ad::cmul(ad::sqrt(latent.sigma), noise));
  }

  ad::Var encode_face(const ad::Var& face_seed_deltas) const { return face_enc_(face_seed_deltas); }
  ad::Var encode_pose(const ad::Var& pose_seed_units) const { return pose_enc_(pose_seed_units); }

  // Channel-wise concatenation in the fixed order (audio, text, speaker, face, pose).
  ad::Var fuse(const ad::Var& audio, const ad::Var& text, const ad::Var& speaker,
               const ad::Var& face, const ad::Var& pose) const {
    ad::Var k_rep = ad::repeat_row(speaker, audio.rows());
    return ad::concat_cols({audio, text, k_rep, face, pose});
  }

  ad::Var decode_face(const ad::Var& fused) const {
    if (fused.cols() != cfg.dims.fused()) throw ShapeMismatch("decode_face: fused width");
    return face_dec_(fused, fused.rows());
  }

  // Raw decoder output renormalized to unit rows; representation-preserving
  // since downstream reconstruction divides by the norm anyway.
  ad::Var decode_pose(const ad::Var& fused) const {
    if (fused.cols() != cfg.dims.fused()) throw ShapeMismatch("decode_pose: fused width");
    return ad::normalize_rows(pose_dec_(fused, fused.rows()));
  }

  GeneratorOutput forward(const Mat& mfcc, const std::vector<WordSpan>& transcript, int speaker,
                          const Mat& face_seed_deltas, const Mat& pose_seed_units,
                          const Mat& speaker_noise) const {
    ad::Var a = encode_audio(ad::Var::constant(mfcc));
    ad::Var w = encode_text(transcript, cfg.window);
    ad::Var k = sample_speaker(encode_speaker(speaker), speaker_noise);
    ad::Var l = encode_face(ad::Var::constant(face_seed_deltas));
    ad::Var v = encode_pose(ad::Var::constant(pose_seed_units));
    ad::Var fused = fuse(a, w, k, l, v);
    return {decode_face(fused), decode_pose(fused)};
  }

 private:
  nn::TemporalConv audio_conv0_, audio_conv1_;
  nn::Linear audio_fc_;
  ad::Var embed_;
  nn::TemporalConv text_conv0_, text_conv1_;
  nn::Linear speaker_fc_, speaker_mu_, speaker_sigma_;
  ExpressionEncoder face_enc_, pose_enc_;
  MotionDecoder face_dec_, pose_dec_;
};

// Same encoder architecture as the generator, learned separately, over full-
// length inputs; sigmoid classifier head on the temporally pooled embedding.
class Discriminator {
 public:
  NetConfig cfg;
  ad::ParamStore params;

  Discriminator() = default;
  Discriminator(const NetConfig& config, const GraphSet& graphs, std::mt19937_64& rng)
      : cfg(config) {
    const auto& d = cfg.dims;
    face_enc_ = ExpressionEncoder(params, "disc_face", graphs.face_landmark, graphs.face_anatomy,
                                  graphs.face_plan, d.d_face_feat, d.d_face_comp, d.d_face_latent,
                                  cfg.window, cfg.window, rng);
    pose_enc_ = ExpressionEncoder(params, "disc_pose", graphs.pose_bone, graphs.pose_anatomy,
                                  graphs.pose_plan, d.d_pose_feat, d.d_pose_comp, d.d_pose_latent,
                                  cfg.window, cfg.window, rng);
    head0_ = nn::Linear(params, "disc_head.fc0", d.d_face_latent + d.d_pose_latent, 16, rng);
    head1_ = nn::Linear(params, "disc_head.fc1", 16, 1, rng);
  }

  // face: (T*L) x 3 deltas; pose: (T*(J-1)) x 3 units -> probability in (0,1).
  ad::Var discriminate(const ad::Var& face_deltas, const ad::Var& pose_units) const {
    if (face_deltas.rows() != cfg.window * cfg.landmarks)
      throw ShapeMismatch("discriminate: face rows");
    if (pose_units.rows() != cfg.window * (cfg.joints - 1))
      throw ShapeMismatch("discriminate: pose rows");
    ad::Var l = face_enc_(face_deltas);
    ad::Var v = pose_enc_(pose_units);
    ad::Var e = ad::concat_cols({l, v});
    ad::Var pooled = ad::mean_rows(e);
    return ad::sigmoid(head1_(ad::leaky_relu(head0_(pooled), cfg.slope)));
  }

 private:
  ExpressionEncoder face_enc_, pose_enc_;
  nn::Linear head0_, head1_;
};

// Audio-to-lip-landmark network: log-mel spectrogram front-end, temporal CNN
// backbone, fully-connected head.
class PhonemePredictor {
 public:
  int window = kWindowFrames;
  int lip_landmarks = 20;
  int mel_channels = 26;
  int hidden = 32;
  double slope = 0.2;
  ad::ParamStore params;

  PhonemePredictor() = default;
  PhonemePredictor(int t, int l_lip, int hidden_dim, std::mt19937_64& rng)
      : window(t), lip_landmarks(l_lip), hidden(hidden_dim) {
    conv0_ = nn::TemporalConv(params, "ph.conv0", mel_channels, hidden, 3, rng);
    conv1_ = nn::TemporalConv(params, "ph.conv1", hidden, hidden, 3, rng);
    fc0_ = nn::Linear(params, "ph.fc0", hidden, hidden, rng);
    fc1_ = nn::Linear(params, "ph.fc1", hidden, 3 * l_lip, rng);
  }

  Mat frontend(const AudioClip& audio) const { return mel_spectrogram(audio, window, mel_channels); }

  // spec: T x mel_channels -> (T*L_lip) x 3.
  ad::Var predict(const ad::Var& spec) const {
    if (spec.cols() != mel_channels) throw ShapeMismatch("phoneme predict: spectrogram width");
    const int T = spec.rows();
    ad::Var h = ad::leaky_relu(conv0_(spec, T), slope);
    h = ad::leaky_relu(conv1_(h, T), slope);
    h = ad::leaky_relu(fc0_(h), slope);
    return ad::split_nodes(fc1_(h), lip_landmarks);
  }

  ad::Var predict(const AudioClip& audio) const {
    return predict(ad::Var::constant(frontend(audio)));
  }

 private:
  nn::TemporalConv conv0_, conv1_;
  nn::Linear fc0_, fc1_;
};

}  // namespace cosyn
