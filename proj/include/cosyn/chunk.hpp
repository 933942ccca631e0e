#pragma once

#include <vector>

#include "cosyn/sequence.hpp"

namespace cosyn {

inline constexpr int kWindowFrames = 34;
inline constexpr int kSeedFrames = 4;

// Cuts a sample into fixed-size windows at the given stride; the trailing
// remainder shorter than a window is dropped.
inline std::vector<MotionSample> chunk(const MotionSample& sample, int window = kWindowFrames,
                                       int seed = kSeedFrames, int stride = 10) {
  require(stride >= 1, "chunk: stride must be positive");
  require(window > seed, "chunk: window must exceed seed length");
  const int T = sample.face.frames();
  require(sample.pose.frames() == T, "chunk: face/pose frame counts differ");
  if (T < window) throw TooShort("chunk: sample shorter than one window");

  const double fps = sample.face.frame_rate;
  const double samples_per_frame = double(sample.audio.sample_rate) / fps;

  std::vector<MotionSample> out;
  for (int off = 0; off + window <= T; off += stride) {
    MotionSample w;
    w.speaker = sample.speaker;
    w.speaker_count = sample.speaker_count;
    w.seed_frames = seed;
    w.face.frame_rate = fps;
    w.pose.frame_rate = sample.pose.frame_rate;
    w.face.positions = PointSeq(sample.face.positions.data.middleRows(off, window));
    w.pose.positions = PointSeq(sample.pose.positions.data.middleRows(off, window));

    w.audio.sample_rate = sample.audio.sample_rate;
    const auto s0 = static_cast<size_t>(std::llround(off * samples_per_frame));
    const auto s1 = static_cast<size_t>(std::llround((off + window) * samples_per_frame));
    for (size_t s = s0; s < s1 && s < sample.audio.samples.size(); ++s)
      w.audio.samples.push_back(sample.audio.samples[s]);

    for (const auto& ws : sample.transcript) {
      if (ws.start_frame < 0) continue;
      if (ws.end_frame <= off || ws.start_frame >= off + window) continue;
      WordSpan local = ws;
      local.start_frame = std::max(0, ws.start_frame - off);
      local.end_frame = std::min(window, ws.end_frame - off);
      w.transcript.push_back(local);
    }
    out.push_back(std::move(w));
  }
  return out;
}

}  // namespace cosyn
