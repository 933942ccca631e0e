#pragma once

#include <Eigen/Geometry>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <nlohmann/json.hpp>
#include <set>
#include <vector>

#include "cosyn/sequence.hpp"

namespace cosyn {

// ----------------------------------------------------------------------------
// FABRIK

// Forward-and-backward reaching inverse kinematics on the skeleton tree with a
// fixed root. Targets pin selected joints (typically the wrists); chains run
// from the root to each targeted joint and shared joints are averaged between
// the backward passes (the multi-chain sub-base variant). Bone lengths are
// restored exactly by every forward pass. Unreachable targets straighten the
// chain toward the target.
inline Eigen::MatrixX3d fabrik_solve(const Eigen::MatrixX3d& joints, const Skeleton& skel,
                                     const std::map<int, Vec3>& targets, int max_iters = 20,
                                     double tol = -1.0) {
  skel.validate();
  require(joints.rows() == skel.joint_count, "fabrik_solve: joint count mismatch");
  if (targets.empty()) return joints;

  // Chains: root -> targeted joint, as joint index lists.
  std::vector<std::vector<int>> chains;
  double max_reach = 0;
  for (const auto& [end, target] : targets) {
    require(end > 0 && end < skel.joint_count, "fabrik_solve: target joint out of range");
    std::vector<int> chain;
    double reach = 0;
    for (int j = end; j != -1; j = skel.parent_index[j]) {
      chain.push_back(j);
      if (j != 0) reach += skel.bone_lengths[j - 1];
    }
    std::reverse(chain.begin(), chain.end());
    chains.push_back(chain);
    max_reach = std::max(max_reach, reach);
  }
  if (tol <= 0) tol = 1e-4 * max_reach;

  const Vec3 root = joints.row(0).transpose();
  Eigen::MatrixX3d p = joints;

  auto end_error = [&] {
    double worst = 0;
    for (const auto& [end, target] : targets)
      worst = std::max(worst, (p.row(end).transpose() - target).norm());
    return worst;
  };

  for (int iter = 0; iter < max_iters && end_error() > tol; ++iter) {
    // Backward: per chain, walk from the target toward the root; shared
    // joints take the mean of the per-chain candidates.
    std::map<int, Vec3> sum;
    std::map<int, int> cnt;
    for (size_t c = 0; c < chains.size(); ++c) {
      const auto& chain = chains[c];
      Vec3 pos = targets.at(chain.back());
      for (int k = static_cast<int>(chain.size()) - 1; k >= 0; --k) {
        const int j = chain[k];
        if (k < static_cast<int>(chain.size()) - 1) {
          const int child = chain[k + 1];
          const double len = skel.bone_lengths[child - 1];
          Vec3 dir = Vec3(p.row(j).transpose()) - pos;
          const double n = dir.norm();
          pos += len * (n > 1e-12 ? Vec3(dir / n) : Vec3::UnitX());
        }
        sum[j] = (sum.count(j) ? Vec3(sum[j] + pos) : pos);
        cnt[j] += 1;
      }
    }
    for (const auto& [j, s] : sum) p.row(j) = (s / cnt[j]).transpose();

    // Forward: re-anchor the root and restore bone lengths walking outward.
    // Joints on no chain ride along rigidly, keeping their input direction
    // from the parent. Parents precede children, so index order is tree order.
    std::set<int> on_chain;
    for (const auto& chain : chains) on_chain.insert(chain.begin(), chain.end());
    p.row(0) = root.transpose();
    for (int j = 1; j < skel.joint_count; ++j) {
      const int parent = skel.parent_index[j];
      const double len = skel.bone_lengths[j - 1];
      Vec3 dir = on_chain.count(j)
                     ? Vec3(Vec3(p.row(j).transpose()) - Vec3(p.row(parent).transpose()))
                     : Vec3(Vec3(joints.row(j).transpose()) - Vec3(joints.row(parent).transpose()));
      const double n = dir.norm();
      p.row(j) = (Vec3(p.row(parent).transpose()) + len * (n > 1e-12 ? Vec3(dir / n) : Vec3::UnitX()))
                     .transpose();
    }
  }
  return p;
}

// ----------------------------------------------------------------------------
// Positions -> rotations

struct JointRotationSequence {
  // rotations[t][j]: local rotation of the bone ending at joint j, relative
  // to the parent bone's frame; rotations[t][0] is the world-frame root.
  std::vector<std::vector<Eigen::Quaterniond>> rotations;
  double frame_rate = 15.0;

  int frames() const { return static_cast<int>(rotations.size()); }
  int joints() const { return rotations.empty() ? 0 : static_cast<int>(rotations[0].size()); }
};

namespace detail {

// Shortest-arc rotation taking `from` to `to` (both unit). The antiparallel
// case has no unique axis; it is resolved by a half-turn about the dominant
// perpendicular axis of `from`, or rejected when `allow_antiparallel` is off.
inline Eigen::Quaterniond shortest_arc(const Vec3& from, const Vec3& to, bool allow_antiparallel) {
  const double d = from.dot(to);
  if (d < -1.0 + 1e-9) {
    if (!allow_antiparallel)
      throw AmbiguousTwist("shortest_arc: antiparallel directions (180 degree rotation)");
    int smallest = 0;
    for (int a = 1; a < 3; ++a)
      if (std::abs(from(a)) < std::abs(from(smallest))) smallest = a;
    Vec3 axis = from.cross(Vec3::Unit(smallest)).normalized();
    return Eigen::Quaterniond(Eigen::AngleAxisd(M_PI, axis));
  }
  return Eigen::Quaterniond::FromTwoVectors(from, to).normalized();
}

}  // namespace detail

// Per-bone rest directions from a rest pose (one frame of joint positions).
inline Eigen::MatrixX3d rest_directions(const Eigen::MatrixX3d& rest, const Skeleton& skel) {
  require(rest.rows() == skel.joint_count, "rest_directions: joint count mismatch");
  Eigen::MatrixX3d dirs(skel.bones(), 3);
  for (int j = 1; j < skel.joint_count; ++j) {
    Vec3 d = rest.row(j).transpose() - rest.row(skel.parent_index[j]).transpose();
    const double n = d.norm();
    if (n <= 1e-9) throw ZeroBone("rest_directions: zero-length rest bone " + std::to_string(j - 1));
    dirs.row(j - 1) = (d / n).transpose();
  }
  return dirs;
}

// Minimal-twist local rotations reproducing the observed bone directions from
// the rest pose. The global rotation of bone j is built as shortest-arc from
// the rest direction, then expressed relative to the parent bone's global
// rotation; forward kinematics with these rotations reproduces the input
// positions to numerical precision.
inline JointRotationSequence positions_to_rotations(const PoseJointSequence& pose,
                                                    const Eigen::MatrixX3d& rest,
                                                    const Skeleton& skel,
                                                    bool allow_antiparallel = false) {
  skel.validate();
  require(pose.joints() == skel.joint_count, "positions_to_rotations: joint count mismatch");
  const Eigen::MatrixX3d rd = rest_directions(rest, skel);

  JointRotationSequence out;
  out.frame_rate = pose.frame_rate;
  out.rotations.resize(pose.frames());
  for (int t = 0; t < pose.frames(); ++t) {
    std::vector<Eigen::Quaterniond> global(skel.joint_count, Eigen::Quaterniond::Identity());
    auto& local = out.rotations[t];
    local.assign(skel.joint_count, Eigen::Quaterniond::Identity());
    for (int j = 1; j < skel.joint_count; ++j) {
      Vec3 d = pose.positions.at(t, j) - pose.positions.at(t, skel.parent_index[j]);
      const double n = d.norm();
      if (n <= 1e-9)
        throw ZeroBone("positions_to_rotations: zero bone at frame " + std::to_string(t));
      try {
        global[j] = detail::shortest_arc(Vec3(rd.row(j - 1).transpose()), d / n, allow_antiparallel);
      } catch (const AmbiguousTwist&) {
        throw AmbiguousTwist("positions_to_rotations: antiparallel bone " + std::to_string(j - 1) +
                             " at frame " + std::to_string(t));
      }
      const int parent = skel.parent_index[j];
      const Eigen::Quaterniond parent_global = parent == 0 ? Eigen::Quaterniond::Identity() : global[parent];
      local[j] = (parent_global.conjugate() * global[j]).normalized();
    }
  }
  return out;
}

// Forward kinematics from local rotations and a rest pose; inverse of
// positions_to_rotations.
inline PoseJointSequence rotations_to_positions(const JointRotationSequence& rots,
                                                const Eigen::MatrixX3d& rest, const Skeleton& skel) {
  skel.validate();
  require(rots.joints() == skel.joint_count || rots.frames() == 0,
          "rotations_to_positions: joint count mismatch");
  const Eigen::MatrixX3d rd = rest_directions(rest, skel);
  PoseJointSequence out;
  out.frame_rate = rots.frame_rate;
  out.positions = PointSeq(rots.frames(), skel.joint_count);
  for (int t = 0; t < rots.frames(); ++t) {
    std::vector<Eigen::Quaterniond> global(skel.joint_count, Eigen::Quaterniond::Identity());
    out.positions.set(t, 0, Vec3::Zero());
    for (int j = 1; j < skel.joint_count; ++j) {
      const int parent = skel.parent_index[j];
      const Eigen::Quaterniond parent_global = parent == 0 ? Eigen::Quaterniond::Identity() : global[parent];
      global[j] = (parent_global * rots.rotations[t][j]).normalized();
      const Vec3 dir = global[j] * Vec3(rd.row(j - 1).transpose());
      out.positions.set(t, j, out.positions.at(t, parent) + skel.bone_lengths[j - 1] * dir);
    }
  }
  return out;
}

// ----------------------------------------------------------------------------
// Lip superposition

// Landmark index sets of the lip region. `inner` landmarks are replaced by
// the offset phoneme prediction; `corners` stay with the generator and supply
// the expression offset.
struct LipLayout {
  std::vector<int> inner;
  std::vector<int> corners;

  void validate(int landmark_count) const {
    std::set<int> seen;
    for (int i : inner) {
      require(i >= 0 && i < landmark_count, "LipLayout: inner index out of range");
      seen.insert(i);
    }
    for (int c : corners) {
      require(c >= 0 && c < landmark_count, "LipLayout: corner index out of range");
      if (seen.count(c))
        throw IndexOverlap("LipLayout: corner " + std::to_string(c) + " also listed as inner");
    }
    require(!corners.empty(), "LipLayout: needs at least one corner");
  }

  // Phoneme-row order: ascending union of inner and corner indices.
  std::vector<int> phoneme_order() const {
    std::vector<int> all(inner);
    all.insert(all.end(), corners.begin(), corners.end());
    std::sort(all.begin(), all.end());
    return all;
  }
};

// 68-landmark layout: lips are 48..67 with the mouth corners at 48 and 54.
inline LipLayout default_lip_layout() {
  LipLayout l;
  l.corners = {48, 54};
  for (int i = 48; i < 68; ++i)
    if (i != 48 && i != 54) l.inner.push_back(i);
  return l;
}

struct CombinedFaceSequence {
  PointSeq landmarks;  // T x L x 3, mm
};

// Replaces the inner lip landmarks with the phoneme-predicted shape shifted
// by the generator's mean lip-corner offset from the reference face; corners
// and all non-lip landmarks pass through untouched.
inline CombinedFaceSequence superpose_lips(const PointSeq& face_syn, const ReferenceFace& ref,
                                           const PointSeq& lips_phoneme, const LipLayout& layout) {
  const int L = face_syn.points();
  layout.validate(L);
  require(ref.positions.rows() == L, "superpose_lips: reference landmark count");
  const auto order = layout.phoneme_order();
  require(lips_phoneme.points() == static_cast<int>(order.size()),
          "superpose_lips: phoneme landmark count");
  require(lips_phoneme.frames() == face_syn.frames(), "superpose_lips: frame count");

  std::map<int, int> phoneme_row;
  for (size_t r = 0; r < order.size(); ++r) phoneme_row[order[r]] = static_cast<int>(r);

  CombinedFaceSequence out{face_syn};
  for (int t = 0; t < face_syn.frames(); ++t) {
    Vec3 offset = Vec3::Zero();
    for (int c : layout.corners)
      offset += face_syn.at(t, c) - Vec3(ref.positions.row(c).transpose());
    offset /= static_cast<double>(layout.corners.size());
    for (int i : layout.inner)
      out.landmarks.set(t, i, lips_phoneme.at(t, phoneme_row.at(i)) + offset);
  }
  return out;
}

// ----------------------------------------------------------------------------
// Animation export

namespace detail {

inline std::string base64_encode(const std::vector<float>& data) {
  static const char* alphabet = "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";
  const auto* bytes = reinterpret_cast<const unsigned char*>(data.data());
  const size_t n = data.size() * sizeof(float);
  std::string out;
  out.reserve((n + 2) / 3 * 4);
  for (size_t i = 0; i < n; i += 3) {
    unsigned v = bytes[i] << 16;
    if (i + 1 < n) v |= bytes[i + 1] << 8;
    if (i + 2 < n) v |= bytes[i + 2];
    out.push_back(alphabet[(v >> 18) & 63]);
    out.push_back(alphabet[(v >> 12) & 63]);
    out.push_back(i + 1 < n ? alphabet[(v >> 6) & 63] : '=');
    out.push_back(i + 2 < n ? alphabet[v & 63] : '=');
  }
  return out;
}

inline std::vector<float> base64_decode(const std::string& s) {
  auto value = [](char c) -> int {
    if (c >= 'A' && c <= 'Z') return c - 'A';
    if (c >= 'a' && c <= 'z') return c - 'a' + 26;
    if (c >= '0' && c <= '9') return c - '0' + 52;
    if (c == '+') return 62;
    if (c == '/') return 63;
    return -1;
  };
  std::vector<unsigned char> bytes;
  bytes.reserve(s.size() / 4 * 3);
  unsigned v = 0;
  int bits = 0;
  for (char c : s) {
    const int d = value(c);
    if (d < 0) continue;  // '=' padding and whitespace
    v = (v << 6) | d;
    bits += 6;
    if (bits >= 8) {
      bits -= 8;
      bytes.push_back(static_cast<unsigned char>((v >> bits) & 0xff));
    }
  }
  require(bytes.size() % sizeof(float) == 0, "base64_decode: truncated float payload");
  std::vector<float> out(bytes.size() / sizeof(float));
  std::memcpy(out.data(), bytes.data(), bytes.size());
  return out;
}

}  // namespace detail

struct AnimationDocument {
  double frame_rate = 15.0;
  Skeleton skeleton;
  JointRotationSequence rotations;
  PointSeq landmarks;
};

// Renderer-agnostic JSON interchange: quaternions as (w,x,y,z) number arrays,
// landmark positions as one base64-encoded float32 buffer in frame-major
// (t, landmark, xyz) order.
inline void export_animation(const JointRotationSequence& rots, const CombinedFaceSequence& face,
                             const Skeleton& skel, const std::filesystem::path& path) {
  nlohmann::json doc;
  doc["frame_rate"] = rots.frame_rate;
  doc["frame_count"] = rots.frames();
  doc["skeleton"] = {{"parent_index", skel.parent_index}, {"bone_lengths", skel.bone_lengths}};

  nlohmann::json frames = nlohmann::json::array();
  for (int t = 0; t < rots.frames(); ++t) {
    nlohmann::json frame = nlohmann::json::array();
    for (const auto& q : rots.rotations[t]) frame.push_back({q.w(), q.x(), q.y(), q.z()});
    frames.push_back(frame);
  }
  doc["rotations"] = frames;

  std::vector<float> flat;
  flat.reserve(static_cast<size_t>(face.landmarks.data.size()));
  for (int t = 0; t < face.landmarks.frames(); ++t)
    for (int c = 0; c < face.landmarks.data.cols(); ++c)
      flat.push_back(static_cast<float>(face.landmarks.data(t, c)));
  doc["landmark_count"] = face.landmarks.points();
  doc["landmarks"] = detail::base64_encode(flat);

  std::ofstream f(path);
  if (!f) throw IoError("export_animation: cannot open " + path.string());
  f << doc.dump(1) << '\n';
  if (!f) throw IoError("export_animation: write failed");
}

inline AnimationDocument import_animation(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw IoError("import_animation: cannot open " + path.string());
  nlohmann::json doc;
  try {
    f >> doc;
  } catch (const nlohmann::json::exception& e) {
    throw IoError("import_animation: bad JSON: " + std::string(e.what()));
  }

  AnimationDocument out;
  out.frame_rate = doc.at("frame_rate").get<double>();
  out.skeleton.parent_index = doc.at("skeleton").at("parent_index").get<std::vector<int>>();
  out.skeleton.bone_lengths = doc.at("skeleton").at("bone_lengths").get<std::vector<double>>();
  out.skeleton.joint_count = static_cast<int>(out.skeleton.parent_index.size());

  out.rotations.frame_rate = out.frame_rate;
  for (const auto& frame : doc.at("rotations")) {
    std::vector<Eigen::Quaterniond> qs;
    for (const auto& q : frame)
      qs.emplace_back(q.at(0).get<double>(), q.at(1).get<double>(), q.at(2).get<double>(),
                      q.at(3).get<double>());
    out.rotations.rotations.push_back(std::move(qs));
  }

  const int L = doc.at("landmark_count").get<int>();
  const auto flat = detail::base64_decode(doc.at("landmarks").get<std::string>());
  const int T = doc.at("frame_count").get<int>();
  require(static_cast<int>(flat.size()) == T * 3 * L, "import_animation: landmark payload size");
  out.landmarks = PointSeq(T, L);
  for (int t = 0; t < T; ++t)
    for (int c = 0; c < 3 * L; ++c) out.landmarks.data(t, c) = flat[static_cast<size_t>(t) * 3 * L + c];
  return out;
}

}  // namespace cosyn
