#pragma once

#include <algorithm>
#include <set>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "cosyn/sequence.hpp"

namespace cosyn {

struct ComponentPartition {
  std::vector<int> component_of;  // node -> component id
  int component_count = 0;

  void validate(int node_count) const {
    require(static_cast<int>(component_of.size()) == node_count, "partition: wrong node count");
    std::vector<int> sizes(component_count, 0);
    for (int c : component_of) {
      require(c >= 0 && c < component_count, "partition: component id out of range");
      ++sizes[c];
    }
    for (int s : sizes)
      if (s == 0) throw EmptyComponent("partition: empty component");
  }

  std::vector<std::vector<int>> members() const {
    std::vector<std::vector<int>> m(component_count);
    for (int n = 0; n < static_cast<int>(component_of.size()); ++n) m[component_of[n]].push_back(n);
    return m;
  }
};

struct CollationPlan {
  std::vector<std::vector<int>> component_nodes;  // ordered node lists per component
  int pad_to = 0;                                 // max component size

  static CollationPlan from_partition(const ComponentPartition& p) {
    CollationPlan plan;
    plan.component_nodes = p.members();
    for (const auto& c : plan.component_nodes)
      plan.pad_to = std::max(plan.pad_to, static_cast<int>(c.size()));
    return plan;
  }

  int components() const { return static_cast<int>(component_nodes.size()); }
  int total_nodes() const {
    int n = 0;
    for (const auto& c : component_nodes) n += static_cast<int>(c.size());
    return n;
  }
};

struct AcGraph {
  int node_count = 0;
  std::vector<std::pair<int, int>> spatial_edges;  // undirected, i < j
  int temporal_window = 0;
  Mat adjacency;  // D^{-1/2} (A + I) D^{-1/2}

  void finalize() {
    Mat a = Mat::Identity(node_count, node_count);
    for (auto [i, j] : spatial_edges) {
      a(i, j) = 1.0;
      a(j, i) = 1.0;
    }
    Vec d = a.rowwise().sum();
    Vec dinv = d.array().rsqrt();
    adjacency = dinv.asDiagonal() * a * dinv.asDiagonal();
  }
};

namespace detail {

inline void add_edge(std::set<std::pair<int, int>>& edges, int i, int j) {
  if (i == j) return;
  edges.insert({std::min(i, j), std::max(i, j)});
}

}  // namespace detail

// Spatial edges: all intra-component pairs plus, per component pair, the
// k nearest cross-component landmark pairs on the template geometry.
inline AcGraph build_face_landmark_graph(const ReferenceFace& tmpl, const ComponentPartition& partition,
                                         int temporal_window = 2, int cross_pairs = 1) {
  const int L = tmpl.landmarks();
  partition.validate(L);
  std::set<std::pair<int, int>> edges;
  const auto members = partition.members();

  for (const auto& comp : members)
    for (size_t a = 0; a < comp.size(); ++a)
      for (size_t b = a + 1; b < comp.size(); ++b) detail::add_edge(edges, comp[a], comp[b]);

  for (int ca = 0; ca < partition.component_count; ++ca) {
    for (int cb = ca + 1; cb < partition.component_count; ++cb) {
      std::vector<std::pair<double, std::pair<int, int>>> cand;
      for (int i : members[ca])
        for (int j : members[cb])
          cand.push_back({(tmpl.positions.row(i) - tmpl.positions.row(j)).norm(), {i, j}});
      std::sort(cand.begin(), cand.end());
      for (int k = 0; k < cross_pairs && k < static_cast<int>(cand.size()); ++k)
        detail::add_edge(edges, cand[k].second.first, cand[k].second.second);
    }
  }

  AcGraph g;
  g.node_count = L;
  g.spatial_edges.assign(edges.begin(), edges.end());
  g.temporal_window = temporal_window;
  g.finalize();
  return g;
}

// Fully connected graph over the anatomical components of the face.
inline AcGraph build_face_anatomy_graph(const ComponentPartition& partition, int temporal_window = 2) {
  require(partition.component_count >= 1, "anatomy graph: need at least one component");
  AcGraph g;
  g.node_count = partition.component_count;
  for (int i = 0; i < g.node_count; ++i)
    for (int j = i + 1; j < g.node_count; ++j) g.spatial_edges.push_back({i, j});
  g.temporal_window = temporal_window;
  g.finalize();
  return g;
}

// Nodes are bones; bones within distance 2 in the bone-incidence graph are adjacent.
inline AcGraph build_pose_graph(const Skeleton& skel, int temporal_window = 2) {
  skel.validate();
  const int B = skel.bones();
  auto joints_of = [&](int b) { return std::pair<int, int>{skel.parent_index[b + 1], b + 1}; };
  auto share_joint = [&](int a, int b) {
    auto [a0, a1] = joints_of(a);
    auto [b0, b1] = joints_of(b);
    return a0 == b0 || a0 == b1 || a1 == b0 || a1 == b1;
  };

  std::set<std::pair<int, int>> edges;
  for (int a = 0; a < B; ++a) {
    for (int b = a + 1; b < B; ++b) {
      bool adjacent = share_joint(a, b);
      for (int c = 0; !adjacent && c < B; ++c)
        adjacent = c != a && c != b && share_joint(a, c) && share_joint(c, b);
      if (adjacent) detail::add_edge(edges, a, b);
    }
  }

  AcGraph g;
  g.node_count = B;
  g.spatial_edges.assign(edges.begin(), edges.end());
  g.temporal_window = temporal_window;
  g.finalize();
  return g;
}

// Three components: torso and both arms; the arms attach to the torso only.
inline AcGraph build_pose_anatomy_graph(int temporal_window = 2) {
  AcGraph g;
  g.node_count = 3;
  g.spatial_edges = {{0, 1}, {0, 2}};  // node 0 = torso
  g.temporal_window = temporal_window;
  g.finalize();
  return g;
}

// features: (T*N) x D stacked frame-major -> (T*C) x (pad_to*D), members
// concatenated in plan order and zero-padded.
inline Mat collate(const Mat& features, int frames, const CollationPlan& plan) {
  const int N = plan.total_nodes();
  require(static_cast<int>(features.rows()) == frames * N, "collate: row count mismatch");
  const int D = static_cast<int>(features.cols());
  const int C = plan.components();
  Mat out = Mat::Zero(frames * C, plan.pad_to * D);
  for (int t = 0; t < frames; ++t)
    for (int c = 0; c < C; ++c)
      for (size_t m = 0; m < plan.component_nodes[c].size(); ++m)
        out.block(t * C + c, static_cast<int>(m) * D, 1, D) =
            features.row(t * N + plan.component_nodes[c][m]);
  return out;
}

// Inverse scatter of collate (padding columns are dropped).
inline Mat decollate(const Mat& collated, int frames, const CollationPlan& plan, int feature_dim) {
  const int C = plan.components();
  require(static_cast<int>(collated.rows()) == frames * C, "decollate: row count mismatch");
  Mat out = Mat::Zero(frames * plan.total_nodes(), feature_dim);
  for (int t = 0; t < frames; ++t)
    for (int c = 0; c < C; ++c)
      for (size_t m = 0; m < plan.component_nodes[c].size(); ++m)
        out.row(t * plan.total_nodes() + plan.component_nodes[c][m]) =
            collated.block(t * C + c, static_cast<int>(m) * feature_dim, 1, feature_dim);
  return out;
}

inline nlohmann::json graph_to_json(const AcGraph& g, const ComponentPartition* partition = nullptr) {
  nlohmann::json j;
  j["node_count"] = g.node_count;
  j["temporal_window"] = g.temporal_window;
  j["spatial_edges"] = nlohmann::json::array();
  for (auto [a, b] : g.spatial_edges) j["spatial_edges"].push_back({a, b});
  if (partition) {
    j["component_of"] = partition->component_of;
    j["component_count"] = partition->component_count;
  }
  return j;
}

// Default partition for the 68-landmark sparse layout: eyes+brows, nose,
// lips, jaw contour.
inline ComponentPartition default_face_partition(int landmarks = 68) {
  ComponentPartition p;
  p.component_count = 4;
  p.component_of.resize(landmarks);
  if (landmarks == 68) {
    for (int i = 0; i < 68; ++i) {
      if (i < 17)
        p.component_of[i] = 3;  // jaw contour
      else if (i < 27)
        p.component_of[i] = 0;  // brows -> eyes component
      else if (i < 36)
        p.component_of[i] = 1;  // nose
      else if (i < 48)
        p.component_of[i] = 0;  // eyes
      else
        p.component_of[i] = 2;  // lips
    }
  } else {
    // Evenly split unknown layouts into 4 contiguous runs.
    for (int i = 0; i < landmarks; ++i)
      p.component_of[i] = std::min(3, i * 4 / std::max(1, landmarks));
  }
  return p;
}

// Torso = trunk bones (spine/neck/head); each arm = the chain from its leaf
// back to the nearest branching joint. The two longest leaf chains are taken
// as the arms; everything else is torso.
inline ComponentPartition default_pose_partition(const Skeleton& skel) {
  skel.validate();
  ComponentPartition p;
  p.component_count = 3;
  p.component_of.resize(skel.bones(), 0);

  std::vector<int> child_count(skel.joint_count, 0);
  for (int j = 1; j < skel.joint_count; ++j) ++child_count[skel.parent_index[j]];

  std::vector<std::vector<int>> chains;  // bones from leaf up to nearest branch joint
  for (int j = 1; j < skel.joint_count; ++j) {
    if (child_count[j] != 0) continue;
    std::vector<int> bones;
    int cur = j;
    while (true) {
      bones.push_back(cur - 1);
      const int par = skel.parent_index[cur];
      if (par <= 0 || child_count[par] > 1) break;
      cur = par;
    }
    chains.push_back(std::move(bones));
  }

  if (chains.size() < 3) {
    // Chain-like skeleton: fall back to contiguous thirds over the bones.
    for (int b = 0; b < skel.bones(); ++b)
      p.component_of[b] = std::min(2, b * 3 / std::max(1, skel.bones()));
    return p;
  }

  std::stable_sort(chains.begin(), chains.end(),
                   [](const auto& a, const auto& b) { return a.size() > b.size(); });
  for (int arm = 0; arm < 2; ++arm)
    for (int b : chains[arm]) p.component_of[b] = arm + 1;
  return p;
}

}  // namespace cosyn
