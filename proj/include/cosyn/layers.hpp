#pragma once

#include <string>
#include <vector>

#include "cosyn/autodiff.hpp"
#include "cosyn/graphs.hpp"

namespace cosyn::nn {

using ad::ParamStore;
using ad::Var;

struct Linear {
  Var w, b;

  Linear() = default;
  Linear(ParamStore& ps, const std::string& name, int in, int out, std::mt19937_64& rng) {
    w = ps.add(name + ".w", ad::glorot(in, out, rng, in, out));
    b = ps.add(name + ".b", Mat::Zero(1, out));
  }

  Var operator()(const Var& x) const { return ad::add_bias(ad::matmul(x, w), b); }
};

namespace detail {

// y[t,n] = sum_k x[t+k-pad, n] W_k + b on a (frames*nodes) x Din stack.
inline Var temporal_conv_op(const Var& x, int frames, int nodes, const std::vector<Var>& ws,
                            const Var& b, int pad) {
  const int K = static_cast<int>(ws.size());
  require(x.rows() == frames * nodes, "temporal_conv: row mismatch");
  const int dout = ws[0].cols();

  std::vector<ad::NodeP> parents{x.node()};
  for (const auto& w : ws) parents.push_back(w.node());
  parents.push_back(b.node());

  Mat v = Mat::Zero(frames * nodes, dout);
  for (int k = 0; k < K; ++k) {
    const Mat& wk = ws[k].val();
    for (int t = 0; t < frames; ++t) {
      const int src = t + k - pad;
      if (src < 0 || src >= frames) continue;
      v.middleRows(t * nodes, nodes) += x.val().middleRows(src * nodes, nodes) * wk;
    }
  }
  v.rowwise() += Eigen::RowVectorXd(b.val().row(0));

  auto px = x.node();
  auto pb = b.node();
  std::vector<ad::NodeP> pws;
  for (const auto& w : ws) pws.push_back(w.node());

  return Var(std::make_shared<ad::Node>(ad::Node{
      std::move(v), {}, false, std::move(parents), [px, pws, pb, frames, nodes, K, pad](ad::Node& n) {
        px->ensure_grad();
        pb->ensure_grad();
        for (auto& pw : pws) pw->ensure_grad();
        pb->grad.row(0) += n.grad.colwise().sum();
        for (int k = 0; k < K; ++k) {
          for (int t = 0; t < frames; ++t) {
            const int src = t + k - pad;
            if (src < 0 || src >= frames) continue;
            const auto g = n.grad.middleRows(t * nodes, nodes);
            pws[k]->grad += px->val.middleRows(src * nodes, nodes).transpose() * g;
            px->grad.middleRows(src * nodes, nodes) += g * pws[k]->val.transpose();
          }
        }
      }}));
}

// Transposed conv along time: y[t] = sum over (i,k) with i*stride + k - pad == t.
inline Var temporal_tconv_op(const Var& x, int frames_in, int frames_out, int stride, int pad,
                             const std::vector<Var>& ws, const Var& b) {
  const int K = static_cast<int>(ws.size());
  require(x.rows() == frames_in, "temporal_tconv: row mismatch");
  const int dout = ws[0].cols();

  std::vector<ad::NodeP> parents{x.node()};
  for (const auto& w : ws) parents.push_back(w.node());
  parents.push_back(b.node());

  Mat v = Mat::Zero(frames_out, dout);
  for (int i = 0; i < frames_in; ++i) {
    for (int k = 0; k < K; ++k) {
      const int t = i * stride + k - pad;
      if (t < 0 || t >= frames_out) continue;
      v.row(t) += x.val().row(i) * ws[k].val();
    }
  }
  v.rowwise() += Eigen::RowVectorXd(b.val().row(0));

  auto px = x.node();
  auto pb = b.node();
  std::vector<ad::NodeP> pws;
  for (const auto& w : ws) pws.push_back(w.node());

  return Var(std::make_shared<ad::Node>(ad::Node{
      std::move(v), {}, false, std::move(parents),
      [px, pws, pb, frames_in, frames_out, stride, pad, K](ad::Node& n) {
        px->ensure_grad();
        pb->ensure_grad();
        for (auto& pw : pws) pw->ensure_grad();
        pb->grad.row(0) += n.grad.colwise().sum();
        for (int i = 0; i < frames_in; ++i) {
          for (int k = 0; k < K; ++k) {
            const int t = i * stride + k - pad;
            if (t < 0 || t >= frames_out) continue;
            pws[k]->grad += px->val.row(i).transpose() * n.grad.row(t);
            px->grad.row(i) += n.grad.row(t) * pws[k]->val.transpose();
          }
        }
      }}));
}

}  // namespace detail

struct TemporalConv {
  std::vector<Var> w;
  Var b;
  int kernel = 3;

  TemporalConv() = default;
  TemporalConv(ParamStore& ps, const std::string& name, int in, int out, int kernel_size,
               std::mt19937_64& rng)
      : kernel(kernel_size) {
    for (int k = 0; k < kernel_size; ++k)
      w.push_back(ps.add(name + ".w" + std::to_string(k),
                         ad::glorot(in, out, rng, in * kernel_size, out)));
    b = ps.add(name + ".b", Mat::Zero(1, out));
  }

  Var operator()(const Var& x, int frames, int nodes = 1) const {
    return detail::temporal_conv_op(x, frames, nodes, w, b, kernel / 2);
  }
};

// Learned temporal upsampling from frames_in to frames_out.
struct TemporalUpsample {
  std::vector<Var> w;
  Var b;
  int frames_in = 0, frames_out = 0, stride = 1, pad = 0;

  TemporalUpsample() = default;
  TemporalUpsample(ParamStore& ps, const std::string& name, int in, int out, int t_in, int t_out,
                   std::mt19937_64& rng)
      : frames_in(t_in), frames_out(t_out) {
    stride = std::max(1, t_out / t_in);
    pad = stride / 2;
    const int kernel = t_out - (t_in - 1) * stride + 2 * pad;
    require(kernel >= stride, "TemporalUpsample: kernel cannot cover stride");
    for (int k = 0; k < kernel; ++k)
      w.push_back(ps.add(name + ".w" + std::to_string(k), ad::glorot(in, out, rng, in * kernel, out)));
    b = ps.add(name + ".b", Mat::Zero(1, out));
  }

  Var operator()(const Var& x) const {
    return detail::temporal_tconv_op(x, frames_in, frames_out, stride, pad, w, b);
  }
};

// One spatial-temporal graph convolution block: adjacency mix + channel map,
// then a per-node temporal conv over +-temporal_window frames, leaky rectifier.
struct StGraphConv {
  Var w_spatial, b_spatial;
  TemporalConv temporal;
  Mat adjacency;
  int nodes = 0;
  double slope = 0.2;

  StGraphConv() = default;
  StGraphConv(ParamStore& ps, const std::string& name, const AcGraph& g, int in, int out,
              std::mt19937_64& rng) {
    adjacency = g.adjacency;
    nodes = g.node_count;
    w_spatial = ps.add(name + ".ws", ad::glorot(in, out, rng, in, out));
    b_spatial = ps.add(name + ".bs", Mat::Zero(1, out));
    const int k = 2 * g.temporal_window + 1;
    if (k > 1) temporal = TemporalConv(ps, name + ".t", out, out, k, rng);
  }

  Var operator()(const Var& x, int frames) const {
    Var y = ad::add_bias(ad::matmul(ad::graph_mix(adjacency, x, frames), w_spatial), b_spatial);
    y = ad::leaky_relu(y, slope);
    if (!temporal.w.empty()) y = ad::leaky_relu(temporal(y, frames, nodes), slope);
    return y;
  }
};

// Differentiable collation per CollationPlan: (T*N) x D -> (T*C) x (pad*D).
inline Var collate_var(const Var& x, int frames, const CollationPlan& plan) {
  const int N = plan.total_nodes();
  require(x.rows() == frames * N, "collate_var: row mismatch");
  const int D = x.cols();
  const int C = plan.components();
  auto px = x.node();
  Mat v = Mat::Zero(frames * C, plan.pad_to * D);
  for (int t = 0; t < frames; ++t)
    for (int c = 0; c < C; ++c)
      for (size_t m = 0; m < plan.component_nodes[c].size(); ++m)
        v.block(t * C + c, static_cast<int>(m) * D, 1, D) =
            x.val().row(t * N + plan.component_nodes[c][m]);
  return Var(std::make_shared<ad::Node>(
      ad::Node{std::move(v), {}, false, {px}, [px, frames, plan, N, C, D](ad::Node& n) {
                 px->ensure_grad();
                 for (int t = 0; t < frames; ++t)
                   for (int c = 0; c < C; ++c)
                     for (size_t m = 0; m < plan.component_nodes[c].size(); ++m)
                       px->grad.row(t * N + plan.component_nodes[c][m]) +=
                           n.grad.block(t * C + c, static_cast<int>(m) * D, 1, D);
               }}));
}

}  // namespace cosyn::nn
