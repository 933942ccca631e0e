#pragma once

#include <functional>
#include <map>
#include <memory>
#include <random>
#include <unordered_set>
#include <vector>

#include "cosyn/common.hpp"

// Small reverse-mode autodiff over dense double matrices. Graphs are built
// eagerly through shared nodes and freed when the last Var goes out of scope;
// parameters are long-lived leaves reused across graphs.
namespace cosyn::ad {

struct Node;
using NodeP = std::shared_ptr<Node>;

struct Node {
  Mat val;
  Mat grad;
  bool is_param = false;
  std::vector<NodeP> parents;
  std::function<void(Node&)> backprop;  // reads this->grad, accumulates into parents

  void ensure_grad() {
    if (grad.rows() != val.rows() || grad.cols() != val.cols())
      grad = Mat::Zero(val.rows(), val.cols());
  }
};

class Var {
 public:
  Var() = default;
  explicit Var(NodeP n) : n_(std::move(n)) {}

  static Var constant(Mat m) {
    auto n = std::make_shared<Node>();
    n->val = std::move(m);
    return Var(n);
  }
  static Var param(Mat m) {
    auto n = std::make_shared<Node>();
    n->val = std::move(m);
    n->is_param = true;
    return Var(n);
  }

  bool valid() const { return n_ != nullptr; }
  const Mat& val() const { return n_->val; }
  Mat& mutable_val() { return n_->val; }
  const Mat& grad() const { return n_->grad; }
  Mat& mutable_grad() {
    n_->ensure_grad();
    return n_->grad;
  }
  int rows() const { return static_cast<int>(n_->val.rows()); }
  int cols() const { return static_cast<int>(n_->val.cols()); }
  double scalar() const { return n_->val(0, 0); }
  NodeP node() const { return n_; }

 private:
  NodeP n_;
};

namespace detail {

inline void topo(const NodeP& n, std::unordered_set<Node*>& seen, std::vector<NodeP>& order) {
  if (!n || seen.count(n.get())) return;
  seen.insert(n.get());
  for (const auto& p : n->parents) topo(p, seen, order);
  order.push_back(n);
}

}  // namespace detail

// Backpropagates from a scalar root. Grads of every reachable node (including
// parameters) are zeroed first, so each backward() starts fresh.
inline void backward(const Var& root) {
  require(root.rows() == 1 && root.cols() == 1, "backward: root must be scalar");
  std::unordered_set<Node*> seen;
  std::vector<NodeP> order;
  detail::topo(root.node(), seen, order);
  for (auto& n : order) {
    n->ensure_grad();
    n->grad.setZero();
  }
  root.node()->grad(0, 0) = 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it)
    if ((*it)->backprop) (*it)->backprop(**it);
}

namespace detail {

inline Var make(Mat val, std::vector<NodeP> parents, std::function<void(Node&)> back) {
  auto n = std::make_shared<Node>();
  n->val = std::move(val);
  n->parents = std::move(parents);
  n->backprop = std::move(back);
  return Var(n);
}

}  // namespace detail

inline Var add(const Var& a, const Var& b) {
  require(a.rows() == b.rows() && a.cols() == b.cols(), "add: shape mismatch");
  auto pa = a.node(), pb = b.node();
  return detail::make(a.val() + b.val(), {pa, pb}, [pa, pb](Node& n) {
    pa->ensure_grad();
    pb->ensure_grad();
    pa->grad += n.grad;
    pb->grad += n.grad;
  });
}

inline Var sub(const Var& a, const Var& b) {
  require(a.rows() == b.rows() && a.cols() == b.cols(), "sub: shape mismatch");
  auto pa = a.node(), pb = b.node();
  return detail::make(a.val() - b.val(), {pa, pb}, [pa, pb](Node& n) {
    pa->ensure_grad();
    pb->ensure_grad();
    pa->grad += n.grad;
    pb->grad -= n.grad;
  });
}

inline Var scale(const Var& a, double s) {
  auto pa = a.node();
  return detail::make(a.val() * s, {pa}, [pa, s](Node& n) {
    pa->ensure_grad();
    pa->grad += s * n.grad;
  });
}

inline Var hadamard(const Var& a, const Var& b) {
  require(a.rows() == b.rows() && a.cols() == b.cols(), "hadamard: shape mismatch");
  auto pa = a.node(), pb = b.node();
  return detail::make(a.val().cwiseProduct(b.val()), {pa, pb}, [pa, pb](Node& n) {
    pa->ensure_grad();
    pb->ensure_grad();
    pa->grad += n.grad.cwiseProduct(pb->val);
    pb->grad += n.grad.cwiseProduct(pa->val);
  });
}

inline Var cmul(const Var& a, const Mat& c) {
  require(a.rows() == c.rows() && a.cols() == c.cols(), "cmul: shape mismatch");
  auto pa = a.node();
  return detail::make(a.val().cwiseProduct(c), {pa}, [pa, c](Node& n) {
    pa->ensure_grad();
    pa->grad += n.grad.cwiseProduct(c);
  });
}

inline Var matmul(const Var& a, const Var& b) {
  require(a.cols() == b.rows(), "matmul: inner dimension mismatch");
  auto pa = a.node(), pb = b.node();
  return detail::make(a.val() * b.val(), {pa, pb}, [pa, pb](Node& n) {
    pa->ensure_grad();
    pb->ensure_grad();
    pa->grad += n.grad * pb->val.transpose();
    pb->grad += pa->val.transpose() * n.grad;
  });
}

// Fixed linear map on the left (e.g. a graph adjacency or interpolation matrix).
inline Var lmul_const(const Mat& a, const Var& x) {
  require(static_cast<int>(a.cols()) == x.rows(), "lmul_const: shape mismatch");
  auto px = x.node();
  return detail::make(a * x.val(), {px}, [px, a](Node& n) {
    px->ensure_grad();
    px->grad += a.transpose() * n.grad;
  });
}

// Adds a 1 x C bias row to every row of X.
inline Var add_bias(const Var& x, const Var& b) {
  require(b.rows() == 1 && b.cols() == x.cols(), "add_bias: bias must be 1 x cols");
  auto px = x.node(), pb = b.node();
  return detail::make(x.val().rowwise() + Eigen::RowVectorXd(b.val().row(0)), {px, pb}, [px, pb](Node& n) {
    px->ensure_grad();
    pb->ensure_grad();
    px->grad += n.grad;
    pb->grad.row(0) += n.grad.colwise().sum();
  });
}

inline Var concat_cols(const std::vector<Var>& xs) {
  require(!xs.empty(), "concat_cols: empty");
  const int rows = xs[0].rows();
  int cols = 0;
  std::vector<NodeP> parents;
  for (const auto& x : xs) {
    require(x.rows() == rows, "concat_cols: row mismatch");
    cols += x.cols();
    parents.push_back(x.node());
  }
  Mat out(rows, cols);
  int off = 0;
  for (const auto& x : xs) {
    out.middleCols(off, x.cols()) = x.val();
    off += x.cols();
  }
  return detail::make(std::move(out), parents, [parents](Node& n) {
    int o = 0;
    for (const auto& p : parents) {
      p->ensure_grad();
      p->grad += n.grad.middleCols(o, p->val.cols());
      o += static_cast<int>(p->val.cols());
    }
  });
}

inline Var slice_cols(const Var& x, int start, int count) {
  auto px = x.node();
  return detail::make(x.val().middleCols(start, count), {px}, [px, start, count](Node& n) {
    px->ensure_grad();
    px->grad.middleCols(start, count) += n.grad;
  });
}

inline Var repeat_row(const Var& x, int times) {
  require(x.rows() == 1, "repeat_row: input must be a single row");
  auto px = x.node();
  return detail::make(x.val().replicate(times, 1), {px}, [px](Node& n) {
    px->ensure_grad();
    px->grad.row(0) += n.grad.colwise().sum();
  });
}

inline Var leaky_relu(const Var& x, double slope = 0.2) {
  auto px = x.node();
  Mat v = x.val().unaryExpr([slope](double a) { return a > 0 ? a : slope * a; });
  return detail::make(std::move(v), {px}, [px, slope](Node& n) {
    px->ensure_grad();
    px->grad += n.grad.cwiseProduct(
        px->val.unaryExpr([slope](double a) { return a > 0 ? 1.0 : slope; }));
  });
}

inline Var sigmoid(const Var& x) {
  auto px = x.node();
  Mat v = x.val().unaryExpr([](double a) { return 1.0 / (1.0 + std::exp(-a)); });
  Mat vc = v;
  return detail::make(std::move(v), {px}, [px, vc](Node& n) {
    px->ensure_grad();
    px->grad += n.grad.cwiseProduct(vc.cwiseProduct(Mat::Ones(vc.rows(), vc.cols()) - vc));
  });
}

inline Var softplus(const Var& x) {
  auto px = x.node();
  auto sp = [](double a) { return a > 30 ? a : std::log1p(std::exp(a)); };
  Mat v = x.val().unaryExpr(sp);
  return detail::make(std::move(v), {px}, [px](Node& n) {
    px->ensure_grad();
    px->grad += n.grad.cwiseProduct(
        px->val.unaryExpr([](double a) { return 1.0 / (1.0 + std::exp(-a)); }));
  });
}

inline Var log(const Var& x) {
  auto px = x.node();
  return detail::make(x.val().array().log().matrix(), {px}, [px](Node& n) {
    px->ensure_grad();
    px->grad += n.grad.cwiseQuotient(px->val);
  });
}

inline Var sqrt(const Var& x) {
  auto px = x.node();
  Mat v = x.val().array().sqrt().matrix();
  Mat vc = v;
  return detail::make(std::move(v), {px}, [px, vc](Node& n) {
    px->ensure_grad();
    px->grad += n.grad.cwiseQuotient(2.0 * vc);
  });
}

inline Var sum(const Var& x) {
  auto px = x.node();
  Mat v(1, 1);
  v(0, 0) = x.val().sum();
  return detail::make(std::move(v), {px}, [px](Node& n) {
    px->ensure_grad();
    px->grad.array() += n.grad(0, 0);
  });
}

inline Var mean(const Var& x) { return scale(sum(x), 1.0 / (x.rows() * double(x.cols()))); }

// Sum of absolute values (subgradient 0 at 0).
inline Var abs_sum(const Var& x) {
  auto px = x.node();
  Mat v(1, 1);
  v(0, 0) = x.val().array().abs().sum();
  return detail::make(std::move(v), {px}, [px](Node& n) {
    px->ensure_grad();
    px->grad += n.grad(0, 0) *
                px->val.unaryExpr([](double a) { return a > 0 ? 1.0 : (a < 0 ? -1.0 : 0.0); });
  });
}

// Mean over columns in each row, summed over rows (per-frame mean-l1 reduction).
inline Var l1(const Var& a, const Var& b) { return scale(abs_sum(sub(a, b)), 1.0 / a.cols()); }

// Column-wise mean over rows -> 1 x C (temporal pooling).
inline Var mean_rows(const Var& x) {
  auto px = x.node();
  const double inv = 1.0 / x.rows();
  Mat v = x.val().colwise().mean();
  return detail::make(std::move(v), {px}, [px, inv](Node& n) {
    px->ensure_grad();
    px->grad += inv * n.grad.replicate(px->val.rows(), 1);
  });
}

// Selects rows of a table by index (embedding lookup); grads scatter-add.
inline Var rows_select(const Var& table, const std::vector<int>& idx) {
  auto pt = table.node();
  Mat v(static_cast<int>(idx.size()), table.cols());
  for (size_t i = 0; i < idx.size(); ++i) v.row(static_cast<int>(i)) = table.val().row(idx[i]);
  return detail::make(std::move(v), {pt}, [pt, idx](Node& n) {
    pt->ensure_grad();
    for (size_t i = 0; i < idx.size(); ++i) pt->grad.row(idx[i]) += n.grad.row(static_cast<int>(i));
  });
}

// Row-wise unit normalization: y_i = x_i / ||x_i||.
inline Var normalize_rows(const Var& x, double eps = 1e-12) {
  auto px = x.node();
  Mat v = x.val();
  Vec norms(v.rows());
  for (int r = 0; r < v.rows(); ++r) {
    norms(r) = std::max(eps, v.row(r).norm());
    v.row(r) /= norms(r);
  }
  Mat vc = v;
  return detail::make(std::move(v), {px}, [px, vc, norms](Node& n) {
    px->ensure_grad();
    for (int r = 0; r < n.grad.rows(); ++r) {
      const Eigen::RowVectorXd u = vc.row(r);
      const Eigen::RowVectorXd g = n.grad.row(r);
      px->grad.row(r) += (g - (g * u.transpose())(0, 0) * u) / norms(r);
    }
  });
}

// Forward time difference along rows; row 0 is zero (pad-first policy).
inline Var time_diff(const Var& x) {
  auto px = x.node();
  Mat v = Mat::Zero(x.rows(), x.cols());
  if (x.rows() > 1) v.bottomRows(x.rows() - 1) = x.val().bottomRows(x.rows() - 1) - x.val().topRows(x.rows() - 1);
  return detail::make(std::move(v), {px}, [px](Node& n) {
    px->ensure_grad();
    const int R = static_cast<int>(n.grad.rows());
    if (R > 1) {
      px->grad.bottomRows(R - 1) += n.grad.bottomRows(R - 1);
      px->grad.topRows(R - 1) -= n.grad.bottomRows(R - 1);
    }
  });
}

// (T*N) x D frame-major stack -> T x (N*D) per-frame flattening.
inline Var merge_nodes(const Var& x, int frames, int nodes) {
  require(x.rows() == frames * nodes, "merge_nodes: row mismatch");
  const int d = x.cols();
  auto px = x.node();
  Mat v(frames, nodes * d);
  for (int t = 0; t < frames; ++t)
    for (int n0 = 0; n0 < nodes; ++n0) v.block(t, n0 * d, 1, d) = x.val().row(t * nodes + n0);
  return detail::make(std::move(v), {px}, [px, frames, nodes, d](Node& n) {
    px->ensure_grad();
    for (int t = 0; t < frames; ++t)
      for (int n0 = 0; n0 < nodes; ++n0) px->grad.row(t * nodes + n0) += n.grad.block(t, n0 * d, 1, d);
  });
}

// T x (N*D) -> (T*N) x D, inverse of merge_nodes.
inline Var split_nodes(const Var& x, int nodes) {
  const int frames = x.rows();
  require(x.cols() % nodes == 0, "split_nodes: cols not divisible");
  const int d = x.cols() / nodes;
  auto px = x.node();
  Mat v(frames * nodes, d);
  for (int t = 0; t < frames; ++t)
    for (int n0 = 0; n0 < nodes; ++n0) v.row(t * nodes + n0) = x.val().block(t, n0 * d, 1, d);
  return detail::make(std::move(v), {px}, [px, frames, nodes, d](Node& n) {
    px->ensure_grad();
    for (int t = 0; t < frames; ++t)
      for (int n0 = 0; n0 < nodes; ++n0) px->grad.block(t, n0 * d, 1, d) += n.grad.row(t * nodes + n0);
  });
}

// Per-frame graph convolution input half: Y[t] = A * X[t] on a (T*N) x D stack.
inline Var graph_mix(const Mat& adjacency, const Var& x, int frames) {
  const int N = static_cast<int>(adjacency.rows());
  require(x.rows() == frames * N, "graph_mix: row mismatch");
  auto px = x.node();
  Mat v(x.rows(), x.cols());
  for (int t = 0; t < frames; ++t) v.middleRows(t * N, N) = adjacency * x.val().middleRows(t * N, N);
  return detail::make(std::move(v), {px}, [px, adjacency, frames, N](Node& n) {
    px->ensure_grad();
    for (int t = 0; t < frames; ++t)
      px->grad.middleRows(t * N, N) += adjacency.transpose() * n.grad.middleRows(t * N, N);
  });
}

struct ParamStore {
  std::map<std::string, Var> params;  // ordered: deterministic iteration

  Var add(const std::string& name, Mat init) {
    require(!params.count(name), "ParamStore: duplicate name " + name);
    Var v = Var::param(std::move(init));
    params.emplace(name, v);
    return v;
  }
  Var get(const std::string& name) const {
    auto it = params.find(name);
    require(it != params.end(), "ParamStore: missing " + name);
    return it->second;
  }
  size_t count() const { return params.size(); }
};

// Uniform(-a, a) init with a = sqrt(6 / (fan_in + fan_out)).
inline Mat glorot(int rows, int cols, std::mt19937_64& rng, int fan_in, int fan_out) {
  const double a = std::sqrt(6.0 / (fan_in + fan_out));
  std::uniform_real_distribution<double> dist(-a, a);
  Mat m(rows, cols);
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) m(r, c) = dist(rng);
  return m;
}

}  // namespace cosyn::ad
