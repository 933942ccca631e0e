#include <doctest.h>

#include <random>

#include "cosyn/layers.hpp"
#include "gradcheck.hpp"
#include "test_util.hpp"

using namespace cosyn;
using ad::Var;

TEST_CASE("autodiff: elementwise and matmul gradients") {
  std::mt19937_64 rng(51);
  ad::ParamStore ps;
  Var a = ps.add("a", testutil::random_mat(3, 4, rng));
  Var b = ps.add("b", testutil::random_mat(4, 2, rng));
  Var c = ps.add("c", testutil::random_mat(3, 2, rng));
  auto fwd = [&] {
    Var y = ad::matmul(ad::leaky_relu(a, 0.2), b);
    y = ad::sigmoid(ad::add(y, c));
    return ad::mean(ad::hadamard(y, y));
  };
  CHECK(testutil::max_rel_error(ps, fwd) < 1e-6);
}

TEST_CASE("autodiff: softplus, log, sqrt, bias, concat") {
  std::mt19937_64 rng(52);
  ad::ParamStore ps;
  Var a = ps.add("a", testutil::random_mat(2, 3, rng));
  Var b = ps.add("b", testutil::random_mat(1, 3, rng));
  auto fwd = [&] {
    Var sp = ad::softplus(ad::add_bias(a, b));
    Var lg = ad::log(ad::add(sp, Var::constant(Mat::Constant(2, 3, 0.5))));
    Var sq = ad::sqrt(sp);
    return ad::sum(ad::concat_cols({lg, sq}));
  };
  CHECK(testutil::max_rel_error(ps, fwd) < 1e-6);
}

TEST_CASE("autodiff: abs_sum and time_diff") {
  std::mt19937_64 rng(53);
  ad::ParamStore ps;
  Var a = ps.add("a", testutil::random_mat(5, 3, rng));
  Mat target = testutil::random_mat(5, 3, rng);
  auto fwd = [&] {
    Var d = ad::sub(a, Var::constant(target));
    return ad::add(ad::l1(a, Var::constant(target)), ad::abs_sum(ad::time_diff(d)));
  };
  CHECK(testutil::max_rel_error(ps, fwd) < 1e-5);
}

TEST_CASE("autodiff: normalize_rows gradient and unit output") {
  std::mt19937_64 rng(54);
  ad::ParamStore ps;
  Var a = ps.add("a", testutil::random_mat(4, 3, rng));
  Mat readout = testutil::random_mat(4, 3, rng);
  auto fwd = [&] { return ad::sum(ad::cmul(ad::normalize_rows(a), readout)); };
  Var y = ad::normalize_rows(a);
  for (int r = 0; r < 4; ++r) CHECK(y.val().row(r).norm() == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(testutil::max_rel_error(ps, fwd) < 1e-6);
}

TEST_CASE("autodiff: rows_select scatters gradients") {
  std::mt19937_64 rng(55);
  ad::ParamStore ps;
  Var table = ps.add("t", testutil::random_mat(6, 3, rng));
  std::vector<int> idx{1, 1, 4, 0};
  auto fwd = [&] { return ad::mean(ad::rows_select(table, idx)); };
  CHECK(testutil::max_rel_error(ps, fwd) < 1e-6);
}

TEST_CASE("autodiff: merge/split nodes round trip") {
  std::mt19937_64 rng(56);
  Mat x = testutil::random_mat(3 * 4, 2, rng);
  Var v = Var::constant(x);
  Var merged = ad::merge_nodes(v, 3, 4);
  CHECK(merged.rows() == 3);
  CHECK(merged.cols() == 8);
  Var back = ad::split_nodes(merged, 4);
  CHECK((back.val() - x).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("layers: temporal conv gradient") {
  std::mt19937_64 rng(57);
  ad::ParamStore ps;
  nn::TemporalConv conv(ps, "tc", 3, 2, 3, rng);
  Var x = ps.add("x", testutil::random_mat(6 * 2, 3, rng));  // 6 frames, 2 nodes
  Mat readout = testutil::random_mat(6 * 2, 2, rng);
  auto fwd = [&] { return ad::sum(ad::cmul(conv(x, 6, 2), readout)); };
  CHECK(testutil::max_rel_error(ps, fwd) < 1e-6);
}

TEST_CASE("layers: temporal upsample gradient and shape") {
  std::mt19937_64 rng(58);
  ad::ParamStore ps;
  nn::TemporalUpsample up(ps, "up", 3, 2, 4, 34, rng);
  Var x = ps.add("x", testutil::random_mat(4, 3, rng));
  Mat readout = testutil::random_mat(34, 2, rng);
  auto fwd = [&] { return ad::sum(ad::cmul(up(x), readout)); };
  CHECK(up(x).rows() == 34);
  CHECK(testutil::max_rel_error(ps, fwd) < 1e-6);
}

TEST_CASE("layers: graph conv block gradient") {
  std::mt19937_64 rng(59);
  Skeleton star;
  star.joint_count = 4;
  star.parent_index = {-1, 0, 0, 0};
  star.bone_lengths = {1, 1, 1};
  auto g = build_pose_graph(star, 1);
  ad::ParamStore ps;
  nn::StGraphConv block(ps, "g", g, 3, 2, rng);
  Var x = ps.add("x", testutil::random_mat(5 * 3, 3, rng));
  Mat readout = testutil::random_mat(5 * 3, 2, rng);
  auto fwd = [&] { return ad::sum(ad::cmul(block(x, 5), readout)); };
  CHECK(testutil::max_rel_error(ps, fwd) < 1e-5);
}

TEST_CASE("layers: collate_var matches plain collate") {
  std::mt19937_64 rng(60);
  CollationPlan plan;
  plan.component_nodes = {{0, 2}, {1}};
  plan.pad_to = 2;
  Mat feats = testutil::random_mat(2 * 3, 2, rng);
  Var v = Var::constant(feats);
  Var c = nn::collate_var(v, 2, plan);
  CHECK((c.val() - collate(feats, 2, plan)).cwiseAbs().maxCoeff() == 0.0);

  ad::ParamStore ps;
  Var x = ps.add("x", feats);
  Mat readout = testutil::random_mat(2 * 2, 4, rng);
  auto fwd = [&] { return ad::sum(ad::cmul(nn::collate_var(x, 2, plan), readout)); };
  CHECK(testutil::max_rel_error(ps, fwd) < 1e-6);
}

TEST_CASE("autodiff: repeated backward starts from clean grads") {
  ad::ParamStore ps;
  Var a = ps.add("a", Mat::Constant(1, 1, 2.0));
  Var l1 = ad::mean(ad::hadamard(a, a));
  ad::backward(l1);
  Mat g1 = a.grad();
  Var l2 = ad::mean(ad::hadamard(a, a));
  ad::backward(l2);
  CHECK((a.grad() - g1).cwiseAbs().maxCoeff() == 0.0);
}
