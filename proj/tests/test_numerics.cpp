// Dense tensor, sparse matrix, and reverse-mode tape checks. The tape is
// validated against an independent central-difference oracle before any of
// the model code builds on it.

#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <memory>
#include <random>

#include "pathcast/autodiff.hpp"
#include "pathcast/csr.hpp"
#include "pathcast/tensor.hpp"

using pathcast::ComputeGraph;
using pathcast::CsrMatrix;
using pathcast::finite_difference_gradient;
using pathcast::GradientMap;
using pathcast::gradient_check_ratio;
using pathcast::ParamMap;
using pathcast::Tensor;
using pathcast::ValueId;

namespace {

Tensor random_matrix(std::mt19937_64& rng, std::size_t r, std::size_t c, double lo = -1.0,
                     double hi = 1.0) {
  std::uniform_real_distribution<double> dist(lo, hi);
  Tensor t({r, c});
  for (std::size_t i = 0; i < t.numel(); ++i) t.data()[i] = dist(rng);
  return t;
}

// Runs builder twice: analytically via the tape and numerically via central
// differences, and returns the worst coordinate error as a multiple of the
// tolerance max(1e-4 * scale, 1e-6).
double check_against_fd(const std::function<ValueId(ComputeGraph&, const ParamMap&)>& builder,
                        const ParamMap& params) {
  ComputeGraph g;
  ValueId root = builder(g, params);
  g.set_root(root);
  g.forward_eval();
  GradientMap analytic = g.gradient(root);

  GradientMap fd = finite_difference_gradient(
      [&](const ParamMap& p) {
        ComputeGraph fresh;
        ValueId r = builder(fresh, p);
        fresh.set_root(r);
        return fresh.forward_eval().at(0, 0);
      },
      params);
  return gradient_check_ratio(analytic, fd);
}

}  // namespace

TEST_CASE("tensor shape bookkeeping") {
  Tensor m = Tensor::matrix(2, 3, {1, 2, 3, 4, 5, 6});
  CHECK(m.rows() == 2);
  CHECK(m.cols() == 3);
  CHECK(m.at(1, 2) == 6.0);
  CHECK_THROWS_AS(Tensor({2, 2}, {1.0}), std::invalid_argument);
  CHECK_THROWS_AS(Tensor({0, 3}), std::invalid_argument);

  Tensor cube({2, 2, 2});
  cube.at(1, 0, 1) = 7.0;
  CHECK(cube.at(1, 0, 1) == 7.0);
  CHECK(cube.numel() == 8);

  Tensor eye = Tensor::identity(3);
  CHECK(eye.at(0, 0) == 1.0);
  CHECK(eye.at(0, 1) == 0.0);
}

TEST_CASE("csr construction and products") {
  // 3x3 with entries (0,1)=2, (2,0)=-1, (2,2)=4; triplets given out of order.
  CsrMatrix a = CsrMatrix::from_triplets(
      3, {{2, 2, 4.0}, {0, 1, 2.0}, {2, 0, -1.0}});
  CHECK(a.nnz() == 3);
  Tensor dense = a.to_dense();
  CHECK(dense.at(0, 1) == 2.0);
  CHECK(dense.at(2, 0) == -1.0);
  CHECK(dense.at(2, 2) == 4.0);
  CHECK(dense.at(1, 1) == 0.0);

  // Order invariance.
  CsrMatrix b = CsrMatrix::from_triplets(
      3, {{0, 1, 2.0}, {2, 0, -1.0}, {2, 2, 4.0}});
  CHECK(a.to_dense().values() == b.to_dense().values());

  Tensor x = Tensor::matrix(3, 2, {1, 0, 0, 1, 2, 3});
  Tensor ax = a.multiply(x);
  CHECK(ax.at(0, 0) == 0.0);
  CHECK(ax.at(0, 1) == 2.0);
  CHECK(ax.at(1, 0) == 0.0);
  CHECK(ax.at(2, 0) == 7.0);   // -1*1 + 4*2
  CHECK(ax.at(2, 1) == 12.0);  // -1*0 + 4*3

  // multiply_transpose equals multiplying by the dense transpose.
  Tensor g = Tensor::matrix(3, 2, {1, 2, 3, 4, 5, 6});
  Tensor atg = a.multiply_transpose(g);
  Tensor expect({3, 2});
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 2; ++j)
      for (std::size_t k = 0; k < 3; ++k) expect.at(i, j) += dense.at(k, i) * g.at(k, j);
  for (std::size_t i = 0; i < expect.numel(); ++i)
    CHECK(atg.data()[i] == Catch::Approx(expect.data()[i]).margin(1e-14));

  CHECK_THROWS_AS(CsrMatrix::from_triplets(2, {{0, 3, 1.0}}), std::invalid_argument);
  CHECK_THROWS_AS(CsrMatrix::from_triplets(2, {{0, 1, 1.0}, {0, 1, 2.0}}),
                  std::invalid_argument);
}

TEST_CASE("activation fixed points") {
  ComputeGraph g;
  ValueId z = g.input(Tensor::matrix(1, 3, {0.0, 0.0, 0.0}));
  ValueId sm = g.row_softmax(z);
  for (std::size_t j = 0; j < 3; ++j)
    CHECK(g.value(sm).at(0, j) == Catch::Approx(1.0 / 3.0).epsilon(1e-12));

  ValueId sg = g.sigmoid(z);
  CHECK(g.value(sg).at(0, 0) == 0.5);
  ValueId th = g.tanh_op(z);
  CHECK(g.value(th).at(0, 0) == 0.0);

  // Softmax rows sum to one even for spread-out magnitudes.
  ValueId wide = g.input(Tensor::matrix(2, 3, {100.0, 0.0, -100.0, 3.0, 2.0, 1.0}));
  ValueId wsm = g.row_softmax(wide);
  for (std::size_t i = 0; i < 2; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < 3; ++j) s += g.value(wsm).at(i, j);
    CHECK(s == Catch::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("matmul against identity and hand result") {
  ComputeGraph g;
  Tensor x = Tensor::matrix(3, 2, {1, 2, 3, 4, 5, 6});
  ValueId xi = g.input(x);
  ValueId eye = g.input(Tensor::identity(3));
  ValueId prod = g.matmul(eye, xi);
  CHECK(g.value(prod).values() == x.values());

  ValueId a = g.input(Tensor::matrix(2, 2, {1, 2, 3, 4}));
  ValueId b = g.input(Tensor::matrix(2, 2, {5, 6, 7, 8}));
  ValueId ab = g.matmul(a, b);
  CHECK(g.value(ab).values() == std::vector<double>{19, 22, 43, 50});

  CHECK_THROWS_WITH(g.matmul(a, xi), Catch::Matchers::ContainsSubstring("matmul"));
}

TEST_CASE("simple gradients have closed forms") {
  // d/dx sigmoid at 0 is 0.25.
  {
    ComputeGraph g;
    ValueId x = g.parameter("x", Tensor::matrix(1, 1, {0.0}));
    ValueId y = g.reduce_sum(g.sigmoid(x));
    g.set_root(y);
    g.forward_eval();
    GradientMap grads = g.gradient(y);
    CHECK(grads.at("x").at(0, 0) == Catch::Approx(0.25).epsilon(1e-12));
  }
  // Gradient of x^T x at (1,2) is (2,4).
  {
    ComputeGraph g;
    ValueId x = g.parameter("x", Tensor::matrix(1, 2, {1.0, 2.0}));
    ValueId y = g.reduce_sum(g.mul(x, x));
    g.set_root(y);
    g.forward_eval();
    GradientMap grads = g.gradient(y);
    CHECK(grads.at("x").at(0, 0) == Catch::Approx(2.0).epsilon(1e-12));
    CHECK(grads.at("x").at(0, 1) == Catch::Approx(4.0).epsilon(1e-12));
  }
  // A loss that ignores a parameter yields an exactly zero gradient for it.
  {
    ComputeGraph g;
    (void)g.parameter("unused", Tensor::matrix(2, 2, {1, 2, 3, 4}));
    ValueId x = g.parameter("x", Tensor::matrix(1, 1, {3.0}));
    ValueId y = g.reduce_sum(g.mul(x, x));
    g.set_root(y);
    g.forward_eval();
    GradientMap grads = g.gradient(y);
    for (std::size_t i = 0; i < 4; ++i) CHECK(grads.at("unused").data()[i] == 0.0);
  }
}

TEST_CASE("central difference oracle on x squared") {
  ParamMap p;
  p.emplace("x", Tensor::matrix(1, 1, {3.0}));
  GradientMap fd = finite_difference_gradient(
      [](const ParamMap& q) {
        const double x = q.at("x").at(0, 0);
        return x * x;
      },
      p);
  CHECK(fd.at("x").at(0, 0) == Catch::Approx(6.0).margin(1e-8));
}

TEST_CASE("every primitive matches the oracle") {
  std::mt19937_64 rng(20240817);

  ParamMap p;
  p.emplace("a", random_matrix(rng, 3, 4));
  p.emplace("b", random_matrix(rng, 4, 2));
  p.emplace("c", random_matrix(rng, 3, 2));
  p.emplace("row", random_matrix(rng, 1, 2));
  // Keep log inputs away from the clamp and relu inputs away from the kink.
  Tensor pos = random_matrix(rng, 3, 2, 0.5, 2.0);
  p.emplace("pos", pos);
  Tensor off = random_matrix(rng, 3, 4);
  for (std::size_t i = 0; i < off.numel(); ++i)
    if (std::abs(off.data()[i]) < 0.05) off.data()[i] = 0.1;
  p.emplace("off", off);

  auto sparse = std::make_shared<const CsrMatrix>(CsrMatrix::from_triplets(
      3, {{0, 0, 0.5}, {0, 2, 1.5}, {1, 1, -2.0}, {2, 0, 1.0}, {2, 2, 0.25}}));

  auto expect_match = [&](const char* label,
                          const std::function<ValueId(ComputeGraph&, const ParamMap&)>& b) {
    INFO(label);
    CHECK(check_against_fd(b, p) <= 1.0);
  };

  expect_match("matmul", [](ComputeGraph& g, const ParamMap& q) {
    ValueId a = g.parameter("a", q.at("a"));
    ValueId b = g.parameter("b", q.at("b"));
    return g.reduce_sum(g.matmul(a, b));
  });
  expect_match("spmm", [&](ComputeGraph& g, const ParamMap& q) {
    ValueId c = g.parameter("c", q.at("c"));
    return g.reduce_sum(g.mul(g.spmm(sparse, c), g.input(Tensor::matrix(3, 2, {1, 2, 3, 4, 5, 6}))));
  });
  expect_match("add+mul+scale", [](ComputeGraph& g, const ParamMap& q) {
    ValueId a = g.parameter("a", q.at("a"));
    ValueId off = g.parameter("off", q.at("off"));
    return g.reduce_sum(g.scale(g.mul(g.add(a, off), a), -1.75));
  });
  expect_match("add_rowwise", [](ComputeGraph& g, const ParamMap& q) {
    ValueId c = g.parameter("c", q.at("c"));
    ValueId row = g.parameter("row", q.at("row"));
    return g.reduce_sum(g.tanh_op(g.add_rowwise(c, row)));
  });
  expect_match("sigmoid", [](ComputeGraph& g, const ParamMap& q) {
    ValueId a = g.parameter("a", q.at("a"));
    return g.reduce_sum(g.sigmoid(a));
  });
  expect_match("tanh", [](ComputeGraph& g, const ParamMap& q) {
    ValueId a = g.parameter("a", q.at("a"));
    return g.reduce_sum(g.tanh_op(a));
  });
  expect_match("relu", [](ComputeGraph& g, const ParamMap& q) {
    ValueId off = g.parameter("off", q.at("off"));
    return g.reduce_sum(g.relu(off));
  });
  expect_match("row_softmax", [](ComputeGraph& g, const ParamMap& q) {
    ValueId a = g.parameter("a", q.at("a"));
    ValueId w = g.input(Tensor::matrix(3, 4, {1, -2, 3, -4, 5, -6, 7, -8, 2, 4, 6, 8}));
    return g.reduce_sum(g.mul(g.row_softmax(a), w));
  });
  expect_match("log", [](ComputeGraph& g, const ParamMap& q) {
    ValueId posv = g.parameter("pos", q.at("pos"));
    return g.reduce_sum(g.log_clamped(posv));
  });
  expect_match("concat+gather", [](ComputeGraph& g, const ParamMap& q) {
    ValueId a = g.parameter("a", q.at("a"));
    ValueId off = g.parameter("off", q.at("off"));
    ValueId cat = g.concat_rows({a, off});
    ValueId picked = g.gather_rows(cat, {0, 5, 5, 2});
    return g.reduce_sum(g.tanh_op(picked));
  });
  expect_match("transpose+reshape", [](ComputeGraph& g, const ParamMap& q) {
    ValueId a = g.parameter("a", q.at("a"));
    ValueId t = g.transpose(a);                 // 4x3
    ValueId r = g.reshape(t, {2, 6});
    ValueId w = g.input(Tensor::matrix(2, 6, {1, 2, 3, 4, 5, 6, -6, -5, -4, -3, -2, -1}));
    return g.reduce_sum(g.mul(r, w));
  });
  expect_match("composite chain", [&](ComputeGraph& g, const ParamMap& q) {
    ValueId a = g.parameter("a", q.at("a"));
    ValueId b = g.parameter("b", q.at("b"));
    ValueId c = g.parameter("c", q.at("c"));
    ValueId h = g.sigmoid(g.matmul(a, b));      // 3x2
    ValueId m = g.mul(g.tanh_op(c), h);
    ValueId s = g.row_softmax(g.spmm(sparse, m));
    return g.reduce_sum(g.log_clamped(s));
  });
}

TEST_CASE("forward_eval recomputes after in-place parameter updates") {
  ComputeGraph g;
  ValueId x = g.parameter("x", Tensor::matrix(1, 1, {2.0}));
  ValueId y = g.reduce_sum(g.mul(x, x));
  g.set_root(y);
  CHECK(g.forward_eval().at(0, 0) == 4.0);

  g.param_tensor("x").at(0, 0) = 5.0;
  CHECK_THROWS_WITH(g.gradient(y), Catch::Matchers::ContainsSubstring("stale"));
  CHECK(g.forward_eval().at(0, 0) == 25.0);
  GradientMap grads = g.gradient(y);
  CHECK(grads.at("x").at(0, 0) == 10.0);
}

TEST_CASE("gradient requires a scalar root") {
  ComputeGraph g;
  ValueId x = g.parameter("x", Tensor::matrix(2, 2, {1, 2, 3, 4}));
  ValueId y = g.mul(x, x);
  g.set_root(y);
  g.forward_eval();
  CHECK_THROWS_AS(g.gradient(y), std::invalid_argument);
}

TEST_CASE("non-finite leaves are rejected") {
  ComputeGraph g;
  Tensor bad = Tensor::matrix(1, 2, {1.0, std::numeric_limits<double>::quiet_NaN()});
  CHECK_THROWS_AS(g.input(bad), std::invalid_argument);
  ValueId x = g.parameter("x", Tensor::matrix(1, 1, {1.0}));
  g.set_root(g.reduce_sum(x));
  g.param_tensor("x").at(0, 0) = std::numeric_limits<double>::infinity();
  CHECK_THROWS_AS(g.forward_eval(), std::runtime_error);
}

TEST_CASE("tape evaluation is bit-identical across runs") {
  auto run = [] {
    std::mt19937_64 rng(7);
    ComputeGraph g;
    ValueId a = g.parameter("a", random_matrix(rng, 4, 4));
    ValueId b = g.parameter("b", random_matrix(rng, 4, 4));
    ValueId y = g.reduce_sum(g.row_softmax(g.tanh_op(g.matmul(a, b))));
    g.set_root(y);
    g.forward_eval();
    GradientMap grads = g.gradient(y);
    return std::make_pair(g.value(y).at(0, 0), grads.at("a").values());
  };
  auto [v1, g1] = run();
  auto [v2, g2] = run();
  CHECK(v1 == v2);
  CHECK(g1 == g2);
}
