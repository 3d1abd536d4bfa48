#include <cmath>
#include <vector>

#include "doctest.h"
#include "vaest/gradcheck.hpp"
#include "vaest/graph.hpp"
#include "vaest/rng.hpp"
#include "vaest/tensor.hpp"

using namespace vaest;

namespace {

TensorPtr randt(Rng& rng, Shape shape, double lo = -2.0, double hi = 2.0,
                bool requires_grad = true) {
  return Tensor::create(shape, rng.uniform_vec(shape_size(shape), lo, hi), requires_grad);
}

// Runs gradient_check over `seeds` independent random draws and requires every
// coordinate to pass.
void check_many(const LossFn& f, const std::vector<Shape>& shapes, int seeds = 20,
                double lo = -2.0, double hi = 2.0, double tol = 1e-5) {
  for (int s = 0; s < seeds; ++s) {
    Rng rng(1000 + static_cast<std::uint64_t>(s));
    std::vector<TensorPtr> params;
    params.reserve(shapes.size());
    for (const auto& sh : shapes) params.push_back(randt(rng, sh, lo, hi));
    auto res = gradient_check(f, params, 1e-5, tol);
    CAPTURE(s);
    CAPTURE(res.max_rel_err);
    CAPTURE(res.worst_param);
    CAPTURE(res.worst_coord);
    REQUIRE(res.pass());
    REQUIRE(res.checked > 0);
  }
}

}  // namespace

TEST_CASE("tensor: shape validation") {
  CHECK_THROWS_AS(Tensor::create({}, {}, false), std::invalid_argument);
  CHECK_THROWS_AS(Tensor::create({2, 0}, {}, false), std::invalid_argument);
  CHECK_THROWS_AS(Tensor::create({2, 2}, {1.0, 2.0, 3.0}, false), std::invalid_argument);
  auto t = Tensor::matrix(2, 3, {1, 2, 3, 4, 5, 6});
  CHECK(t->rows() == 2);
  CHECK(t->cols() == 3);
  CHECK(t->at(1, 2) == 6.0);
  CHECK_FALSE(t->is_scalar());
  CHECK(Tensor::scalar(4.5)->value() == 4.5);
  CHECK_THROWS_AS(t->value(), std::logic_error);
}

TEST_CASE("tensor: widen converts f32 features exactly") {
  std::vector<float> f = {1.5f, -0.25f, 3.0f, 0.125f};
  auto t = Tensor::widen(2, 2, f);
  CHECK(t->at(0, 0) == 1.5);
  CHECK(t->at(1, 1) == 0.125);
}

TEST_CASE("tensor: gradient buffer lifecycle") {
  auto t = Tensor::matrix(1, 2, {1, 2}, true);
  CHECK_FALSE(t->has_grad());
  CHECK_THROWS_AS(t->grad(), std::logic_error);
  t->accumulate_grad(std::vector<double>{0.5, 0.25});
  t->accumulate_grad(std::vector<double>{0.5, 0.25});
  CHECK(t->grad()[0] == 1.0);
  CHECK(t->grad()[1] == 0.5);
  t->zero_grad();
  CHECK_FALSE(t->has_grad());
}

TEST_CASE("graph: forward values of elementwise primitives") {
  Graph g;
  auto x = Tensor::matrix(1, 3, {0.0, 1.0, -1.0});
  CHECK(g.sigmoid(x)->data()[0] == 0.5);
  CHECK(g.tanh(x)->data()[0] == 0.0);
  CHECK(g.relu(x)->data()[2] == 0.0);
  CHECK(g.relu(x)->data()[1] == 1.0);
  CHECK(g.exp(x)->data()[0] == 1.0);
  CHECK(g.square(x)->data()[2] == 1.0);
  CHECK(g.scale(x, -2.0)->data()[1] == -2.0);
}

TEST_CASE("graph: softmax of a constant row is uniform") {
  Graph g;
  auto y = g.softmax(Tensor::matrix(1, 3, {5.0, 5.0, 5.0}));
  for (double v : y->data()) CHECK(v == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
  // Max subtraction keeps large logits finite.
  auto z = g.softmax(Tensor::matrix(1, 2, {1000.0, 1000.0}));
  CHECK(z->data()[0] == doctest::Approx(0.5));
}

TEST_CASE("graph: matmul against identity and known product") {
  Graph g;
  auto a = Tensor::matrix(2, 2, {1, 2, 3, 4});
  auto eye = Tensor::matrix(2, 2, {1, 0, 0, 1});
  auto p = g.matmul(a, eye);
  for (std::size_t i = 0; i < 4; ++i) CHECK(p->data()[i] == a->data()[i]);
  auto b = Tensor::matrix(2, 1, {1, 1});
  auto q = g.matmul(a, b);
  CHECK(q->at(0, 0) == 3.0);
  CHECK(q->at(1, 0) == 7.0);
  CHECK_THROWS_AS(g.matmul(a, Tensor::matrix(3, 2, {1, 2, 3, 4, 5, 6})),
                  std::invalid_argument);
}

TEST_CASE("graph: concat and slice round trip") {
  Graph g;
  auto a = Tensor::matrix(2, 2, {1, 2, 3, 4});
  auto b = Tensor::matrix(2, 1, {5, 6});
  auto cc = g.concat_cols({a, b});
  CHECK(cc->shape() == Shape{2, 3});
  CHECK(cc->at(0, 2) == 5.0);
  CHECK(cc->at(1, 2) == 6.0);
  auto back = g.slice_cols(cc, 0, 2);
  for (std::size_t i = 0; i < 4; ++i) CHECK(back->data()[i] == a->data()[i]);

  auto cr = g.concat_rows({a, g.transpose(b)});
  CHECK(cr->shape() == Shape{3, 2});
  CHECK(cr->at(2, 0) == 5.0);
  auto mid = g.slice_rows(cr, 1, 2);
  CHECK(mid->at(0, 0) == 3.0);

  CHECK_THROWS_AS(g.slice_rows(a, 1, 1), std::invalid_argument);
  CHECK_THROWS_AS(g.slice_cols(a, 0, 3), std::invalid_argument);
  CHECK_THROWS_AS(g.concat_cols({}), std::invalid_argument);
}

TEST_CASE("graph: causal dilated conv matches a reference loop") {
  // T=5, C_in=2, C_out=1, k=2, dilation=2.
  Graph g;
  auto x = Tensor::matrix(5, 2, {1, 0, 0, 1, 1, 1, 2, 0, 0, 2});
  auto w = Tensor::create({2, 2, 1}, {1.0, 2.0, 3.0, 4.0}, false);
  auto b = Tensor::create({1}, {0.5}, false);
  auto y = g.causal_dilated_conv1d(x, w, b, 2);
  REQUIRE(y->shape() == Shape{5, 1});
  for (std::size_t t = 0; t < 5; ++t) {
    double want = 0.5;
    for (std::size_t tap = 0; tap < 2; ++tap) {
      const auto shift = tap * 2;
      if (t < shift) continue;  // causal left padding contributes zero
      const std::size_t src = t - shift;
      for (std::size_t ci = 0; ci < 2; ++ci) {
        want += x->at(src, ci) * w->data()[tap * 2 + ci];
      }
    }
    CHECK(y->data()[t] == doctest::Approx(want).epsilon(1e-12));
  }
}

TEST_CASE("graph: backward on sum of squares gives 2x") {
  Graph g;
  auto x = Tensor::matrix(1, 2, {1.0, 2.0}, true);
  auto loss = g.sum(g.square(x));
  g.backward(loss);
  CHECK(x->grad()[0] == doctest::Approx(2.0).epsilon(1e-12));
  CHECK(x->grad()[1] == doctest::Approx(4.0).epsilon(1e-12));
}

TEST_CASE("graph: sigmoid derivative at zero is 0.25") {
  Graph g;
  auto x = Tensor::matrix(1, 1, {0.0}, true);
  g.backward(g.sum(g.sigmoid(x)));
  CHECK(x->grad()[0] == doctest::Approx(0.25).epsilon(1e-12));
}

TEST_CASE("graph: reuse of a tensor accumulates gradient") {
  Graph g;
  auto x = Tensor::matrix(1, 2, {3.0, -1.0}, true);
  g.backward(g.sum(g.add(x, x)));
  CHECK(x->grad()[0] == 2.0);
  CHECK(x->grad()[1] == 2.0);
}

TEST_CASE("graph: branches unreachable from the loss stay gradient-free") {
  Graph g;
  auto x = Tensor::matrix(1, 2, {1.0, 2.0}, true);
  auto used = g.square(x);
  auto unused = g.exp(x);
  g.backward(g.sum(used));
  CHECK(x->has_grad());
  CHECK_FALSE(unused->has_grad());
}

TEST_CASE("graph: recording can be disabled") {
  Graph g;
  g.set_grad_enabled(false);
  auto x = Tensor::matrix(1, 2, {1.0, 2.0}, true);
  auto y = g.sum(g.square(x));
  CHECK_FALSE(y->requires_grad());
  CHECK(g.node_count() == 0);
  CHECK_THROWS_AS(g.backward(y), std::invalid_argument);
  g.set_grad_enabled(true);
  CHECK_THROWS_AS(g.backward(g.square(Tensor::matrix(1, 2, {1, 2}, true))),
                  std::invalid_argument);  // non-scalar loss
}

TEST_CASE("graph: domain violations are rejected eagerly") {
  Graph g;
  CHECK_THROWS_AS(g.log(Tensor::matrix(1, 1, {0.0})), std::domain_error);
  CHECK_THROWS_AS(g.log(Tensor::matrix(1, 1, {-1.0})), std::domain_error);
  CHECK_THROWS_AS(g.sqrt(Tensor::matrix(1, 1, {-1.0})), std::domain_error);
  CHECK_THROWS_AS(g.exp(Tensor::matrix(1, 1, {1000.0})), std::domain_error);
  CHECK_THROWS_AS(g.div(Tensor::matrix(1, 1, {1.0}), Tensor::scalar(0.0)),
                  std::domain_error);
}

TEST_CASE("graph: softmax gradient equals p - w for cross entropy") {
  // loss = -sum(w * log softmax(z)) has gradient softmax(z) - w; this pins the
  // softmax/log/mul/sum chain at machine precision against the closed form.
  Graph g;
  auto z = Tensor::matrix(1, 3, {0.2, -0.4, 1.1}, true);
  auto w = Tensor::matrix(1, 3, {0.5, 0.3, 0.2});
  auto loss = g.scale(g.sum(g.mul(w, g.log(g.softmax(z)))), -1.0);
  g.backward(loss);
  Graph fwd;
  auto p = fwd.softmax(z);
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(z->grad()[i] == doctest::Approx(p->data()[i] - w->data()[i]).epsilon(1e-12));
  }
}

TEST_CASE("graph: identical seeds give bitwise identical results") {
  auto run = [] {
    Rng rng(7);
    Graph g;
    auto a = randt(rng, {4, 3});
    auto b = randt(rng, {3, 2});
    auto loss = g.mean(g.square(g.tanh(g.matmul(a, b))));
    g.backward(loss);
    return std::pair{loss->value(), std::vector<double>(a->grad().begin(), a->grad().end())};
  };
  auto [l1, g1] = run();
  auto [l2, g2] = run();
  CHECK(l1 == l2);
  CHECK(g1 == g2);
}

TEST_CASE("gradcheck: matmul") {
  check_many([](Graph& g, const std::vector<TensorPtr>& p) {
    return g.mean(g.square(g.matmul(p[0], p[1])));
  }, {{3, 4}, {4, 2}});
}

TEST_CASE("gradcheck: transpose") {
  check_many([](Graph& g, const std::vector<TensorPtr>& p) {
    return g.mean(g.square(g.matmul(g.transpose(p[0]), p[1])));
  }, {{4, 3}, {4, 2}});
}

TEST_CASE("gradcheck: add with row broadcast") {
  check_many([](Graph& g, const std::vector<TensorPtr>& p) {
    return g.mean(g.square(g.add(p[0], p[1])));
  }, {{3, 4}, {4}});
}

TEST_CASE("gradcheck: sub and mul") {
  check_many([](Graph& g, const std::vector<TensorPtr>& p) {
    return g.mean(g.mul(g.sub(p[0], p[1]), p[0]));
  }, {{3, 3}, {3, 3}});
}

TEST_CASE("gradcheck: mul by scalar on both sides") {
  check_many([](Graph& g, const std::vector<TensorPtr>& p) {
    auto left = g.mul(p[2], p[0]);
    auto right = g.mul(left, p[3]);
    return g.sum(g.mul(right, p[1]));
  }, {{2, 3}, {2, 3}, {1}, {1}});
}

TEST_CASE("gradcheck: div elementwise and by scalar") {
  check_many([](Graph& g, const std::vector<TensorPtr>& p) {
    return g.mean(g.div(g.div(p[0], p[1]), p[2]));
  }, {{2, 3}, {2, 3}, {1}}, 20, 0.5, 2.5);
}

TEST_CASE("gradcheck: scale, sum, mean") {
  check_many([](Graph& g, const std::vector<TensorPtr>& p) {
    return g.add(g.sum(g.scale(p[0], 1.5)), g.mean(g.square(p[0])));
  }, {{3, 3}});
}

TEST_CASE("gradcheck: concat and slice") {
  check_many([](Graph& g, const std::vector<TensorPtr>& p) {
    auto cc = g.concat_cols({p[0], p[1]});
    auto cr = g.concat_rows({cc, cc});
    auto s = g.slice_rows(g.slice_cols(cr, 1, 4), 1, 3);
    return g.mean(g.square(s));
  }, {{2, 2}, {2, 3}});
}

TEST_CASE("gradcheck: sigmoid, tanh, relu") {
  check_many([](Graph& g, const std::vector<TensorPtr>& p) {
    auto h = g.tanh(g.sigmoid(p[0]));
    return g.mean(g.mul(g.relu(p[1]), g.square(h)));
  }, {{2, 4}, {2, 4}});
}

TEST_CASE("gradcheck: exp, log, sqrt, square") {
  check_many([](Graph& g, const std::vector<TensorPtr>& p) {
    return g.mean(g.mul(g.log(p[0]), g.sqrt(g.square(g.exp(p[1])))));
  }, {{2, 3}, {2, 3}}, 20, 0.1, 1.5);
}

TEST_CASE("gradcheck: softmax weighted by a fixed tensor") {
  Rng wr(99);
  auto w = randt(wr, {3, 5}, -1.0, 1.0, false);
  check_many([w](Graph& g, const std::vector<TensorPtr>& p) {
    return g.sum(g.mul(g.softmax(p[0]), w));
  }, {{3, 5}});
}

TEST_CASE("gradcheck: causal dilated conv") {
  check_many([](Graph& g, const std::vector<TensorPtr>& p) {
    return g.mean(g.square(g.causal_dilated_conv1d(p[0], p[1], p[2], 2)));
  }, {{5, 3}, {3, 3, 2}, {2}}, 20, -1.0, 1.0);
}

TEST_CASE("gradcheck: composite two layer network") {
  Rng wr(123);
  auto target = randt(wr, {4, 3}, -0.5, 0.5, false);
  check_many([target](Graph& g, const std::vector<TensorPtr>& p) {
    auto h = g.tanh(g.add(g.matmul(p[0], p[1]), p[2]));
    auto z = g.softmax(g.matmul(h, p[3]));
    auto err = g.sub(z, target);
    return g.add(g.mean(g.square(err)), g.mean(h));
  }, {{4, 5}, {5, 6}, {6}, {6, 3}}, 20, -1.0, 1.0);
}
