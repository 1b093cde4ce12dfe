#include <doctest.h>

#include <cmath>
#include <random>

#include "compat_reason/autodiff.hpp"
#include "support/fd_oracle.hpp"
#include "support/random_graph.hpp"

using namespace compat_reason;
using namespace compat_reason::ad;
using compat_reason::testing::central_directional;
using compat_reason::testing::central_gradient;
using compat_reason::testing::flatten;
using compat_reason::testing::RandomProgram;
using compat_reason::testing::relative_error;

TEST_CASE("relu clamps negatives") {
  Graph g;
  CHECK(relu(g.scalar(-1.0)).value().item() == 0.0);
  CHECK(relu(g.scalar(2.5)).value().item() == 2.5);
}

TEST_CASE("cross-entropy of uniform logits is ln 3") {
  Graph g;
  Var logits = g.constant(Tensor::row({0.0, 0.0, 0.0}));
  for (std::size_t k = 0; k < 3; ++k) {
    CHECK(softmax_cross_entropy(logits, k).value().item() == doctest::Approx(std::log(3.0)).epsilon(1e-15));
  }
  Var column = g.constant(Tensor::column({0.0, 0.0, 0.0}));
  CHECK(softmax_cross_entropy(column, 1).value().item() == doctest::Approx(1.0986122886681098));
}

TEST_CASE("identity matrix-vector product returns the vector") {
  Graph g;
  Var v = g.constant(Tensor::column({1.5, -2.0, 0.25}));
  Var out = matrix_vector_product(g.constant(Tensor::identity(3)), v);
  CHECK(out.value().storage() == v.value().storage());
}

TEST_CASE("first and second derivative of x^2") {
  Graph g;
  Var x = g.variable(Tensor::scalar(3.0));
  Var y = square(x);
  auto dx = g.grad(y, {x}, true);
  CHECK(dx[0].value().item() == 6.0);
  auto ddx = g.grad(dx[0], {x});
  CHECK(ddx[0].value().item() == 2.0);
}

TEST_CASE("gradient of a constant is exactly zero") {
  Graph g;
  Var x = g.variable(Tensor(2, 2, 1.0));
  Var c = sum(g.constant(Tensor(2, 2, 3.0)));
  auto dx = g.grad(c, {x});
  for (double v : dx[0].value().data()) CHECK(v == 0.0);
}

TEST_CASE("unreachable wrt gets a zero gradient") {
  Graph g;
  Var x = g.variable(Tensor(1, 3, 1.0));
  Var z = g.variable(Tensor(2, 1, 1.0));
  Var y = sum(mul(x, x));
  auto grads = g.grad(y, {x, z});
  CHECK(grads[1].shape() == Shape{2, 1});
  for (double v : grads[1].value().data()) CHECK(v == 0.0);
}

TEST_CASE("relu derivative at 0 is 0 and relu second derivative is 0") {
  Graph g;
  Var x = g.variable(Tensor::row({0.0, 1.0, -1.0}));
  Var y = sum(relu(x));
  auto dx = g.grad(y, {x}, true);
  CHECK(dx[0].value().storage() == std::vector<double>{0.0, 1.0, 0.0});
  Var w = g.constant(Tensor::row({1.0, 2.0, 3.0}));
  auto ddx = g.grad(sum(mul(dx[0], w)), {x});
  for (double v : ddx[0].value().data()) CHECK(v == 0.0);
}

TEST_CASE("max_index breaks ties toward the lowest index") {
  CHECK(max_index(Tensor::row({1.0, 3.0, 3.0})) == 1);
  CHECK(max_index(Tensor::row({0.0, 0.0, 0.0})) == 0);
  CHECK(argmax_rows(Tensor(2, 3, std::vector<double>{0, 2, 2, 5, 1, 5})) == std::vector<std::size_t>{1, 0});
}

TEST_CASE("error paths") {
  Graph g;
  Graph other;
  Var a = g.variable(Tensor(2, 3));
  Var b = g.variable(Tensor(3, 2));
  CHECK_THROWS_AS(add(a, b), ShapeError);
  CHECK_THROWS_AS(matmul(a, a), ShapeError);
  CHECK_THROWS_AS(add(a, other.variable(Tensor(2, 3))), GraphMismatchError);
  CHECK_THROWS_AS(g.grad(a, {a}), ShapeError);
  CHECK_THROWS_AS(log(g.constant(Tensor::scalar(-1.0))), NonFiniteError);
  CHECK_THROWS_AS(exp(g.constant(Tensor::scalar(1000.0))), NonFiniteError);
  CHECK_THROWS_AS(g.grad(sum(a), {g.constant(Tensor::scalar(1.0))}), Error);
}

TEST_CASE("linearity: grad(a f + b g) = a grad f + b grad g") {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  Graph g;
  Tensor xv(4, 3);
  for (std::size_t i = 0; i < xv.size(); ++i) xv[i] = u(rng);
  Var x = g.variable(xv);
  Var f = sum(softmax_rows(x));
  Var h = sum(mul(relu(x), x));
  Var combo = add(scale(f, 2.0), scale(h, -0.5));
  const auto gf = g.grad(f, {x})[0].value();
  const auto gh = g.grad(h, {x})[0].value();
  const auto gc = g.grad(combo, {x})[0].value();
  for (std::size_t i = 0; i < gc.size(); ++i) {
    CHECK(gc[i] == doctest::Approx(2.0 * gf[i] - 0.5 * gh[i]).epsilon(1e-14));
  }
}

TEST_CASE("3-layer MLP gradient matches central differences") {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(-0.5, 0.5);
  const std::size_t dims[] = {7, 16, 9, 3};
  std::vector<Shape> shapes;
  std::vector<double> flat;
  for (int l = 0; l < 3; ++l) {
    shapes.push_back({dims[l + 1], dims[l]});
    shapes.push_back({1, dims[l + 1]});
  }
  for (const Shape& s : shapes) {
    for (std::size_t i = 0; i < s.size(); ++i) flat.push_back(u(rng));
  }
  Tensor input(5, 7);
  for (std::size_t i = 0; i < input.size(); ++i) input[i] = 2.0 * u(rng);

  auto build = [&](Graph& g, const std::vector<double>& params, std::vector<Var>* leaves) {
    std::vector<Var> p;
    std::size_t pos = 0;
    for (const Shape& s : shapes) {
      std::vector<double> v(params.begin() + pos, params.begin() + pos + s.size());
      pos += s.size();
      p.push_back(g.variable(Tensor(s.rows, s.cols, std::move(v))));
    }
    Var h = g.constant(input);
    for (int l = 0; l < 3; ++l) {
      h = add_row_bias(matmul(h, p[2 * l], false, true), p[2 * l + 1]);
      if (l < 2) h = relu(h);
    }
    if (leaves) *leaves = p;
    return softmax_cross_entropy_rows(h, {0, 1, 2, 1, 0});
  };

  Graph g;
  std::vector<Var> leaves;
  Var loss = sum(build(g, flat, &leaves));
  const auto analytic = flatten(g.grad(loss, leaves));
  const auto numeric = central_gradient(
      [&](const std::vector<double>& p) {
        Graph h;
        return sum(build(h, p, nullptr)).value().item();
      },
      flat);
  CHECK(relative_error(analytic, numeric) < 1e-5);
}

TEST_CASE("random graphs: first-order gradients match central differences") {
  for (std::uint64_t seed = 0; seed < 25; ++seed) {
    CAPTURE(seed);
    RandomProgram prog(seed);
    Graph g;
    auto leaves = prog.make_leaves(g, prog.initial_values());
    Var out = prog.build(g, leaves);
    const auto analytic = flatten(g.grad(out, leaves));
    const auto numeric = central_gradient([&](const std::vector<double>& x) { return prog.evaluate(x); },
                                          prog.initial_values());
    CHECK(relative_error(analytic, numeric) <= 1e-5);
  }
}

TEST_CASE("random graphs: Hessian-vector products match differences of gradients") {
  for (std::uint64_t seed = 100; seed < 120; ++seed) {
    CAPTURE(seed);
    RandomProgram prog(seed);
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    std::vector<double> direction(prog.initial_values().size());
    for (double& d : direction) d = u(rng);

    Graph g;
    auto leaves = prog.make_leaves(g, prog.initial_values());
    auto first = g.grad(prog.build(g, leaves), leaves, true);
    Var dot = g.scalar(0.0);
    std::size_t pos = 0;
    for (const Var& gr : first) {
      const Shape s = gr.shape();
      std::vector<double> dv(direction.begin() + pos, direction.begin() + pos + s.size());
      pos += s.size();
      dot = add(dot, sum(mul(gr, g.constant(Tensor(s.rows, s.cols, std::move(dv))))));
    }
    const auto hvp = flatten(g.grad(dot, leaves));
    const auto numeric = central_directional(
        [&](const std::vector<double>& x) {
          Graph h;
          auto l = prog.make_leaves(h, x);
          return flatten(h.grad(prog.build(h, l), l));
        },
        prog.initial_values(), direction);
    CHECK(relative_error(hvp, numeric) <= 1e-4);
  }
}

TEST_CASE("gradients are deterministic across runs") {
  RandomProgram prog(42);
  auto run = [&] {
    Graph g;
    auto leaves = prog.make_leaves(g, prog.initial_values());
    return flatten(g.grad(prog.build(g, leaves), leaves));
  };
  CHECK(run() == run());
}
