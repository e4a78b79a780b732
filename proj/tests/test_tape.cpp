// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cmath>

#include "support.hpp"
#include "treenmt/adadelta.hpp"
#include "treenmt/encoder.hpp"
#include "treenmt/error.hpp"
#include "treenmt/kernels.hpp"
#include "treenmt/tape.hpp"

using namespace treenmt;
using doctest::Approx;

namespace {

/// Largest relative error between backward() and central differences.
double fd_error(ParamStore& store, Tape& tape, Var loss, double h = 1e-5) {
  GradStore g(store);
  tape.backward(loss, &g);
  double worst = 0;
  for (ParamId id = 0; id < store.size(); ++id) {
    auto vals = store.value(id).values();
    for (std::size_t k = 0; k < vals.size(); ++k) {
      const double saved = vals[k];
      vals[k] = saved + h;
      tape.replay();
      const double fp = tape.scalar_value(loss);
      vals[k] = saved - h;
      tape.replay();
      const double fm = tape.scalar_value(loss);
      vals[k] = saved;
      const double num = (fp - fm) / (2 * h);
      const double ana = g[id].values()[k];
      worst = std::max(worst, std::fabs(num - ana) / std::max({std::fabs(num), std::fabs(ana), 1e-6}));
    }
  }
  tape.replay();
  return worst;
}

}  // namespace

TEST_SUITE("tape") {
  TEST_CASE("affine examples") {
    Tape t;
    const Var x = t.input(Matrix::column({1, 1}));
    const Var eye = t.input(Matrix::from_rows({{1, 0}, {0, 1}}));
    const Var w = t.input(Matrix::from_rows({{1, 2}, {3, 4}}));
    const Var zero_w = t.input(Matrix(2, 2));
    const Var b = t.input(Matrix::column({1, 2}));
    CHECK(t.value(t.affine({eye, x}, Var{})) == Matrix::column({1, 1}));
    CHECK(t.value(t.affine({zero_w, x}, b)) == Matrix::column({1, 2}));
    CHECK(t.value(t.affine({w, x}, Var{})) == Matrix::column({3, 7}));
    CHECK(t.value(t.affine({w, x, eye, x}, b)) == Matrix::column({5, 10}));
  }

  TEST_CASE("shape errors") {
    Tape t;
    const Var x = t.input(Matrix::column({1, 1, 1}));
    const Var w = t.input(Matrix(2, 2));
    CHECK_THROWS_AS(t.affine({w, x}, Var{}), Error);
    CHECK_THROWS_AS(t.add(x, t.input(Matrix::column({1}))), Error);
    CHECK_THROWS_AS(t.backward(x), Error);
  }

  TEST_CASE("nonlinearities") {
    Tape t;
    const Var z = t.input(Matrix::column({0}));
    CHECK(t.scalar_value(t.sigmoid(z)) == 0.5);
    CHECK(t.scalar_value(t.tanh(z)) == 0.0);
    const Var eq = t.softmax(t.input(Matrix(5, 1, 0.3)));
    for (double v : t.value(eq).values()) CHECK(v == Approx(0.2).epsilon(1e-15));
    const Var two = t.softmax(t.input(Matrix::column({std::log(2.0), 0.0})));
    CHECK(t.value(two)[0] == Approx(2.0 / 3.0).epsilon(1e-15));
    CHECK(t.value(two)[1] == Approx(1.0 / 3.0).epsilon(1e-15));
    const Var one = t.softmax(t.input(Matrix::column({-4.0})));
    CHECK(t.scalar_value(one) == 1.0);
    const Var big = t.softmax(t.input(Matrix::column({1000.0, 0.0})));
    CHECK(std::isfinite(t.value(big)[1]));
  }

  TEST_CASE("gradient of sum and square") {
    Tape t;
    const Var x = t.input(Matrix::column({1, 2, 3}));
    const Var s = t.sum(x);
    t.backward(s);
    CHECK(t.grad(x) == Matrix::column({1, 1, 1}));

    Tape u;
    const Var y = u.input(Matrix::column({3}));
    const Var sq = u.mul(y, y);
    u.backward(sq);
    CHECK(u.grad(y)[0] == 6.0);
  }

  TEST_CASE("reused nodes accumulate adjoints") {
    Tape t;
    const Var x = t.input(Matrix::column({2}));
    const Var y = t.add(t.mul(x, x), t.scale(x, t.scalar(3.0)));
    t.backward(y);
    CHECK(t.grad(x)[0] == 7.0);
  }

  TEST_CASE("two stacked GRU cells match finite differences") {
    for (std::uint64_t seed : {1u, 2u, 3u}) {
      ParamStore p;
      const GruParams a = register_gru(p, "g1", 4, 5, seed);
      const GruParams b = register_gru(p, "g2", 5, 3, seed + 10);
      Rng rng(seed);
      const ParamId x = p.add("x", support::random_matrix(rng, 4, 1));
      const ParamId h1 = p.add("h1", support::random_matrix(rng, 5, 1));
      const ParamId h2 = p.add("h2", support::random_matrix(rng, 3, 1));
      for (ParamId id = 0; id < p.size(); ++id)
        for (double& v : p.value(id).values()) v = rng.uniform(-1, 1);
      Tape t;
      const Var o1 = gru_step(t, bind(t, p, a), t.param(p, x), t.param(p, h1));
      const Var o2 = gru_step(t, bind(t, p, b), o1, t.param(p, h2));
      const Var loss = t.dot(t.input(support::random_matrix(rng, 3, 1)), o2);
      CHECK(fd_error(p, t, loss) < 1e-6);
    }
  }

  TEST_CASE("every primitive matches finite differences") {
    ParamStore p;
    Rng rng(9);
    const ParamId a = p.add("a", support::random_matrix(rng, 4, 1));
    const ParamId b = p.add("b", support::random_matrix(rng, 4, 1));
    const ParamId w = p.add("w", support::random_matrix(rng, 3, 4));
    const ParamId emb = p.add("emb", support::random_matrix(rng, 5, 4));
    const ParamId s = p.add("s", support::random_matrix(rng, 1, 1));
    Tape t;
    const Var va = t.param(p, a), vb = t.param(p, b), vw = t.param(p, w), vs = t.param(p, s);
    const Var row = t.lookup(p, emb, 2);
    Var h = t.tanh(t.affine({vw, t.mul(va, row)}, Var{}));
    Var g = t.sigmoid(t.sub(vb, t.one_minus(va)));
    const Var cat = t.concat({h, t.slice(g, 1, 2)});
    const Var sm = t.softmax(cat);
    const std::vector<Var> vecs{va, vb, row};
    const Var ws = t.weighted_sum(sm, 1, vecs, 4);
    const std::vector<std::size_t> idx{4, 0};
    const Var ws2 = t.weighted_sum(sm, idx, std::vector<Var>{vb, va}, 4);
    const Var mix = t.gru_mix(t.sigmoid(va), ws, ws2);
    const std::vector<Var> keys{va, vb, mix};
    const Var sc = t.attention_scores(t.slice(vb, 0, 4), t.scale(row, vs), keys);
    const std::vector<Var> terms{t.sum(sc), t.dot(mix, va), t.nll(cat, 3)};
    const Var loss = t.add_n(terms);
    CHECK(fd_error(p, t, loss) < 1e-6);
  }

  TEST_CASE("lookup bounds") {
    ParamStore p;
    const ParamId e = p.add("e", Matrix(3, 2));
    Tape t;
    CHECK_THROWS_AS(t.lookup(p, e, 3), Error);
  }

  TEST_CASE("replay follows parameter changes") {
    ParamStore p;
    const ParamId x = p.add("x", Matrix::column({1}));
    Tape t;
    const Var y = t.mul(t.param(p, x), t.param(p, x));
    CHECK(t.scalar_value(y) == 1.0);
    p.value(x)[0] = 3;
    t.replay();
    CHECK(t.scalar_value(y) == 9.0);
  }
}

TEST_SUITE("params") {
  TEST_CASE("init is seeded and bounded") {
    CHECK(init_params(4, 3, 7) == init_params(4, 3, 7));
    CHECK_FALSE(init_params(4, 3, 7) == init_params(4, 3, 8));
    const Matrix m = init_params(30, 20, 1);
    const double bound = std::sqrt(6.0 / 50.0);
    for (double v : m.values()) CHECK(std::fabs(v) <= bound);
    const double single = init_params(1, 1, 5)[0];
    CHECK(std::fabs(single) <= std::sqrt(3.0));
  }

  TEST_CASE("derived seeds differ by stream") {
    CHECK(derive_seed(1, "a") != derive_seed(1, "b"));
    CHECK(derive_seed(1, "a") == derive_seed(1, "a"));
    Rng r(3);
    for (int i = 0; i < 1000; ++i) {
      const double u = r.uniform();
      CHECK((u >= 0.0 && u < 1.0));
      CHECK(r.below(7) < 7u);
    }
  }

  TEST_CASE("store lookup") {
    ParamStore p;
    const ParamId a = p.add("a", Matrix(2, 2));
    CHECK(p.id("a") == a);
    CHECK_FALSE(p.find("b").has_value());
    CHECK_THROWS_AS(p.id("b"), Error);
    CHECK(p.scalar_count() == 4);
  }
}

TEST_SUITE("adadelta") {
  TEST_CASE("zero gradient leaves parameters unchanged") {
    ParamStore p;
    p.add("x", Matrix::column({1.5, -2}));
    const ParamStore before = p;
    OptState st(p);
    GradStore g(p);
    adadelta_step(p, g, st);
    CHECK(p == before);
  }

  TEST_CASE("first step with unit gradient") {
    ParamStore p;
    p.add("x", Matrix::column({0}));
    OptState st(p, {0.95, 1e-6});
    GradStore g(p);
    g[0][0] = 1.0;
    adadelta_step(p, g, st);
    const double want = -std::sqrt(1e-6) / std::sqrt(0.05 + 1e-6);
    CHECK(p.value(0)[0] == Approx(want).epsilon(1e-12));
    CHECK(p.value(0)[0] == Approx(-4.4721e-3).epsilon(1e-4));
  }

  TEST_CASE("accumulators stay positive and steps grow under a constant gradient") {
    ParamStore p;
    p.add("x", Matrix::column({0}));
    OptState st(p);
    GradStore g(p);
    g[0][0] = 1.0;
    adadelta_step(p, g, st);
    const double dx1 = p.value(0)[0];
    adadelta_step(p, g, st);
    const double dx2 = p.value(0)[0] - dx1;
    CHECK(std::fabs(dx2) > std::fabs(dx1));
    CHECK(st.mean_sq_grad[0][0] > 0);
    CHECK(st.mean_sq_delta[0][0] > 0);
    CHECK(st.steps == 2);
  }

  TEST_CASE("shape mismatch") {
    ParamStore p, q;
    p.add("x", Matrix(2, 1));
    q.add("x", Matrix(3, 1));
    OptState st(p);
    GradStore g(q);
    CHECK_THROWS_AS(adadelta_step(p, g, st), Error);
  }
}
