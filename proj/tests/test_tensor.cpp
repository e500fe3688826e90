#include <doctest.h>

#include <cmath>
#include <functional>
#include <vector>

#include "synforge/error.hpp"
#include "synforge/tensor.hpp"

using namespace synforge;
using namespace synforge::nn;

namespace {

using Loss = std::function<Tape::Var(Tape&)>;

// Largest |analytic - numeric| scaled by max(1, |numeric|) over every scalar.
double worst_gradient_error(ParamSet& ps, const Loss& loss) {
  Grads g(ps);
  {
    Tape t(ps);
    t.backward(loss(t), g);
  }
  auto eval = [&] {
    Tape t(ps);
    return t.value(loss(t))(0, 0);
  };
  const double h = 1e-6;
  double worst = 0.0;
  for (int i = 0; i < ps.size(); ++i) {
    Mat& w = ps[i].value;
    for (Eigen::Index k = 0; k < w.size(); ++k) {
      double keep = w.data()[k];
      w.data()[k] = keep + h;
      double fp = eval();
      w.data()[k] = keep - h;
      double fm = eval();
      w.data()[k] = keep;
      double num = (fp - fm) / (2 * h);
      worst = std::max(worst, std::fabs(g[i].data()[k] - num) / std::max(1.0, std::fabs(num)));
    }
  }
  return worst;
}

ParamSet small_params() {
  ParamSet ps;
  ps.add("E", 5, 3, Init::glorot);
  ps.add("W", 4, 3, Init::glorot);
  ps.add("b", 4, 1, Init::zeros);
  ps.add("lstm_w", 16, 3 + 4, Init::recurrent);
  ps.add("lstm_b", 16, 1, Init::zeros);
  ps.add("K", 4, 6, Init::glorot);
  ps.initialize(11);
  Rng rng(5);
  for (int i = 0; i < ps.size(); ++i) {
    for (Eigen::Index k = 0; k < ps[i].value.size(); ++k) ps[i].value.data()[k] += rng.uniform(-0.3, 0.3);
  }
  return ps;
}

}  // namespace

TEST_CASE("initialization schemes") {
  ParamSet ps;
  ps.add("emb", 50, 20, Init::glorot);
  ps.add("rec", 40, 30, Init::recurrent);
  ps.add("bias", 7, 1, Init::zeros);
  CHECK(ps.scalar_count() == 50 * 20 + 40 * 30 + 7);
  ps.initialize(3);
  const double limit = std::sqrt(6.0 / 70.0);
  CHECK(ps[0].value.cwiseAbs().maxCoeff() <= limit);
  CHECK(ps[0].value.cwiseAbs().maxCoeff() > 0.5 * limit);
  CHECK(ps[1].value.cwiseAbs().maxCoeff() <= 0.08);
  CHECK(ps[2].value.isZero());
  CHECK(ps.id("rec") == 1);
  CHECK_THROWS(ps.id("nope"));
  ParamSet again;
  again.add("emb", 50, 20, Init::glorot);
  again.add("rec", 40, 30, Init::recurrent);
  again.add("bias", 7, 1, Init::zeros);
  again.initialize(3);
  CHECK(again[1].value == ps[1].value);
}

TEST_CASE("softmax helpers") {
  Vec s(3);
  s << 1000.0, 1001.0, 999.0;
  Vec p = softmax(s);
  CHECK(p.sum() == doctest::Approx(1.0));
  CHECK(p(1) > p(0));
  Vec lp = log_softmax(s);
  CHECK(std::exp(lp(2)) == doctest::Approx(p(2)));
  std::vector<double> xs{std::log(0.25), std::log(0.75)};
  CHECK(logsumexp(xs) == doctest::Approx(0.0));
  Mat m(2, 2);
  m << 0.0, 5.0, 0.0, 5.0;
  Mat c = log_softmax_cols(m);
  CHECK(c(0, 0) == doctest::Approx(std::log(0.5)));
  CHECK(c(1, 1) == doctest::Approx(std::log(0.5)));
}

TEST_CASE("feed-forward gradients") {
  auto ps = small_params();
  Loss loss = [&](Tape& t) {
    auto x = t.row(ps.id("E"), 2);
    auto h = t.tanh(t.add_bias(t.matmul(ps.id("W"), x), ps.id("b")));
    auto s = t.sigmoid(t.matmul(ps.id("W"), t.slice(t.col(ps.id("E"), 1), 0, 3)));
    auto z = t.add(t.mul(h, s), t.mul_const(h, Mat::Constant(4, 1, 0.5)));
    return t.neg(t.pick(t.log_softmax(z), 1));
  };
  CHECK(worst_gradient_error(ps, loss) < 1e-6);
}

TEST_CASE("recurrent gradients") {
  auto ps = small_params();
  Loss loss = [&](Tape& t) {
    auto h = t.input(Mat::Zero(4, 1));
    auto c = t.input(Mat::Zero(4, 1));
    std::vector<Tape::Var> outs;
    for (int r : {0, 3, 1}) {
      auto hc = t.lstm(ps.id("lstm_w"), ps.id("lstm_b"), t.row(ps.id("E"), r), h, c);
      h = t.slice(hc, 0, 4);
      c = t.slice(hc, 4, 4);
      outs.push_back(t.pick(h, r));
    }
    outs.push_back(t.pick(t.concat({h, c}), 6));
    return t.sum(outs);
  };
  CHECK(worst_gradient_error(ps, loss) < 1e-6);
}

TEST_CASE("attention-shaped gradients") {
  auto ps = small_params();
  Loss loss = [&](Tape& t) {
    std::vector<Tape::Var> cols;
    for (int r = 0; r < 5; ++r) cols.push_back(t.row(ps.id("E"), r));
    auto keys = t.hcat(cols);  // 3 x 5
    auto q = t.tanh(t.matmul(ps.id("K"), t.concat({t.row(ps.id("E"), 0), t.row(ps.id("E"), 4)})));
    auto scores = t.transpose_product(keys, t.slice(q, 0, 3));
    auto a = t.softmax(scores);
    auto ctx = t.product(keys, a);
    std::vector<Tape::Var> routes{t.pick(t.log_softmax(scores), 2), t.pick(ctx, 1), t.pick(a, 4)};
    return t.neg(t.logsumexp(routes));
  };
  CHECK(worst_gradient_error(ps, loss) < 1e-6);
}

TEST_CASE("tape LSTM matches the batched step") {
  auto ps = small_params();
  Tape t(ps);
  Mat x = ps[ps.id("E")].value.row(3).transpose();
  Mat h0 = Mat::Constant(4, 1, 0.1), c0 = Mat::Constant(4, 1, -0.2);
  auto hc = t.value(t.lstm(ps.id("lstm_w"), ps.id("lstm_b"), t.input(x), t.input(h0), t.input(c0)));
  Mat xs(3, 2);
  xs << x, x;
  Mat hs(4, 2), cs(4, 2);
  hs << h0, h0;
  cs << c0, c0;
  auto next = lstm_step(ps[ps.id("lstm_w")].value, ps[ps.id("lstm_b")].value.col(0), xs, {hs, cs});
  CHECK((next.h.col(1) - hc.topRows(4)).cwiseAbs().maxCoeff() < 1e-12);
  CHECK((next.c.col(0) - hc.bottomRows(4)).cwiseAbs().maxCoeff() < 1e-12);
  CHECK_THROWS_AS(lstm_step(ps[ps.id("lstm_w")].value, ps[ps.id("lstm_b")].value.col(0), Mat::Zero(2, 1),
                            {Mat::Zero(4, 1), Mat::Zero(4, 1)}),
                  ModelError);
}

TEST_CASE("backward scales and accumulates") {
  auto ps = small_params();
  Grads once(ps), twice(ps);
  for (int k = 0; k < 2; ++k) {
    Tape t(ps);
    auto v = t.pick(t.matmul(ps.id("W"), t.row(ps.id("E"), 0)), 2);
    if (k == 0) {
      t.backward(v, once, 2.0);
    } else {
      t.backward(v, twice);
      Tape u(ps);
      u.backward(u.pick(u.matmul(ps.id("W"), u.row(ps.id("E"), 0)), 2), twice);
    }
  }
  for (int i = 0; i < ps.size(); ++i) CHECK((once[i] - twice[i]).cwiseAbs().maxCoeff() < 1e-15);
}

TEST_CASE("dropout masks") {
  Rng rng(9);
  Mat m = dropout_mask(200, 50, 0.3, rng);
  double zeros = (m.array() == 0.0).count();
  CHECK(zeros / m.size() == doctest::Approx(0.3).epsilon(0.1));
  CHECK(m.maxCoeff() == doctest::Approx(1.0 / 0.7));
  Mat x = Mat::Ones(3, 3);
  CHECK(dropout(x, 0.3, false, rng) == x);
  CHECK(dropout(x, 0.0, true, rng) == x);
  CHECK_THROWS_AS(dropout_mask(2, 2, 1.0, rng), ModelError);
}

TEST_CASE("rng is reproducible") {
  Rng a(42), b(42);
  for (int i = 0; i < 10; ++i) CHECK(a.next() == b.next());
  Rng c(1);
  for (int i = 0; i < 1000; ++i) {
    double u = c.uniform();
    CHECK(u >= 0.0);
    CHECK(u < 1.0);
    CHECK(c.below(7) < 7);
  }
}

TEST_CASE("adam moves against the gradient") {
  ParamSet ps;
  ps.add("w", 2, 1, Init::zeros);
  Grads g(ps);
  g[0] << 3.0, -0.5;
  Adam adam(ps, 0.1);
  adam.step(ps, g);
  // First step is lr * sign(g) up to epsilon.
  CHECK(ps[0].value(0, 0) == doctest::Approx(-0.1));
  CHECK(ps[0].value(1, 0) == doctest::Approx(0.1));
  CHECK(adam.steps() == 1);
  adam.set_lr(0.0);
  Mat before = ps[0].value;
  adam.step(ps, g);
  CHECK(ps[0].value == before);
}

TEST_CASE("global norm clipping") {
  ParamSet ps;
  ps.add("a", 1, 1, Init::zeros);
  ps.add("b", 1, 1, Init::zeros);
  Grads g(ps);
  g[0](0, 0) = 3.0;
  g[1](0, 0) = 4.0;
  CHECK(clip_global_norm(g, 10.0) == doctest::Approx(5.0));
  CHECK(g[0](0, 0) == 3.0);
  CHECK(clip_global_norm(g, 1.0) == doctest::Approx(5.0));
  CHECK(g.norm() == doctest::Approx(1.0));
  CHECK(g[1](0, 0) == doctest::Approx(0.8));
  g.zero();
  CHECK(g.norm() == 0.0);
}
