#include <doctest.h>

#include "alab/net.hpp"

using namespace alab;

namespace {

Mlp<double> tiny() {
  const int widths[] = {1, 2, 2};
  Mlp<double> p = Mlp<double>::zeros(widths);
  p.weights[0] << 1, -1;
  p.biases[0] << 0, 0.5;
  p.weights[1] << 1, 2, 0, -1;
  p.biases[1] << 0.1, -0.1;
  return p;
}

LikelihoodBatch<double> random_batch(int dim, int outputs, int n, Rng& rng) {
  std::uniform_real_distribution<double> u(-1, 1), w(0, 1);
  LikelihoodBatch<double> b;
  b.states = MatrixX<double>::NullaryExpr(dim, n, [&] { return u(rng); });
  b.cluster_weights = MatrixX<double>::NullaryExpr(outputs, n, [&] { return w(rng); });
  return b;
}

}  // namespace

TEST_CASE("hand-computed forward pass") {
  VectorX<double> x(1);
  x << 0.3;
  const VectorX<double> p = forward(tiny(), x);
  CHECK(p(0) == doctest::Approx(0.7502601055951177).epsilon(1e-14));
  CHECK(p(1) == doctest::Approx(0.2497398944048824).epsilon(1e-14));
  CHECK(forward_batch(tiny(), MatrixX<double>(x)).probs.col(0).isApprox(p, 1e-15));
}

TEST_CASE("zero network is uniform") {
  const int widths[] = {2, 8, 5};
  const VectorX<double> p = forward(Mlp<double>::zeros(widths), VectorX<double>(VectorX<double>::Ones(2)));
  CHECK((p.array() - 0.2).abs().maxCoeff() < 1e-15);
}

TEST_CASE("softmax sums to one on extreme inputs") {
  Rng rng(11);
  std::normal_distribution<double> n(0, 1);
  std::uniform_real_distribution<double> scale(-3, 3);
  double worst = 0;
  for (int i = 0; i < 10000; ++i) {
    const double s = std::pow(10.0, scale(rng));
    const VectorX<double> z = VectorX<double>::NullaryExpr(1 + i % 16, [&] { return s * n(rng); });
    const MatrixX<double> p = softmax_columns(z);
    REQUIRE(p.allFinite());
    CHECK(p.minCoeff() >= 0);
    worst = std::max(worst, std::abs(p.sum() - 1.0));
  }
  CHECK(worst <= 1e-9);
}

TEST_CASE("dimension mismatch is reported") {
  const int widths[] = {2, 4, 3};
  const Mlp<double> p = Mlp<double>::zeros(widths);
  CHECK_THROWS_AS(forward(p, VectorX<double>(VectorX<double>::Zero(3))), DimensionMismatch);
  LikelihoodBatch<double> b{MatrixX<double>::Zero(2, 4), MatrixX<double>::Zero(2, 4)};
  CHECK_THROWS_AS(nll_loss(p, b), DimensionMismatch);
  b.states.resize(2, 0);
  b.cluster_weights.resize(3, 0);
  CHECK_THROWS_AS(nll_loss(p, b), std::invalid_argument);
}

TEST_CASE("flatten and unflatten are inverse") {
  Rng rng(1);
  const int widths[] = {3, 5, 4};
  const Mlp<double> p = Mlp<double>::glorot(widths, rng);
  CHECK(p.parameter_count() == 3 * 5 + 5 + 5 * 4 + 4);
  Mlp<double> q = p.zeros_like();
  q.unflatten(p.flatten());
  CHECK(q == p);
  CHECK_THROWS_AS(q.unflatten(VectorX<double>::Zero(3)), DimensionMismatch);
}

TEST_CASE("glorot weights respect the fan limit") {
  Rng rng(2);
  const int widths[] = {2, 64, 64, 16};
  const Mlp<double> p = Mlp<double>::glorot(widths, rng);
  for (const auto& w : p.weights)
    CHECK(w.cwiseAbs().maxCoeff() <= std::sqrt(6.0 / static_cast<double>(w.rows() + w.cols())));
  for (const auto& b : p.biases) CHECK(b.isZero());
}

TEST_CASE("nll of a uniform network") {
  const int widths[] = {2, 4};
  LikelihoodBatch<double> b{MatrixX<double>::Zero(2, 1), MatrixX<double>::Zero(4, 1)};
  b.cluster_weights(0, 0) = 1;
  b.cluster_weights(1, 0) = 1;
  CHECK(nll_loss(Mlp<double>::zeros(widths), b) == doctest::Approx(std::log(2.0)).epsilon(1e-15));
}

TEST_CASE("nll floor is counted") {
  const int widths[] = {1, 2};
  LikelihoodBatch<double> b{MatrixX<double>::Zero(1, 3), MatrixX<double>::Zero(2, 3)};
  int hits = 0;
  const double loss = nll_loss(Mlp<double>::zeros(widths), b, &hits);
  CHECK(hits == 3);
  CHECK(loss == doctest::Approx(-std::log(kLogFloor)));
  CHECK(nll_and_grad(Mlp<double>::zeros(widths), b).floor_hits == 3);
}

TEST_CASE("analytic gradient matches central differences on random draws") {
  Rng rng(20240);
  double worst = 0;
  for (int draw = 0; draw < 20; ++draw) {
    const int dim = 1 + draw % 4, outputs = 2 + draw % 5;
    const int widths[] = {dim, 6, 5, outputs};
    const Mlp<double> p = Mlp<double>::glorot(widths, rng);
    Mlp<double> q = p;
    for (auto& b : q.biases) b = VectorX<double>::Constant(b.size(), 0.05);
    const LikelihoodBatch<double> batch = random_batch(dim, outputs, 8, rng);
    worst = std::max(worst, finite_diff_check(q, batch));
  }
  CHECK(worst < 1e-4);
}

TEST_CASE("gradient check rejects a wrong gradient") {
  Rng rng(3);
  const int widths[] = {2, 4, 3};
  const Mlp<double> p = Mlp<double>::glorot(widths, rng);
  const LikelihoodBatch<double> batch = random_batch(2, 3, 5, rng);
  Mlp<double> wrong = nll_and_grad(p, batch).grad;
  wrong.weights[0](0, 0) += 0.1;
  CHECK(gradient_error(p, batch, wrong, 1e-5) > 1e-3);
  CHECK_THROWS(gradient_error(p, batch, wrong, 0.0));
}

TEST_CASE("adam first step moves every parameter by lr") {
  const Mlp<double> p = tiny();
  Mlp<double> grad = p.zeros_like();
  grad.unflatten(VectorX<double>::LinSpaced(p.parameter_count(), -1, 1).array() + 0.05);
  Mlp<double> q = p;
  AdamState<double> st = AdamState<double>::for_params(q);
  adam_step(q, st, grad);
  const VectorX<double> moved = p.flatten() - q.flatten();
  const VectorX<double> g = grad.flatten();
  for (Eigen::Index i = 0; i < g.size(); ++i)
    CHECK(moved(i) == doctest::Approx(1e-3 * (g(i) > 0 ? 1 : -1)).epsilon(1e-6));
  CHECK(st.t == 1);
}

TEST_CASE("adam reduces the loss on a separable problem") {
  Rng rng(4);
  const int widths[] = {1, 8, 2};
  Mlp<double> p = Mlp<double>::glorot(widths, rng);
  LikelihoodBatch<double> b{MatrixX<double>(1, 40), MatrixX<double>::Zero(2, 40)};
  for (int j = 0; j < 40; ++j) {
    b.states(0, j) = -1 + 2.0 * j / 39.0;
    b.cluster_weights(b.states(0, j) > 0 ? 0 : 1, j) = 1;
  }
  const double before = nll_loss(p, b);
  AdamState<double> st = AdamState<double>::for_params(p);
  AdamConfig cfg;
  cfg.lr = 1e-2;
  for (int i = 0; i < 500; ++i) adam_step(p, st, nll_and_grad(p, b).grad, cfg);
  CHECK(nll_loss(p, b) < 0.2 * before);
  CHECK(p.all_finite());
}

TEST_CASE("float and long double instantiations agree with double") {
  VectorX<double> x(1);
  x << 0.3;
  const VectorX<float> pf = forward(tiny().cast<float>(), VectorX<float>(x.cast<float>()));
  const VectorX<long double> pl = forward(tiny().cast<long double>(), VectorX<long double>(x.cast<long double>()));
  CHECK(pf(0) == doctest::Approx(0.7502601055951177).epsilon(1e-6));
  CHECK(static_cast<double>(pl(0)) == doctest::Approx(0.7502601055951177).epsilon(1e-15));
}
