#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "alab/analysis.hpp"

using namespace alab;

namespace {

std::string temp_path(const std::string& name) {
  return (std::filesystem::temp_directory_path() / ("alab_test_" + name)).string();
}

Eigen::VectorXd random_simplex(int n, Rng& rng) {
  std::exponential_distribution<double> e(1.0);
  Eigen::VectorXd p = Eigen::VectorXd::NullaryExpr(n, [&] { return e(rng); });
  return p / p.sum();
}

const GridMdp& grid20() {
  static const GridMdp g = solve_grid_mdp(TaskConfig::puddle(), 20);
  return g;
}

const AbstractionModel& trained_model() {
  static const AbstractionModel m = [] {
    Rng rng(31);
    const Dataset d = collect_dataset({TaskConfig::puddle()}, 2000, Sampler::UniformState, rng);
    TrainConfig cfg;
    cfg.epochs = 40;
    return train(d, build_policy_table(4, 1, PolicyMode::ActionTuple, {}, rng), cfg, rng);
  }();
  return m;
}

}  // namespace

TEST_CASE("kl oracles") {
  CHECK(kl_point(Eigen::Vector2d(1, 0), Eigen::Vector2d(0.5, 0.5)) ==
        doctest::Approx(0.6931471805599453).epsilon(1e-15));
  CHECK(kl_point(Eigen::Vector2d(0.5, 0.5), Eigen::Vector2d(0.25, 0.75)) ==
        doctest::Approx(0.14384103622589042).epsilon(1e-14));
  CHECK(kl_point(Eigen::Vector2d(0.3, 0.7), Eigen::Vector2d(0.3, 0.7)) == 0.0);
  int hits = 0;
  const double big = kl_point(Eigen::Vector2d(1, 0), Eigen::Vector2d(0, 1), &hits);
  CHECK(hits == 1);
  CHECK(big == doctest::Approx(-std::log(kLogFloor)));
}

TEST_CASE("pinsker holds pointwise on random distributions") {
  Rng rng(17);
  for (int i = 0; i < 10000; ++i) {
    const int n = 2 + i % 7;
    const Eigen::VectorXd p = random_simplex(n, rng), q = random_simplex(n, rng);
    const double kl = kl_point(p, q);
    CHECK(kl >= -1e-15);
    CHECK((p - q).lpNorm<1>() <= std::sqrt(2 * kl) + 1e-12);
  }
}

TEST_CASE("measured delta of the trained abstraction") {
  Rng rng(18);
  std::vector<State> states;
  for (int i = 0; i < 500; ++i) states.push_back(sample_uniform_state(EnvKind::PuddleWorld, rng));
  const DeltaMeasurement d =
      measure_delta(trained_model(), point_mass_expert(TaskConfig::puddle()), states, 0);
  CHECK(d.records.size() == 500);
  CHECK(d.pinsker_holds);
  CHECK(d.mean_l1 <= d.delta + 1e-12);
  for (const StateRecord& r : d.records) CHECK(r.pinsker_slack >= -1e-9);

  const PolicyFn expert = point_mass_expert(TaskConfig::puddle());
  const DeltaMeasurement self = measure_delta(expert, expert, states);
  CHECK(self.delta == 0.0);
  CHECK(self.mean_l1 == 0.0);
}

TEST_CASE("grid geometry") {
  const GridMdp& g = grid20();
  CHECK(g.num_cells() == 400);
  CHECK(g.cell_center(0).isApprox(Eigen::Vector2d(0.025, 0.025)));
  CHECK(g.cell_center(21).isApprox(Eigen::Vector2d(0.075, 0.075)));
  for (int c = 0; c < g.num_cells(); ++c) CHECK(g.cell_of(g.cell_center(c)) == c);
  CHECK(g.cell_of(Eigen::Vector2d(1.0, 1.0)) == 399);
  CHECK(g.cell_of(Eigen::Vector2d(0.25, 0.6)) == 12 * 20 + 5);
}

TEST_CASE("optimal grid values") {
  const GridMdp& g = grid20();
  CHECK(g.v_star(12 * 20 + 5) == doctest::Approx(0.8179069375972307).epsilon(1e-9));
  CHECK(g.v_star(19 * 20 + 18) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(g.absorbing[399]);
  CHECK(g.v_star(399) == 0.0);
  CHECK(g.residuals.back() < 1e-10);
  for (std::size_t i = 1; i < g.residuals.size(); ++i)
    CHECK(g.residuals[i] <= g.residuals[i - 1] + 1e-15);
}

TEST_CASE("greedy policy evaluates to the optimal values") {
  const GridMdp& g = grid20();
  const Eigen::VectorXd v = g.evaluate(deterministic_policy_table(g, g.greedy));
  CHECK((v - g.v_star).cwiseAbs().maxCoeff() < 1e-8);
}

TEST_CASE("direct and iterative policy evaluation agree") {
  const GridMdp& g = grid20();
  const Eigen::MatrixXd u = uniform_policy_table(g);
  CHECK((g.evaluate(u) - g.evaluate_iterative(u, 1e-12)).cwiseAbs().maxCoeff() < 1e-8);
  const Eigen::MatrixXd e = g.tabulate(point_mass_expert(g.task));
  CHECK((g.evaluate(e) - g.evaluate_iterative(e, 1e-12)).cwiseAbs().maxCoeff() < 1e-8);
  CHECK((g.evaluate(u).array() <= g.v_star.array() + 1e-9).all());
}

TEST_CASE("value lemma on grid fixtures") {
  const GridMdp& g = grid20();
  const Eigen::VectorXd p = uniform_state_distribution(g);
  CHECK(p.sum() == doctest::Approx(1.0));
  const Eigen::MatrixXd opt = deterministic_policy_table(g, g.greedy);
  const Eigen::MatrixXd expert = g.tabulate(point_mass_expert(g.task));
  const Eigen::MatrixXd uniform = uniform_policy_table(g);
  Eigen::VectorXi worst(g.num_cells());
  for (int c = 0; c < g.num_cells(); ++c) {
    Eigen::Index a = 0;
    (opt.row(c) * -1.0).maxCoeff(&a);
    worst(c) = (static_cast<int>(a) + 1) % g.num_actions();
  }
  const Eigen::MatrixXd anti = deterministic_policy_table(g, worst);

  SUBCASE("identical policies") {
    const Lemma1Check c = verify_lemma1(g, expert, expert, p);
    CHECK(c.k == 0.0);
    CHECK(c.measured_value_gap == 0.0);
    CHECK(c.holds);
  }
  SUBCASE("expert against uniform") {
    const Lemma1Check c = verify_lemma1(g, expert, uniform, p);
    CHECK(c.k == doctest::Approx(1.5));
    CHECK(c.lemma_bound == doctest::Approx(150.0));
    CHECK(c.holds);
  }
  SUBCASE("optimal against anti-optimal") {
    const Lemma1Check c = verify_lemma1(g, opt, anti, p);
    CHECK(c.measured_value_gap > 0);
    CHECK(c.holds);
  }
  SUBCASE("optimal against expert") {
    CHECK(verify_lemma1(g, opt, expert, p).holds);
  }
  SUBCASE("trained abstraction") {
    const Lemma1Check c = verify_lemma1(trained_model(), point_mass_expert(g.task), g, p);
    CHECK(c.k > 0);
    CHECK(c.holds);
  }
}

TEST_CASE("monte carlo value agrees with the grid on the noise-free expert") {
  const GridMdp& g = grid20();
  TaskConfig t = g.task;
  t.noise_std = 0;
  Rng rng(19);
  const PolicyFn expert = point_mass_expert(t);
  const State start = g.cell_center(g.cell_of(Eigen::Vector2d(0.25, 0.6)));
  const MonteCarloValue mc = monte_carlo_value(t, expert, start, 20, 0.99, rng);
  CHECK(mc.std_error < 1e-12);
  const Eigen::VectorXd v = g.evaluate(g.tabulate(expert));
  CHECK(mc.mean == doctest::Approx(v(g.cell_of(start))).epsilon(1e-9));
}

TEST_CASE("rademacher estimate") {
  Rng rng(20);
  Eigen::MatrixXd states = Eigen::MatrixXd::Random(2, 50);
  RademacherConfig frozen;
  frozen.frozen_zero = true;
  const RademacherEstimate zero = empirical_rademacher(frozen, states, 4, 5, rng);
  CHECK(zero.draws.size() == 5);
  for (const RademacherDraw& d : zero.draws) {
    CHECK(d.sigma.cwiseAbs().minCoeff() == 1.0);
    CHECK(d.fit == doctest::Approx(d.sigma.sum() / (50.0 * 4.0)).epsilon(1e-12));
  }
  RademacherConfig fit;
  fit.hidden = {16};
  fit.steps = 100;
  fit.restarts = 1;
  Rng a(21), b(21);
  const RademacherEstimate est = empirical_rademacher(fit, states, 4, 3, a);
  CHECK(est.estimate > 0);
  CHECK(est.estimate <= 1.0);
  CHECK(est.estimate == empirical_rademacher(fit, states, 4, 3, b).estimate);
}

TEST_CASE("theorem bound oracle and monotonicity") {
  const TheoremBound b = theorem_bound(0.2, 0.1, 100, 0.05);
  CHECK(b.stated == doctest::Approx(0.6276173955427007).epsilon(1e-14));
  CHECK(b.pinsker == doctest::Approx(0.6276173955427007 + 0.1).epsilon(1e-14));
  double prev = 0;
  for (double d : {0.0, 0.1, 0.5, 1.0, 2.0}) {
    const double v = theorem_bound(d, 0.1, 100, 0.05).stated;
    CHECK(v >= prev);
    prev = v;
  }
  prev = 0;
  for (double r : {0.0, 0.01, 0.1, 0.3}) {
    const double v = theorem_bound(0.2, r, 100, 0.05).stated;
    CHECK(v >= prev);
    prev = v;
  }
  prev = 1e9;
  for (long long n : {1LL, 10LL, 100LL, 4000LL, 100000LL}) {
    const double v = theorem_bound(0.2, 0.1, n, 0.05).stated;
    CHECK(v <= prev);
    prev = v;
  }
  prev = 1e9;
  for (double d : {0.001, 0.01, 0.05, 0.5, 0.99}) {
    const double v = theorem_bound(0.2, 0.1, 100, d).stated;
    CHECK(v <= prev);
    prev = v;
  }
  CHECK_THROWS(theorem_bound(0.2, 0.1, 0, 0.05));
  CHECK_THROWS(theorem_bound(0.2, 0.1, 10, 0.0));
  CHECK_THROWS(theorem_bound(0.2, 0.1, 10, 1.0));
}

TEST_CASE("report files") {
  BoundReport r;
  r.delta = 0.125;
  r.lemma_holds = true;
  const std::string path = temp_path("report.txt");
  write_report(r, path);
  const KeyValues kv = KeyValues::load(path);
  CHECK(kv.get_double("delta", -1) == 0.125);
  CHECK(kv.has("theorem_bound"));
  const std::string csv = temp_path("records.csv");
  write_state_records({{0.5, 0.2, 0.8}}, csv);
  std::ifstream in(csv);
  std::string header;
  std::getline(in, header);
  CHECK(header == "kl,l1,pinsker_slack");
  std::remove(path.c_str());
  std::remove(csv.c_str());
}
