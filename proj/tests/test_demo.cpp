#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "alab/demo.hpp"

using namespace alab;

namespace {

std::string temp_path(const std::string& name) {
  return (std::filesystem::temp_directory_path() / ("alab_test_" + name)).string();
}

}  // namespace

TEST_CASE("puddle expert follows the larger gap") {
  const TaskConfig t = TaskConfig::puddle(Corner::TR);
  CHECK(expert_action(t, Eigen::Vector2d(0.2, 0.9)) == puddle::kRight);
  CHECK(expert_action(t, Eigen::Vector2d(0.9, 0.2)) == puddle::kUp);
  CHECK(expert_action(t, Eigen::Vector2d(0.8, 0.8)) == puddle::kRight);
  CHECK(expert_action(TaskConfig::puddle(Corner::BL), Eigen::Vector2d(0.9, 0.95)) == puddle::kDown);
}

TEST_CASE("puddle expert deflects around a puddle") {
  TaskConfig t = TaskConfig::puddle(Corner::TR);
  t.puddle_rects = {Rect{0.5, 0.0, 0.6, 0.5}};
  CHECK(expert_action(t, Eigen::Vector2d(0.4, 0.2)) == puddle::kUp);
}

TEST_CASE("cart pole expert sign rule") {
  const TaskConfig t = TaskConfig::cart_pole();
  State s = State::Zero(4);
  s(2) = 0.1;
  CHECK(expert_action(t, s) == cartpole::kRight);
  s(2) = -0.1;
  CHECK(expert_action(t, s) == cartpole::kLeft);
  s(2) = 0.1;
  s(3) = -0.3;
  CHECK(expert_action(t, s) == cartpole::kLeft);
}

TEST_CASE("noise-free puddle expert reaches every corner") {
  for (TaskConfig t : task_family(TaskConfig::puddle())) {
    t.noise_std = 0;
    Rng rng(0);
    State s = reset(t, rng);
    bool reached = false;
    for (int i = 0; i < t.horizon && !reached; ++i) {
      const Transition tr = step(t, s, expert_action(t, s), rng);
      reached = tr.terminal && tr.reward > 0;
      s = tr.next_state;
    }
    CHECK_MESSAGE(reached, to_string(t.goal_corner));
  }
}

TEST_CASE("cart pole expert balances from most resets") {
  const TaskConfig t = TaskConfig::cart_pole();
  int balanced = 0;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    Rng rng(seed);
    State s = reset(t, rng);
    int steps = 0;
    for (; steps < t.horizon; ++steps) {
      const Transition tr = step(t, s, expert_action(t, s), rng);
      if (tr.terminal) break;
      s = tr.next_state;
    }
    balanced += steps >= t.horizon ? 1 : 0;
  }
  CHECK(balanced >= 95);
}

TEST_CASE("uniform dataset sizes and task ids") {
  Rng rng(1);
  const Dataset one = collect_dataset({TaskConfig::puddle()}, 4000, Sampler::UniformState, rng);
  CHECK(one.size() == 4000);
  for (const Quadruple& q : one.quadruples) CHECK(q.task_id == 0);

  const auto family = task_family(TaskConfig::puddle());
  const Dataset three = collect_dataset({family[0], family[1], family[2]}, 4000,
                                        Sampler::UniformState, rng);
  CHECK(three.size() == 12000);
  CHECK(three.num_tasks == 3);
  int counts[3] = {0, 0, 0};
  for (const Quadruple& q : three.quadruples) ++counts[q.task_id];
  CHECK(counts[0] == 4000);
  CHECK(counts[2] == 4000);
}

TEST_CASE("uniform sampler has centred marginals") {
  Rng rng(2);
  Eigen::Vector2d mean = Eigen::Vector2d::Zero();
  for (int i = 0; i < 10000; ++i) mean += sample_uniform_state(EnvKind::PuddleWorld, rng);
  mean /= 10000.0;
  CHECK(std::abs(mean(0) - 0.5) < 0.02);
  CHECK(std::abs(mean(1) - 0.5) < 0.02);
}

TEST_CASE("on-policy cart pole quadruples are labelled by the expert") {
  Rng rng(3);
  const TaskConfig t = TaskConfig::cart_pole();
  const Dataset d = collect_dataset({t}, 1000, Sampler::OnPolicy, rng);
  REQUIRE(d.size() == 1000);
  CHECK(d.env_kind == EnvKind::CartPole);
  for (const Quadruple& q : d.quadruples) {
    CHECK(q.action == expert_action(t, q.state));
    CHECK(std::abs(q.state(2)) < cartpole::kAngleLimit);
  }
}

TEST_CASE("collection rejects bad arguments") {
  Rng rng(0);
  CHECK_THROWS(collect_dataset({}, 10, Sampler::UniformState, rng));
  CHECK_THROWS(collect_dataset({TaskConfig::puddle()}, 0, Sampler::UniformState, rng));
}

TEST_CASE("dataset file round-trip") {
  Rng rng(4);
  const Dataset d = collect_dataset({TaskConfig::cart_pole()}, 50, Sampler::OnPolicy, rng);
  const std::string path = temp_path("roundtrip.jsonl");
  save_dataset(d, path);
  CHECK(load_dataset(path) == d);
  std::remove(path.c_str());
}

TEST_CASE("dataset file validation") {
  const std::string path = temp_path("bad.jsonl");
  {
    std::ofstream(path) << "";
  }
  CHECK_THROWS_WITH_AS(load_dataset(path), doctest::Contains("empty"), ParseError);
  {
    std::ofstream(path) << "{\"env\":\"puddle\",\"k\":1,\"dim\":2}\n"
                        << "{\"s\":[0.1,0.2,0.3],\"a\":0,\"r\":0,\"sp\":[0.1,0.2],\"task\":0}\n";
  }
  CHECK_THROWS_AS(load_dataset(path), DimensionMismatch);
  {
    std::ofstream(path) << "{\"env\":\"puddle\",\"k\":1,\"dim\":2}\n"
                        << "{\"s\":[0.1,0.2],\"a\":0,\"r\":0,\"sp\":[0.1,0.2],\"task\":0}\n"
                        << "not json\n";
  }
  try {
    load_dataset(path);
    FAIL("expected a parse error");
  } catch (const ParseError& e) {
    CHECK(e.line() == 3);
  }
  std::remove(path.c_str());
}
