#ifndef ALAB_DEMO_HPP_
#define ALAB_DEMO_HPP_

#include <string>
#include <vector>

#include "alab/envs.hpp"

namespace alab {

// One demonstrator sample (s, a, r, s') tagged with its training task.
struct Quadruple {
  State state;
  ActionId action;
  double reward = 0;
  State next_state;
  int task_id = 0;
};

struct Dataset {
  std::vector<Quadruple> quadruples;
  int num_tasks = 1;
  EnvKind env_kind = EnvKind::PuddleWorld;

  std::size_t size() const { return quadruples.size(); }
  bool empty() const { return quadruples.empty(); }
};

bool operator==(const Dataset& a, const Dataset& b);

enum class Sampler { UniformState, OnPolicy };

// Cart Pole controller gain on angular velocity.
inline constexpr double kCartPoleExpertGain = 0.5;

// Scripted demonstrator. Puddle World: step along the axis with the larger
// remaining gap to the goal (ties go to x); if that step would land in a
// puddle, take the first puddle-free alternative among the other axis toward
// the goal, the other axis away from it, and the main axis away from it.
// Cart Pole: push right iff angle + gain * angular_velocity > 0.
ActionId expert_action(const TaskConfig& task, const State& s);

// task_id of each quadruple is the index of its task in `tasks`.
Dataset collect_dataset(const std::vector<TaskConfig>& tasks, int n_per_task, Sampler sampler,
                        Rng& rng);

State sample_uniform_state(EnvKind kind, Rng& rng);

// JSON-lines: a header {"env","k","dim"} then one {"s","a","r","sp","task"}
// object per quadruple.
void save_dataset(const Dataset& d, const std::string& path);
Dataset load_dataset(const std::string& path);

}  // namespace alab

#endif  // ALAB_DEMO_HPP_
