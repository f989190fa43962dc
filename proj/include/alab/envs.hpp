#ifndef ALAB_ENVS_HPP_
#define ALAB_ENVS_HPP_

#include <string>
#include <vector>

#include "alab/config.hpp"
#include "alab/core.hpp"

namespace alab {

enum class EnvKind { PuddleWorld, CartPole };
enum class Corner { BL, BR, TL, TR };

// Puddle World actions, in index order.
namespace puddle {
inline constexpr ActionId kUp{0};
inline constexpr ActionId kDown{1};
inline constexpr ActionId kLeft{2};
inline constexpr ActionId kRight{3};
inline constexpr double kStepSize = 0.05;
inline constexpr double kGoalSquaredRadius = 0.0025;
}  // namespace puddle

namespace cartpole {
inline constexpr ActionId kLeft{0};
inline constexpr ActionId kRight{1};
inline constexpr double kCartMass = 1.0;
inline constexpr double kPoleMass = 0.1;
inline constexpr double kHalfPoleLength = 0.5;
inline constexpr double kForce = 10.0;
inline constexpr double kDt = 0.02;
inline constexpr double kTrackLimit = 2.4;
inline constexpr double kAngleLimit = 3.14159265358979323846 / 9.0;
inline constexpr double kFallReward = -10.0;
}  // namespace cartpole

// Axis-aligned rectangle [x0, x1] x [y0, y1], boundaries inclusive.
struct Rect {
  double x0 = 0, y0 = 0, x1 = 0, y1 = 0;
  bool contains(double x, double y) const { return x >= x0 && x <= x1 && y >= y0 && y <= y1; }
  friend bool operator==(const Rect&, const Rect&) = default;
};

std::vector<Rect> default_puddles();

struct TaskConfig {
  EnvKind env_kind = EnvKind::PuddleWorld;
  Corner goal_corner = Corner::TR;
  double gravity = 9.8;
  double noise_std = 0.01;
  std::vector<Rect> puddle_rects = default_puddles();
  int horizon = 500;

  static TaskConfig puddle(Corner goal = Corner::TR);
  static TaskConfig cart_pole(double gravity = 9.8);

  // Throws ConfigError when an invariant is violated.
  void validate() const;
  friend bool operator==(const TaskConfig&, const TaskConfig&) = default;
};

struct Transition {
  State next_state;
  double reward = 0;
  bool terminal = false;
};

struct EnvBounds {
  double rmax = 1;
  double gamma = 0.99;
};

int state_dim(EnvKind kind);
int action_count(EnvKind kind);
EnvBounds env_bounds(EnvKind kind, double gamma = 0.99);

// Box used for uniform state sampling and for fixed input scaling.
struct StateBox {
  Eigen::VectorXd lo, hi;
};
StateBox state_box(EnvKind kind);

Eigen::Vector2d corner_position(Corner c);

State reset(const TaskConfig& task, Rng& rng);
Transition step(const TaskConfig& task, const State& s, ActionId a, Rng& rng);
bool is_goal(const TaskConfig& task, const State& s);

// True when a finished episode counts as solved: the goal was reached in
// Puddle World, or the pole stayed up for the full horizon in Cart Pole.
bool episode_success(const TaskConfig& task, const Transition& last, int steps);

// Puddle: the four goal corners (base's puddles and noise retained).
// Cart Pole: gravities {5, 6, 8, 12}, preceded by the base task when
// include_base is set.
std::vector<TaskConfig> task_family(const TaskConfig& base, bool include_base = false);
std::vector<double> transfer_gravities();

std::string to_string(EnvKind kind);
std::string to_string(Corner c);
EnvKind parse_env_kind(const std::string& s);
Corner parse_corner(const std::string& s);

// Flat key-value form: env_kind, goal_corner, gravity, noise_std, horizon,
// puddle_rects ("x0,y0,x1,y1;x0,y0,x1,y1").
KeyValues to_key_values(const TaskConfig& task);
std::string to_config_text(const TaskConfig& task);
// Missing keys take the per-environment defaults.
TaskConfig task_from_key_values(const KeyValues& kv);

}  // namespace alab

#endif  // ALAB_ENVS_HPP_
