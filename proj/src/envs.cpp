#include "alab/envs.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <sstream>

namespace alab {

namespace {

std::string format_double(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

std::vector<double> split_numbers(const std::string& s, char sep) {
  std::vector<double> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, sep)) {
    try {
      std::size_t pos = 0;
      out.push_back(std::stod(item, &pos));
    } catch (const std::exception&) {
      throw ConfigError("puddle_rects: bad number '" + item + "'");
    }
  }
  return out;
}

void require_action(EnvKind kind, ActionId a) {
  if (a.index < 0 || a.index >= action_count(kind))
    throw std::out_of_range("action index " + std::to_string(a.index) + " out of range for " +
                            to_string(kind));
}

void require_state(EnvKind kind, const State& s) {
  if (s.size() != state_dim(kind))
    throw DimensionMismatch("state has dimension " + std::to_string(s.size()) + ", " +
                            to_string(kind) + " expects " + std::to_string(state_dim(kind)));
}

Transition puddle_step(const TaskConfig& task, const State& s, ActionId a, Rng& rng) {
  Eigen::Vector2d next = s.head<2>();
  switch (a.index) {
    case 0: next.y() += puddle::kStepSize; break;
    case 1: next.y() -= puddle::kStepSize; break;
    case 2: next.x() -= puddle::kStepSize; break;
    default: next.x() += puddle::kStepSize; break;
  }
  if (task.noise_std > 0) {
    std::normal_distribution<double> noise(0.0, task.noise_std);
    next.x() += noise(rng);
    next.y() += noise(rng);
  }
  next = next.cwiseMax(0.0).cwiseMin(1.0);

  Transition t;
  t.next_state = next;
  if (is_goal(task, t.next_state)) {
    t.reward = 1.0;
    t.terminal = true;
    return t;
  }
  for (const Rect& r : task.puddle_rects) {
    if (r.contains(next.x(), next.y())) {
      t.reward = -1.0;
      break;
    }
  }
  return t;
}

// Explicit Euler step of the classic cart-pole equations of motion.
Transition cart_pole_step(const TaskConfig& task, const State& s, ActionId a) {
  using namespace cartpole;
  const double x = s(0), x_dot = s(1), theta = s(2), theta_dot = s(3);
  const double force = a == kRight ? kForce : -kForce;
  const double total_mass = kCartMass + kPoleMass;
  const double polemass_length = kPoleMass * kHalfPoleLength;
  const double cos_t = std::cos(theta), sin_t = std::sin(theta);

  const double temp = (force + polemass_length * theta_dot * theta_dot * sin_t) / total_mass;
  const double theta_acc =
      (task.gravity * sin_t - cos_t * temp) /
      (kHalfPoleLength * (4.0 / 3.0 - kPoleMass * cos_t * cos_t / total_mass));
  const double x_acc = temp - polemass_length * theta_acc * cos_t / total_mass;

  Transition t;
  t.next_state.resize(4);
  t.next_state << x + kDt * x_dot, x_dot + kDt * x_acc, theta + kDt * theta_dot,
      theta_dot + kDt * theta_acc;

  const double next_theta = t.next_state(2);
  if (next_theta > -kAngleLimit && next_theta < kAngleLimit) {
    t.reward = 1.0;
    t.terminal = std::abs(t.next_state(0)) > kTrackLimit;
  } else {
    t.reward = kFallReward;
    t.terminal = true;
  }
  return t;
}

}  // namespace

std::vector<Rect> default_puddles() {
  return {Rect{0.10, 0.65, 0.45, 0.80}, Rect{0.40, 0.10, 0.60, 0.50}};
}

TaskConfig TaskConfig::puddle(Corner goal) {
  TaskConfig t;
  t.goal_corner = goal;
  return t;
}

TaskConfig TaskConfig::cart_pole(double gravity) {
  TaskConfig t;
  t.env_kind = EnvKind::CartPole;
  t.gravity = gravity;
  t.noise_std = 0;
  t.puddle_rects.clear();
  t.horizon = 200;
  return t;
}

void TaskConfig::validate() const {
  if (!(gravity > 0)) throw ConfigError("gravity must be > 0");
  if (!(noise_std >= 0)) throw ConfigError("noise_std must be >= 0");
  if (horizon < 1) throw ConfigError("horizon must be >= 1");
  for (const Rect& r : puddle_rects) {
    const bool inside = r.x0 >= 0 && r.x1 <= 1 && r.y0 >= 0 && r.y1 <= 1;
    if (!inside || r.x0 > r.x1 || r.y0 > r.y1)
      throw ConfigError("puddle rectangle must lie within [0,1]^2 with x0<=x1, y0<=y1");
  }
}

int state_dim(EnvKind kind) { return kind == EnvKind::PuddleWorld ? 2 : 4; }
int action_count(EnvKind kind) { return kind == EnvKind::PuddleWorld ? 4 : 2; }

EnvBounds env_bounds(EnvKind kind, double gamma) {
  return {kind == EnvKind::PuddleWorld ? 1.0 : -cartpole::kFallReward, gamma};
}

StateBox state_box(EnvKind kind) {
  StateBox box;
  if (kind == EnvKind::PuddleWorld) {
    box.lo = Eigen::Vector2d(0, 0);
    box.hi = Eigen::Vector2d(1, 1);
  } else {
    box.lo = Eigen::Vector4d(-cartpole::kTrackLimit, -3.0, -cartpole::kAngleLimit, -3.5);
    box.hi = -box.lo;
  }
  return box;
}

Eigen::Vector2d corner_position(Corner c) {
  switch (c) {
    case Corner::BL: return {0, 0};
    case Corner::BR: return {1, 0};
    case Corner::TL: return {0, 1};
    case Corner::TR: return {1, 1};
  }
  return {1, 1};
}

State reset(const TaskConfig& task, Rng& rng) {
  if (task.env_kind == EnvKind::PuddleWorld) return Eigen::Vector2d(0.25, 0.6);
  std::uniform_real_distribution<double> u(-0.05, 0.05);
  State s(4);
  for (int i = 0; i < 4; ++i) s(i) = u(rng);
  return s;
}

Transition step(const TaskConfig& task, const State& s, ActionId a, Rng& rng) {
  require_action(task.env_kind, a);
  require_state(task.env_kind, s);
  if (task.env_kind == EnvKind::PuddleWorld) return puddle_step(task, s, a, rng);
  return cart_pole_step(task, s, a);
}

bool is_goal(const TaskConfig& task, const State& s) {
  if (task.env_kind != EnvKind::PuddleWorld)
    throw std::invalid_argument("is_goal is defined for Puddle World tasks only");
  require_state(task.env_kind, s);
  return (s.head<2>() - corner_position(task.goal_corner)).squaredNorm() <=
         puddle::kGoalSquaredRadius;
}

bool episode_success(const TaskConfig& task, const Transition& last, int steps) {
  if (task.env_kind == EnvKind::PuddleWorld) return last.terminal && last.reward > 0;
  return steps >= task.horizon && last.reward > 0;
}

std::vector<double> transfer_gravities() { return {5.0, 6.0, 8.0, 12.0}; }

std::vector<TaskConfig> task_family(const TaskConfig& base, bool include_base) {
  std::vector<TaskConfig> out;
  if (base.env_kind == EnvKind::PuddleWorld) {
    for (Corner c : {Corner::BL, Corner::BR, Corner::TL, Corner::TR}) {
      TaskConfig t = base;
      t.goal_corner = c;
      out.push_back(t);
    }
    return out;
  }
  if (include_base) out.push_back(base);
  for (double g : transfer_gravities()) {
    TaskConfig t = base;
    t.gravity = g;
    out.push_back(t);
  }
  return out;
}

std::string to_string(EnvKind kind) {
  return kind == EnvKind::PuddleWorld ? "puddle" : "cartpole";
}

std::string to_string(Corner c) {
  switch (c) {
    case Corner::BL: return "BL";
    case Corner::BR: return "BR";
    case Corner::TL: return "TL";
    case Corner::TR: return "TR";
  }
  return "TR";
}

EnvKind parse_env_kind(const std::string& s) {
  if (s == "puddle" || s == "PuddleWorld") return EnvKind::PuddleWorld;
  if (s == "cartpole" || s == "CartPole") return EnvKind::CartPole;
  throw ConfigError("unknown env_kind: " + s);
}

Corner parse_corner(const std::string& s) {
  if (s == "BL") return Corner::BL;
  if (s == "BR") return Corner::BR;
  if (s == "TL") return Corner::TL;
  if (s == "TR") return Corner::TR;
  throw ConfigError("unknown goal_corner: " + s);
}

KeyValues to_key_values(const TaskConfig& task) {
  KeyValues kv;
  kv.set("env_kind", to_string(task.env_kind));
  kv.set("goal_corner", to_string(task.goal_corner));
  kv.set("gravity", format_double(task.gravity));
  kv.set("noise_std", format_double(task.noise_std));
  kv.set("horizon", std::to_string(task.horizon));
  std::string rects;
  for (std::size_t i = 0; i < task.puddle_rects.size(); ++i) {
    const Rect& r = task.puddle_rects[i];
    if (i) rects += ';';
    rects += format_double(r.x0) + ',' + format_double(r.y0) + ',' + format_double(r.x1) + ',' +
             format_double(r.y1);
  }
  kv.set("puddle_rects", rects);
  return kv;
}

std::string to_config_text(const TaskConfig& task) { return to_key_values(task).to_string(); }

TaskConfig task_from_key_values(const KeyValues& kv) {
  const EnvKind kind = parse_env_kind(kv.get_string("env_kind", "puddle"));
  TaskConfig t = kind == EnvKind::PuddleWorld ? TaskConfig::puddle() : TaskConfig::cart_pole();
  if (auto c = kv.get("goal_corner")) t.goal_corner = parse_corner(*c);
  t.gravity = kv.get_double("gravity", t.gravity);
  t.noise_std = kv.get_double("noise_std", t.noise_std);
  t.horizon = static_cast<int>(kv.get_int("horizon", t.horizon));
  if (auto rects = kv.get("puddle_rects")) {
    t.puddle_rects.clear();
    std::stringstream ss(*rects);
    std::string quad;
    while (std::getline(ss, quad, ';')) {
      if (quad.find_first_not_of(" \t") == std::string::npos) continue;
      auto v = split_numbers(quad, ',');
      if (v.size() != 4) throw ConfigError("puddle_rects: expected x0,y0,x1,y1, got '" + quad + "'");
      t.puddle_rects.push_back(Rect{v[0], v[1], v[2], v[3]});
    }
  }
  t.validate();
  return t;
}

}  // namespace alab
