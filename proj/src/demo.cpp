#include "alab/demo.hpp"

#include <array>
#include <cmath>
#include <fstream>

#include <json.hpp>

namespace alab {

namespace {

using nlohmann::json;

bool in_puddle(const TaskConfig& task, const Eigen::Vector2d& p) {
  for (const Rect& r : task.puddle_rects)
    if (r.contains(p.x(), p.y())) return true;
  return false;
}

Eigen::Vector2d move(const Eigen::Vector2d& p, ActionId a) {
  Eigen::Vector2d q = p;
  switch (a.index) {
    case 0: q.y() += puddle::kStepSize; break;
    case 1: q.y() -= puddle::kStepSize; break;
    case 2: q.x() -= puddle::kStepSize; break;
    default: q.x() += puddle::kStepSize; break;
  }
  return q.cwiseMax(0.0).cwiseMin(1.0);
}

ActionId puddle_expert(const TaskConfig& task, const Eigen::Vector2d& p) {
  const Eigen::Vector2d gap = corner_position(task.goal_corner) - p;
  const ActionId toward_x = gap.x() >= 0 ? puddle::kRight : puddle::kLeft;
  const ActionId away_x = gap.x() >= 0 ? puddle::kLeft : puddle::kRight;
  const ActionId toward_y = gap.y() >= 0 ? puddle::kUp : puddle::kDown;
  const ActionId away_y = gap.y() >= 0 ? puddle::kDown : puddle::kUp;

  std::array<ActionId, 4> order;
  if (std::abs(gap.x()) >= std::abs(gap.y()))
    order = {toward_x, toward_y, away_y, away_x};
  else
    order = {toward_y, toward_x, away_x, away_y};

  for (ActionId a : order) {
    const Eigen::Vector2d q = move(p, a);
    if ((q - corner_position(task.goal_corner)).squaredNorm() <= puddle::kGoalSquaredRadius)
      return a;
    if (!in_puddle(task, q)) return a;
  }
  return order[0];
}

json state_json(const State& s) {
  json arr = json::array();
  for (Eigen::Index i = 0; i < s.size(); ++i) arr.push_back(s(i));
  return arr;
}

State state_from_json(const json& arr, int dim, std::size_t lineno) {
  if (!arr.is_array()) throw ParseError(lineno, "state is not an array");
  if (static_cast<int>(arr.size()) != dim)
    throw DimensionMismatch("line " + std::to_string(lineno) + ": state has dimension " +
                            std::to_string(arr.size()) + ", header says " + std::to_string(dim));
  State s(dim);
  for (int i = 0; i < dim; ++i) {
    if (!arr[i].is_number()) throw ParseError(lineno, "state entry is not a number");
    s(i) = arr[i].get<double>();
  }
  return s;
}

}  // namespace

bool operator==(const Dataset& a, const Dataset& b) {
  if (a.num_tasks != b.num_tasks || a.env_kind != b.env_kind || a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const Quadruple& p = a.quadruples[i];
    const Quadruple& q = b.quadruples[i];
    if (p.state != q.state || p.action != q.action || p.reward != q.reward ||
        p.next_state != q.next_state || p.task_id != q.task_id)
      return false;
  }
  return true;
}

ActionId expert_action(const TaskConfig& task, const State& s) {
  if (task.env_kind == EnvKind::PuddleWorld) return puddle_expert(task, s.head<2>());
  return s(2) + kCartPoleExpertGain * s(3) > 0 ? cartpole::kRight : cartpole::kLeft;
}

State sample_uniform_state(EnvKind kind, Rng& rng) {
  const StateBox box = state_box(kind);
  State s(box.lo.size());
  for (Eigen::Index i = 0; i < s.size(); ++i) {
    std::uniform_real_distribution<double> u(box.lo(i), box.hi(i));
    s(i) = u(rng);
  }
  return s;
}

Dataset collect_dataset(const std::vector<TaskConfig>& tasks, int n_per_task, Sampler sampler,
                        Rng& rng) {
  if (tasks.empty()) throw std::invalid_argument("collect_dataset: empty task list");
  if (n_per_task < 1) throw std::invalid_argument("collect_dataset: n_per_task must be >= 1");
  Dataset d;
  d.env_kind = tasks.front().env_kind;
  d.num_tasks = static_cast<int>(tasks.size());
  d.quadruples.reserve(tasks.size() * static_cast<std::size_t>(n_per_task));

  for (std::size_t k = 0; k < tasks.size(); ++k) {
    const TaskConfig& task = tasks[k];
    if (task.env_kind != d.env_kind)
      throw std::invalid_argument("collect_dataset: tasks mix environment kinds");
    if (sampler == Sampler::UniformState) {
      for (int i = 0; i < n_per_task; ++i) {
        State s = sample_uniform_state(task.env_kind, rng);
        const ActionId a = expert_action(task, s);
        Transition t = step(task, s, a, rng);
        d.quadruples.push_back({std::move(s), a, t.reward, std::move(t.next_state),
                                static_cast<int>(k)});
      }
      continue;
    }
    State s = reset(task, rng);
    int t_in_episode = 0;
    for (int i = 0; i < n_per_task; ++i) {
      const ActionId a = expert_action(task, s);
      Transition t = step(task, s, a, rng);
      d.quadruples.push_back({s, a, t.reward, t.next_state, static_cast<int>(k)});
      ++t_in_episode;
      if (t.terminal || t_in_episode >= task.horizon) {
        s = reset(task, rng);
        t_in_episode = 0;
      } else {
        s = std::move(t.next_state);
      }
    }
  }
  return d;
}

void save_dataset(const Dataset& d, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write dataset: " + path);
  const int dim = state_dim(d.env_kind);
  out << json{{"env", to_string(d.env_kind)}, {"k", d.num_tasks}, {"dim", dim}}.dump() << '\n';
  for (const Quadruple& q : d.quadruples) {
    json row{{"s", state_json(q.state)},
             {"a", q.action.index},
             {"r", q.reward},
             {"sp", state_json(q.next_state)},
             {"task", q.task_id}};
    out << row.dump() << '\n';
  }
  if (!out) throw std::runtime_error("error writing dataset: " + path);
}

Dataset load_dataset(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read dataset: " + path);
  std::string line;
  std::size_t lineno = 0;
  Dataset d;
  int dim = 0;
  bool have_header = false;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    json obj;
    try {
      obj = json::parse(line);
    } catch (const json::parse_error& e) {
      throw ParseError(lineno, std::string("malformed JSON: ") + e.what());
    }
    if (!obj.is_object()) throw ParseError(lineno, "expected a JSON object");
    try {
      if (!have_header) {
        d.env_kind = parse_env_kind(obj.at("env").get<std::string>());
        d.num_tasks = obj.at("k").get<int>();
        dim = obj.at("dim").get<int>();
        if (dim != state_dim(d.env_kind))
          throw DimensionMismatch("header dim " + std::to_string(dim) + " does not match " +
                                  to_string(d.env_kind));
        if (d.num_tasks < 1) throw ParseError(lineno, "k must be >= 1");
        have_header = true;
        continue;
      }
      Quadruple q;
      q.state = state_from_json(obj.at("s"), dim, lineno);
      q.action = ActionId{obj.at("a").get<int>()};
      q.reward = obj.at("r").get<double>();
      q.next_state = state_from_json(obj.at("sp"), dim, lineno);
      q.task_id = obj.at("task").get<int>();
      if (q.task_id < 0 || q.task_id >= d.num_tasks)
        throw ParseError(lineno, "task id out of range");
      if (q.action.index < 0 || q.action.index >= action_count(d.env_kind))
        throw ParseError(lineno, "action out of range");
      d.quadruples.push_back(std::move(q));
    } catch (const json::exception& e) {
      throw ParseError(lineno, std::string("bad field: ") + e.what());
    } catch (const ConfigError& e) {
      throw ParseError(lineno, e.what());
    }
  }
  if (!have_header) throw ParseError(lineno, "empty dataset file");
  if (d.empty()) throw ParseError(lineno, "dataset has no quadruples");
  return d;
}

}  // namespace alab
