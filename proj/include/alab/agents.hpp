#ifndef ALAB_AGENTS_HPP_
#define ALAB_AGENTS_HPP_

#include <concepts>
#include <functional>
#include <string>
#include <vector>

#include "alab/abstraction.hpp"
#include "alab/envs.hpp"

namespace alab {

enum class TieBreak { Lowest, Random };

struct QConfig {
  double alpha = 0.005;
  double gamma = 0.99;
  double epsilon = 0.1;
  TieBreak tie_break = TieBreak::Lowest;
};

struct QTable {
  Eigen::MatrixXd values;  // |C| x |A|
  double alpha = 0.005;
  double gamma = 0.99;
  double epsilon = 0.1;
  TieBreak tie_break = TieBreak::Lowest;

  static QTable zeros(int num_states, int num_actions, const QConfig& cfg = {});
  int num_states() const { return static_cast<int>(values.rows()); }
  int num_actions() const { return static_cast<int>(values.cols()); }
};

// Q(c,a) += alpha * (r + gamma * max_a' Q(c',a') * [not terminal] - Q(c,a))
void q_update(QTable& q, int c, ActionId a, double r, int c_next, bool terminal);

// Draws u ~ U[0,1) on every call; u < epsilon picks a uniform action,
// otherwise a greedy one. Exact ties go to the lowest index, or to a uniform
// draw among the tied actions under TieBreak::Random (no draw when the
// maximum is unique).
ActionId epsilon_greedy(const Eigen::Ref<const Eigen::VectorXd>& action_values, double epsilon,
                        Rng& rng, TieBreak tie_break = TieBreak::Lowest);
ActionId epsilon_greedy(const QTable& q, int c, Rng& rng);

struct EpisodeRecord {
  int episode = 0;
  double cum_reward = 0;  // sum of returns up to and including this episode
  double ep_return = 0;
  int steps = 0;
  bool success = false;
};

using LearningCurve = std::vector<EpisodeRecord>;

// Concatenates `part` after `into`, renumbering episodes and carrying the
// cumulative reward forward.
void append_curve(LearningCurve& into, const LearningCurve& part);
void save_curve(const LearningCurve& curve, const std::string& path);

template <class E>
concept EpisodicEnv = requires(const E& e, const State& s, ActionId a, Rng& rng,
                               const Transition& t, int steps) {
  { e.reset(rng) } -> std::convertible_to<State>;
  { e.step(s, a, rng) } -> std::convertible_to<Transition>;
  { e.horizon() } -> std::convertible_to<int>;
  { e.num_actions() } -> std::convertible_to<int>;
  { e.success(t, steps) } -> std::convertible_to<bool>;
};

// Adapts a TaskConfig to EpisodicEnv.
struct TaskEnv {
  TaskConfig task;

  State reset(Rng& rng) const { return alab::reset(task, rng); }
  Transition step(const State& s, ActionId a, Rng& rng) const { return alab::step(task, s, a, rng); }
  int horizon() const { return task.horizon; }
  int num_actions() const { return action_count(task.env_kind); }
  bool success(const Transition& t, int steps) const { return episode_success(task, t, steps); }
};

using QUpdateHook = std::function<void(const QTable&)>;

// Tabular Q-learning over the abstract states produced by `abstraction`
// (State -> cluster index). The table persists across episodes; episodes
// cut by the horizon bootstrap from the last state.
template <EpisodicEnv Env, class Abstraction>
LearningCurve run_tabular_q(const Env& env, const Abstraction& abstraction, QTable& q,
                            int episodes, Rng& rng, const QUpdateHook& after_update = {}) {
  LearningCurve curve;
  double cum = 0;
  for (int ep = 0; ep < episodes; ++ep) {
    State s = env.reset(rng);
    int c = abstraction(s);
    EpisodeRecord rec;
    rec.episode = ep;
    Transition t;
    for (int step = 0; step < env.horizon(); ++step) {
      const ActionId a = epsilon_greedy(q, c, rng);
      t = env.step(s, a, rng);
      const int c_next = abstraction(t.next_state);
      q_update(q, c, a, t.reward, c_next, t.terminal);
      if (after_update) after_update(q);
      rec.ep_return += t.reward;
      ++rec.steps;
      if (t.terminal) break;
      s = std::move(t.next_state);
      c = c_next;
    }
    rec.success = env.success(t, rec.steps);
    cum += rec.ep_return;
    rec.cum_reward = cum;
    curve.push_back(rec);
  }
  return curve;
}

struct QPhiRun {
  QTable q;
  LearningCurve curve;
};

// Q-learning with a learned abstraction, argmax cluster at every step.
QPhiRun run_q_phi(const AbstractionModel& model, const TaskConfig& task, int episodes,
                  const QConfig& cfg, Rng& rng);
// Continues learning into an existing table (same model, new task).
LearningCurve continue_q_phi(const AbstractionModel& model, const TaskConfig& task, QTable& q,
                             int episodes, Rng& rng);

// Q(s, a) = w_a . [features(s); 1], semi-gradient updates.
struct LinearQ {
  Eigen::MatrixXd weights;  // |A| x (dim + 1)
  double alpha = 0.005;
  double gamma = 0.99;
  double epsilon = 0.1;
  TieBreak tie_break = TieBreak::Lowest;
  // Optional fixed feature scaling: (s - center) ./ scale.
  bool normalise = false;
  Eigen::VectorXd center, scale;

  static LinearQ zeros(EnvKind kind, const QConfig& cfg = {}, bool normalise = false);
  Eigen::VectorXd features(const State& s) const;
  Eigen::VectorXd values(const State& s) const { return weights * features(s); }
};

void linear_q_update(LinearQ& q, const State& s, ActionId a, double r, const State& s_next,
                     bool terminal);

template <EpisodicEnv Env>
LearningCurve run_linear_q_on(const Env& env, LinearQ& q, int episodes, Rng& rng) {
  LearningCurve curve;
  double cum = 0;
  for (int ep = 0; ep < episodes; ++ep) {
    State s = env.reset(rng);
    EpisodeRecord rec;
    rec.episode = ep;
    Transition t;
    for (int step = 0; step < env.horizon(); ++step) {
      const ActionId a = epsilon_greedy(q.values(s), q.epsilon, rng, q.tie_break);
      t = env.step(s, a, rng);
      linear_q_update(q, s, a, t.reward, t.next_state, t.terminal);
      rec.ep_return += t.reward;
      ++rec.steps;
      if (t.terminal) break;
      s = std::move(t.next_state);
    }
    rec.success = env.success(t, rec.steps);
    cum += rec.ep_return;
    rec.cum_reward = cum;
    curve.push_back(rec);
  }
  return curve;
}

struct LinearQRun {
  LinearQ q;
  LearningCurve curve;
};

LinearQRun run_linear_q(const TaskConfig& task, int episodes, const QConfig& cfg, Rng& rng,
                        bool normalise = false);

}  // namespace alab

#endif  // ALAB_AGENTS_HPP_
