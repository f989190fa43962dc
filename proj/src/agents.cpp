#include "alab/agents.hpp"

#include <cstdio>
#include <fstream>

namespace alab {

QTable QTable::zeros(int num_states, int num_actions, const QConfig& cfg) {
  if (!(cfg.gamma > 0 && cfg.gamma < 1)) throw std::invalid_argument("gamma must be in (0,1)");
  if (!(cfg.epsilon >= 0 && cfg.epsilon <= 1)) throw std::invalid_argument("epsilon must be in [0,1]");
  QTable q;
  q.values = Eigen::MatrixXd::Zero(num_states, num_actions);
  q.alpha = cfg.alpha;
  q.gamma = cfg.gamma;
  q.epsilon = cfg.epsilon;
  q.tie_break = cfg.tie_break;
  return q;
}

void q_update(QTable& q, int c, ActionId a, double r, int c_next, bool terminal) {
  const double bootstrap = terminal ? 0.0 : q.gamma * q.values.row(c_next).maxCoeff();
  q.values(c, a.index) += q.alpha * (r + bootstrap - q.values(c, a.index));
}

ActionId epsilon_greedy(const Eigen::Ref<const Eigen::VectorXd>& action_values, double epsilon,
                        Rng& rng, TieBreak tie_break) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  if (u(rng) < epsilon) {
    std::uniform_int_distribution<int> pick(0, static_cast<int>(action_values.size()) - 1);
    return {pick(rng)};
  }
  Eigen::Index best = 0;
  const double top = action_values.maxCoeff(&best);
  if (tie_break == TieBreak::Lowest) return {static_cast<int>(best)};
  std::vector<int> tied;
  for (Eigen::Index i = 0; i < action_values.size(); ++i)
    if (action_values(i) == top) tied.push_back(static_cast<int>(i));
  if (tied.size() == 1) return {tied[0]};
  std::uniform_int_distribution<std::size_t> pick(0, tied.size() - 1);
  return {tied[pick(rng)]};
}

ActionId epsilon_greedy(const QTable& q, int c, Rng& rng) {
  return epsilon_greedy(q.values.row(c).transpose(), q.epsilon, rng, q.tie_break);
}

void append_curve(LearningCurve& into, const LearningCurve& part) {
  const double base = into.empty() ? 0.0 : into.back().cum_reward;
  const int first = static_cast<int>(into.size());
  for (EpisodeRecord rec : part) {
    rec.episode += first;
    rec.cum_reward += base;
    into.push_back(rec);
  }
}

void save_curve(const LearningCurve& curve, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write curve: " + path);
  out << "episode,ep_return,cum_reward,steps,success\n";
  char buf[128];
  for (const EpisodeRecord& r : curve) {
    std::snprintf(buf, sizeof(buf), "%d,%.17g,%.17g,%d,%d\n", r.episode, r.ep_return,
                  r.cum_reward, r.steps, r.success ? 1 : 0);
    out << buf;
  }
}

QPhiRun run_q_phi(const AbstractionModel& model, const TaskConfig& task, int episodes,
                  const QConfig& cfg, Rng& rng) {
  QPhiRun run{QTable::zeros(model.num_clusters(), action_count(task.env_kind), cfg), {}};
  run.curve = continue_q_phi(model, task, run.q, episodes, rng);
  return run;
}

LearningCurve continue_q_phi(const AbstractionModel& model, const TaskConfig& task, QTable& q,
                             int episodes, Rng& rng) {
  require_compatible(model, task);
  if (q.num_states() != model.num_clusters() || q.num_actions() != action_count(task.env_kind))
    throw DimensionMismatch("Q table shape does not match the abstraction");
  const auto cluster_of = [&model](const State& s) { return phi_map(model, s).cluster; };
  return run_tabular_q(TaskEnv{task}, cluster_of, q, episodes, rng);
}

LinearQ LinearQ::zeros(EnvKind kind, const QConfig& cfg, bool normalise) {
  LinearQ q;
  q.weights = Eigen::MatrixXd::Zero(action_count(kind), state_dim(kind) + 1);
  q.alpha = cfg.alpha;
  q.gamma = cfg.gamma;
  q.epsilon = cfg.epsilon;
  q.tie_break = cfg.tie_break;
  q.normalise = normalise;
  const StateBox box = state_box(kind);
  q.center = 0.5 * (box.lo + box.hi);
  q.scale = 0.5 * (box.hi - box.lo);
  return q;
}

Eigen::VectorXd LinearQ::features(const State& s) const {
  const Eigen::Index d = weights.cols() - 1;
  if (s.size() != d) throw DimensionMismatch("LinearQ: state dimension mismatch");
  Eigen::VectorXd f(d + 1);
  f.head(d) = normalise ? Eigen::VectorXd((s - center).cwiseQuotient(scale)) : s;
  f(d) = 1.0;
  return f;
}

void linear_q_update(LinearQ& q, const State& s, ActionId a, double r, const State& s_next,
                     bool terminal) {
  const Eigen::VectorXd f = q.features(s);
  const double bootstrap = terminal ? 0.0 : q.gamma * q.values(s_next).maxCoeff();
  const double td = r + bootstrap - q.weights.row(a.index).dot(f);
  q.weights.row(a.index) += q.alpha * td * f.transpose();
}

LinearQRun run_linear_q(const TaskConfig& task, int episodes, const QConfig& cfg, Rng& rng,
                        bool normalise) {
  LinearQRun run{LinearQ::zeros(task.env_kind, cfg, normalise), {}};
  run.curve = run_linear_q_on(TaskEnv{task}, run.q, episodes, rng);
  return run;
}

}  // namespace alab
