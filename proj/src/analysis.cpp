#include "alab/analysis.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>

namespace alab {

namespace {

std::string fmt17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

void require_puddle(const TaskConfig& task) {
  if (task.env_kind != EnvKind::PuddleWorld)
    throw std::invalid_argument("grid MDP is defined for Puddle World tasks only");
}

void require_table(const GridMdp& grid, const Eigen::MatrixXd& policy) {
  if (policy.rows() != grid.num_cells() || policy.cols() != grid.num_actions())
    throw DimensionMismatch("policy table must be cells x actions");
}

}  // namespace

double kl_point(const Eigen::VectorXd& p, const Eigen::VectorXd& q, int* floor_hits) {
  if (p.size() != q.size()) throw DimensionMismatch("kl_point: distributions differ in size");
  double kl = 0;
  for (Eigen::Index a = 0; a < p.size(); ++a) {
    if (p(a) <= 0) continue;
    double qa = q(a);
    if (qa < kLogFloor) {
      qa = kLogFloor;
      if (floor_hits) ++*floor_hits;
    }
    kl += p(a) * std::log(p(a) / qa);
  }
  return std::max(kl, 0.0);
}

PolicyFn point_mass_expert(const TaskConfig& task) {
  return [task](const State& s) {
    Eigen::VectorXd p = Eigen::VectorXd::Zero(action_count(task.env_kind));
    p(expert_action(task, s).index) = 1.0;
    return p;
  };
}

PolicyFn abstraction_policy(const AbstractionModel& model, int task_id) {
  return [&model, task_id](const State& s) { return marginal_action_dist(model, s, task_id); };
}

DeltaMeasurement measure_delta(const PolicyFn& expert, const PolicyFn& learner,
                               std::span<const State> states) {
  if (states.empty()) throw std::invalid_argument("measure_delta: no states");
  DeltaMeasurement m;
  m.records.reserve(states.size());
  for (const State& s : states) {
    const Eigen::VectorXd p = expert(s);
    const Eigen::VectorXd q = learner(s);
    StateRecord r;
    r.kl = kl_point(p, q, &m.floor_hits);
    r.l1 = (p - q).cwiseAbs().sum();
    const double root = std::sqrt(2.0 * r.kl);
    r.pinsker_slack = root - r.l1;
    if (r.l1 > root + 1e-9) m.pinsker_holds = false;
    m.delta += root;
    m.mean_kl += r.kl;
    m.mean_l1 += r.l1;
    m.records.push_back(r);
  }
  const double n = static_cast<double>(states.size());
  m.delta /= n;
  m.mean_kl /= n;
  m.mean_l1 /= n;
  return m;
}

DeltaMeasurement measure_delta(const AbstractionModel& model, const PolicyFn& expert,
                               std::span<const State> states, int task_id) {
  return measure_delta(expert, abstraction_policy(model, task_id), states);
}

State GridMdp::cell_center(int cell) const {
  const int i = cell % resolution, j = cell / resolution;
  return Eigen::Vector2d((i + 0.5) / resolution, (j + 0.5) / resolution);
}

int GridMdp::cell_of(const State& s) const {
  const auto index = [this](double v) {
    return std::clamp(static_cast<int>(std::floor(v * resolution)), 0, resolution - 1);
  };
  return index(s(1)) * resolution + index(s(0));
}

Eigen::MatrixXd GridMdp::tabulate(const PolicyFn& policy) const {
  Eigen::MatrixXd table(num_cells(), num_actions());
  for (int c = 0; c < num_cells(); ++c) table.row(c) = policy(cell_center(c)).transpose();
  return table;
}

Eigen::VectorXd GridMdp::evaluate(const Eigen::MatrixXd& policy) const {
  require_table(*this, policy);
  const int n = num_cells();
  Eigen::MatrixXd a = Eigen::MatrixXd::Identity(n, n);
  Eigen::VectorXd b = Eigen::VectorXd::Zero(n);
  for (int c = 0; c < n; ++c) {
    if (absorbing[c]) continue;
    for (int k = 0; k < num_actions(); ++k) {
      const double w = policy(c, k);
      if (w == 0) continue;
      b(c) += w * reward(c, k);
      if (!terminal(c, k)) a(c, next(c, k)) -= gamma * w;
    }
  }
  return a.partialPivLu().solve(b);
}

Eigen::VectorXd GridMdp::evaluate_iterative(const Eigen::MatrixXd& policy, double tol) const {
  require_table(*this, policy);
  Eigen::VectorXd v = Eigen::VectorXd::Zero(num_cells());
  for (;;) {
    Eigen::VectorXd nv = Eigen::VectorXd::Zero(num_cells());
    for (int c = 0; c < num_cells(); ++c) {
      if (absorbing[c]) continue;
      for (int k = 0; k < num_actions(); ++k)
        nv(c) += policy(c, k) * (reward(c, k) + (terminal(c, k) ? 0.0 : gamma * v(next(c, k))));
    }
    const double change = (nv - v).cwiseAbs().maxCoeff();
    v = std::move(nv);
    if (change < tol) return v;
  }
}

GridMdp solve_grid_mdp(const TaskConfig& task, int resolution, double gamma, double tol) {
  require_puddle(task);
  if (resolution < 2) throw std::invalid_argument("grid resolution must be >= 2");
  if (!(gamma > 0 && gamma < 1)) throw std::invalid_argument("gamma must be in (0,1)");
  GridMdp g;
  g.task = task;
  g.task.noise_std = 0;
  g.resolution = resolution;
  g.gamma = gamma;
  const int n = resolution * resolution, na = action_count(task.env_kind);
  g.next.resize(n, na);
  g.reward.resize(n, na);
  g.terminal.resize(n, na);
  g.absorbing.assign(n, false);
  Rng unused(0);
  for (int c = 0; c < n; ++c) {
    const State s = g.cell_center(c);
    g.absorbing[c] = is_goal(g.task, s);
    for (int k = 0; k < na; ++k) {
      if (g.absorbing[c]) {
        g.next(c, k) = c;
        g.reward(c, k) = 0;
        g.terminal(c, k) = 1;
        continue;
      }
      const Transition t = step(g.task, s, ActionId{k}, unused);
      g.next(c, k) = g.cell_of(t.next_state);
      g.reward(c, k) = t.reward;
      g.terminal(c, k) = t.terminal ? 1 : 0;
    }
  }

  Eigen::VectorXd v = Eigen::VectorXd::Zero(n);
  g.greedy = Eigen::VectorXi::Zero(n);
  for (;;) {
    Eigen::VectorXd nv = Eigen::VectorXd::Zero(n);
    for (int c = 0; c < n; ++c) {
      if (g.absorbing[c]) continue;
      double best = -std::numeric_limits<double>::infinity();
      for (int k = 0; k < na; ++k) {
        const double q = g.reward(c, k) + (g.terminal(c, k) ? 0.0 : gamma * v(g.next(c, k)));
        if (q > best) {
          best = q;
          g.greedy(c) = k;
        }
      }
      nv(c) = best;
    }
    const double change = (nv - v).cwiseAbs().maxCoeff();
    g.residuals.push_back(change);
    v = std::move(nv);
    if (change < tol) break;
  }
  g.v_star = std::move(v);
  return g;
}

Eigen::MatrixXd uniform_policy_table(const GridMdp& grid) {
  return Eigen::MatrixXd::Constant(grid.num_cells(), grid.num_actions(),
                                   1.0 / grid.num_actions());
}

Eigen::MatrixXd deterministic_policy_table(const GridMdp& grid, const Eigen::VectorXi& actions) {
  if (actions.size() != grid.num_cells()) throw DimensionMismatch("one action per cell expected");
  Eigen::MatrixXd t = Eigen::MatrixXd::Zero(grid.num_cells(), grid.num_actions());
  for (int c = 0; c < grid.num_cells(); ++c) {
    if (actions(c) < 0 || actions(c) >= grid.num_actions())
      throw std::out_of_range("action index out of range");
    t(c, actions(c)) = 1.0;
  }
  return t;
}

Eigen::VectorXd uniform_state_distribution(const GridMdp& grid) {
  return Eigen::VectorXd::Constant(grid.num_cells(), 1.0 / grid.num_cells());
}

Lemma1Check verify_lemma1(const GridMdp& grid, const Eigen::MatrixXd& pi1,
                          const Eigen::MatrixXd& pi2, const Eigen::VectorXd& state_dist,
                          double tol) {
  require_table(grid, pi1);
  require_table(grid, pi2);
  if (state_dist.size() != grid.num_cells())
    throw DimensionMismatch("state distribution must cover every grid cell");
  Lemma1Check out;
  out.k = state_dist.dot((pi1 - pi2).cwiseAbs().rowwise().sum());
  out.measured_value_gap = state_dist.dot(grid.evaluate(pi1) - grid.evaluate(pi2));
  out.lemma_bound = out.k * env_bounds(grid.task.env_kind).rmax / (1.0 - grid.gamma);
  out.holds = out.measured_value_gap <= out.lemma_bound + tol;
  return out;
}

Lemma1Check verify_lemma1(const AbstractionModel& model, const PolicyFn& expert,
                          const GridMdp& grid, const Eigen::VectorXd& state_dist, int task_id,
                          double tol) {
  require_compatible(model, grid.task);
  return verify_lemma1(grid, grid.tabulate(expert),
                       grid.tabulate(abstraction_policy(model, task_id)), state_dist, tol);
}

MonteCarloValue monte_carlo_value(const TaskConfig& task, const PolicyFn& policy,
                                  const State& start, int episodes, double gamma, Rng& rng) {
  if (episodes < 2) throw std::invalid_argument("monte_carlo_value needs at least 2 episodes");
  std::vector<double> returns;
  returns.reserve(episodes);
  for (int e = 0; e < episodes; ++e) {
    State s = start;
    double g = 0, discount = 1;
    for (int t = 0; t < task.horizon; ++t) {
      const Eigen::VectorXd p = policy(s);
      std::discrete_distribution<int> pick(p.data(), p.data() + p.size());
      const Transition tr = step(task, s, ActionId{pick(rng)}, rng);
      g += discount * tr.reward;
      discount *= gamma;
      if (tr.terminal) break;
      s = tr.next_state;
    }
    returns.push_back(g);
  }
  const Eigen::Map<const Eigen::VectorXd> r(returns.data(), episodes);
  MonteCarloValue out;
  out.mean = r.mean();
  const double var = (r.array() - out.mean).square().sum() / (episodes - 1);
  out.std_error = std::sqrt(var / episodes);
  return out;
}

RademacherEstimate empirical_rademacher(const RademacherConfig& cfg, const Eigen::MatrixXd& states,
                                        int outputs, int m_draws, Rng& rng) {
  const Eigen::Index n = states.cols();
  if (n < 1 || m_draws < 1 || outputs < 1)
    throw std::invalid_argument("empirical_rademacher: n, m_draws and outputs must be >= 1");
  std::vector<int> widths{static_cast<int>(states.rows())};
  widths.insert(widths.end(), cfg.hidden.begin(), cfg.hidden.end());
  widths.push_back(outputs);

  const auto fit_of = [n](const Eigen::MatrixXd& probs, const Eigen::MatrixXd& sigma) {
    return probs.cwiseProduct(sigma).sum() / static_cast<double>(n);
  };

  RademacherEstimate est;
  std::bernoulli_distribution coin(0.5);
  for (int d = 0; d < m_draws; ++d) {
    RademacherDraw draw;
    draw.sigma.resize(outputs, n);
    for (Eigen::Index j = 0; j < n; ++j)
      for (int i = 0; i < outputs; ++i) draw.sigma(i, j) = coin(rng) ? 1.0 : -1.0;

    if (cfg.frozen_zero) {
      const Mlp<double> zero = Mlp<double>::zeros(widths);
      draw.fit = fit_of(forward_batch(zero, states).probs, draw.sigma);
    } else {
      draw.fit = -std::numeric_limits<double>::infinity();
      const Eigen::MatrixXd dprobs = -draw.sigma / static_cast<double>(n);
      const AdamConfig adam{cfg.lr};
      for (int r = 0; r < std::max(1, cfg.restarts); ++r) {
        Mlp<double> net = Mlp<double>::glorot(widths, rng);
        AdamState<double> st = AdamState<double>::for_params(net);
        for (int t = 0; t <= cfg.steps; ++t) {
          const ForwardCache<double> cache = forward_batch(net, states);
          draw.fit = std::max(draw.fit, fit_of(cache.probs, draw.sigma));
          if (t == cfg.steps) break;
          adam_step(net, st, backward(net, cache, softmax_backward(cache.probs, dprobs)), adam);
        }
      }
    }
    est.estimate += draw.fit;
    est.draws.push_back(std::move(draw));
  }
  est.estimate /= m_draws;
  return est;
}

TheoremBound theorem_bound(double delta_kl, double rad, long long n, double delta_prob) {
  if (!(delta_prob > 0 && delta_prob < 1)) throw std::invalid_argument("delta must be in (0,1)");
  if (n < 1) throw std::invalid_argument("n must be >= 1");
  const double tail = 2.0 * std::sqrt(2.0) * rad +
                      std::sqrt(2.0 * std::log(1.0 / delta_prob) / static_cast<double>(n));
  return {delta_kl / 2.0 + tail, delta_kl + tail};
}

void write_report(const BoundReport& r, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write report: " + path);
  const auto kv = [&out](const char* key, double v) { out << key << " = " << fmt17(v) << '\n'; };
  kv("delta", r.delta);
  kv("mean_kl", r.mean_kl);
  kv("training_nll", r.training_nll);
  kv("mean_l1", r.mean_l1);
  kv("heldout_mean_l1", r.heldout_mean_l1);
  kv("rademacher_estimate", r.rademacher_estimate);
  out << "n = " << r.n << '\n';
  kv("delta_prob", r.delta_prob);
  kv("theorem_bound", r.theorem_bound);
  kv("theorem_bound_pinsker", r.theorem_bound_pinsker);
  kv("lemma_k", r.lemma_k);
  kv("lemma_bound", r.lemma_bound);
  kv("measured_value_gap", r.measured_value_gap);
  out << "lemma_holds = " << (r.lemma_holds ? "true" : "false") << '\n';
  out << "pinsker_holds = " << (r.pinsker_holds ? "true" : "false") << '\n';
  kv("mc_value", r.mc_value);
  kv("mc_std_error", r.mc_std_error);
  kv("grid_value", r.grid_value);
  if (!out) throw std::runtime_error("error writing report: " + path);
}

void write_state_records(const std::vector<StateRecord>& records, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write records: " + path);
  out << "kl,l1,pinsker_slack\n";
  for (const StateRecord& r : records)
    out << fmt17(r.kl) << ',' << fmt17(r.l1) << ',' << fmt17(r.pinsker_slack) << '\n';
}

}  // namespace alab
