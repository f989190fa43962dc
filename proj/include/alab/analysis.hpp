#ifndef ALAB_ANALYSIS_HPP_
#define ALAB_ANALYSIS_HPP_

#include <algorithm>
#include <functional>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "alab/abstraction.hpp"

namespace alab {

// KL(p || q) = sum_a p(a) log(p(a) / q(a)). Where p(a) > 0, q(a) is floored
// at kLogFloor; each floored entry increments *floor_hits.
double kl_point(const Eigen::VectorXd& p, const Eigen::VectorXd& q, int* floor_hits = nullptr);

// State -> action distribution.
using PolicyFn = std::function<Eigen::VectorXd(const State&)>;

// The scripted demonstrator of `task` as a point-mass distribution.
PolicyFn point_mass_expert(const TaskConfig& task);
// sum_c phi(c|s) pi(a|c,task_id)
PolicyFn abstraction_policy(const AbstractionModel& model, int task_id);

struct StateRecord {
  double kl = 0;
  double l1 = 0;
  double pinsker_slack = 0;  // sqrt(2 KL) - L1, non-negative when Pinsker holds
};

struct DeltaMeasurement {
  double delta = 0;    // mean sqrt(2 KL)
  double mean_kl = 0;
  double mean_l1 = 0;
  int floor_hits = 0;
  bool pinsker_holds = true;  // every record has L1 <= sqrt(2 KL) + 1e-9
  std::vector<StateRecord> records;
};

DeltaMeasurement measure_delta(const AbstractionModel& model, const PolicyFn& expert,
                               std::span<const State> states, int task_id);
DeltaMeasurement measure_delta(const PolicyFn& expert, const PolicyFn& learner,
                               std::span<const State> states);

// Noise-free Puddle World on an R x R grid of cell centres ((i + 0.5) / R).
// Transitions come from the environment's own step function; the landing
// point is snapped to the cell containing it. Goal cells are absorbing with
// value 0.
struct GridMdp {
  TaskConfig task;
  int resolution = 0;
  double gamma = 0.99;
  Eigen::MatrixXi next;     // cells x |A|
  Eigen::MatrixXd reward;   // cells x |A|
  Eigen::MatrixXi terminal; // cells x |A|
  std::vector<bool> absorbing;
  Eigen::VectorXd v_star;
  Eigen::VectorXi greedy;   // optimal action per cell
  std::vector<double> residuals;  // sup-norm change per value-iteration sweep

  int num_cells() const { return resolution * resolution; }
  int num_actions() const { return static_cast<int>(next.cols()); }
  State cell_center(int cell) const;
  int cell_of(const State& s) const;

  // Row c of the result is policy(cell_center(c)).
  Eigen::MatrixXd tabulate(const PolicyFn& policy) const;
  // Exact V^pi for a stationary policy given as a (cells x |A|) distribution
  // table, via a dense linear solve of (I - gamma P_pi) V = r_pi.
  Eigen::VectorXd evaluate(const Eigen::MatrixXd& policy) const;
  // Iterative policy evaluation to sup-norm tolerance; independent of evaluate().
  Eigen::VectorXd evaluate_iterative(const Eigen::MatrixXd& policy, double tol) const;
};

// Builds the grid and runs value iteration until the sup-norm residual < tol.
GridMdp solve_grid_mdp(const TaskConfig& task, int resolution, double gamma = 0.99,
                       double tol = 1e-10);

Eigen::MatrixXd uniform_policy_table(const GridMdp& grid);
Eigen::MatrixXd deterministic_policy_table(const GridMdp& grid, const Eigen::VectorXi& actions);
Eigen::VectorXd uniform_state_distribution(const GridMdp& grid);

struct Lemma1Check {
  double k = 0;                   // E_p ||pi1 - pi2||_1
  double measured_value_gap = 0;  // E_p [V^pi1 - V^pi2]
  double lemma_bound = 0;         // k RMax / (1 - gamma)
  bool holds = false;
};

Lemma1Check verify_lemma1(const GridMdp& grid, const Eigen::MatrixXd& pi1,
                          const Eigen::MatrixXd& pi2, const Eigen::VectorXd& state_dist,
                          double tol = 1e-6);
// pi1 = expert, pi2 = the abstraction's marginal action policy for task_id.
Lemma1Check verify_lemma1(const AbstractionModel& model, const PolicyFn& expert,
                          const GridMdp& grid, const Eigen::VectorXd& state_dist, int task_id = 0,
                          double tol = 1e-6);

struct MonteCarloValue {
  double mean = 0;
  double std_error = 0;
};

// Discounted return of `policy` from `start` averaged over rollouts in the
// (possibly noisy) task. Cross-check only; the grid evaluation is exact.
MonteCarloValue monte_carlo_value(const TaskConfig& task, const PolicyFn& policy,
                                  const State& start, int episodes, double gamma, Rng& rng);

struct RademacherConfig {
  std::vector<int> hidden{64, 64};
  int steps = 200;
  double lr = 0.01;
  int restarts = 3;
  // Evaluate the zero-weight network without fitting (constant class).
  bool frozen_zero = false;
};

struct RademacherDraw {
  Eigen::MatrixXd sigma;  // n x m, entries +-1
  double fit = 0;         // best (1/n) sum_j sum_i sigma_ji g(X_j)_i found
};

struct RademacherEstimate {
  double estimate = 0;  // mean fit over draws; a lower approximation of the sup
  std::vector<RademacherDraw> draws;
};

// Empirical Rademacher complexity of softmax networks with `outputs` units
// on the columns of `states` (already normalised). The sup over the class is
// approximated by gradient ascent with restarts.
RademacherEstimate empirical_rademacher(const RademacherConfig& cfg, const Eigen::MatrixXd& states,
                                        int outputs, int m_draws, Rng& rng);

struct TheoremBound {
  double stated = 0;   // Delta/2 + 2 sqrt(2) Rad + sqrt(2 ln(1/delta) / n)
  double pinsker = 0;  // same with Delta in place of Delta/2
};

TheoremBound theorem_bound(double delta_kl, double rad, long long n, double delta_prob);

struct BoundReport {
  double delta = 0;
  double mean_kl = 0;
  double training_nll = 0;
  double mean_l1 = 0;
  double heldout_mean_l1 = 0;
  double rademacher_estimate = 0;
  long long n = 0;
  double delta_prob = 0.05;
  double theorem_bound = 0;
  double theorem_bound_pinsker = 0;
  double lemma_k = 0;
  double lemma_bound = 0;
  double measured_value_gap = 0;
  bool lemma_holds = false;
  bool pinsker_holds = false;
  double mc_value = 0;
  double mc_std_error = 0;
  double grid_value = 0;
};

void write_report(const BoundReport& r, const std::string& path);
void write_state_records(const std::vector<StateRecord>& records, const std::string& path);

}  // namespace alab

#endif  // ALAB_ANALYSIS_HPP_
