#ifndef ALAB_ABSTRACTION_HPP_
#define ALAB_ABSTRACTION_HPP_

#include <optional>
#include <string>
#include <vector>

#include "alab/demo.hpp"
#include "alab/net.hpp"

namespace alab {

enum class PolicyMode { ActionTuple, Budget };

// Fixed abstract policy pi(a | c, k). by_task[k] is (|A| x |C|); column c is
// the action distribution of cluster c in task k.
struct AbstractPolicyTable {
  std::vector<Eigen::MatrixXd> by_task;
  PolicyMode mode = PolicyMode::ActionTuple;

  int num_clusters() const { return by_task.empty() ? 0 : static_cast<int>(by_task[0].cols()); }
  int num_tasks() const { return static_cast<int>(by_task.size()); }
  int num_actions() const { return by_task.empty() ? 0 : static_cast<int>(by_task[0].rows()); }

  double prob(int cluster, int task, ActionId a) const { return by_task[task](a.index, cluster); }
  // pi(a | ., k) as a vector over clusters.
  Eigen::VectorXd cluster_weights(ActionId a, int task) const {
    return by_task[task].row(a.index).transpose();
  }
  // Action with the largest probability for (c, k), lowest index on ties.
  ActionId action_of(int cluster, int task) const;

  friend bool operator==(const AbstractPolicyTable&, const AbstractPolicyTable&) = default;
};

// ActionTuple: |C| = |A|^K and cluster c plays digit k of c (base |A|, k = 0
// least significant) in task k. Budget: |C| = budget; the first
// min(budget, |A|^K) clusters follow the tuple enumeration, the rest get
// seeded random one-hot rows.
AbstractPolicyTable build_policy_table(int num_actions, int num_tasks, PolicyMode mode,
                                       std::optional<int> budget, Rng& rng);

struct TrainConfig {
  std::vector<int> hidden{64, 64};
  int epochs = 100;
  int batch_size = 32;
  AdamConfig adam{};
  // Early stop once the epoch loss improves by less than this for
  // `patience` consecutive epochs.
  double min_improvement = 1e-5;
  int patience = 5;
};

struct ModelMeta {
  EnvKind env_kind = EnvKind::PuddleWorld;
  int state_dim = 2;
  int action_count = 4;
  int num_tasks = 1;
  friend bool operator==(const ModelMeta&, const ModelMeta&) = default;
};

struct AbstractionModel {
  Mlp<double> net;
  AbstractPolicyTable policy;
  ModelMeta meta;
  // Fixed input normalisation: (s - input_center) ./ input_scale.
  Eigen::VectorXd input_center, input_scale;
  // Full-dataset loss at initialisation (entry 0) and after each epoch.
  std::vector<double> loss_trace;
  int best_epoch = 0;

  int num_clusters() const { return net.output_dim(); }
  Eigen::VectorXd normalise(const State& s) const;
  bool operator==(const AbstractionModel& o) const;
};

// Untrained model with zero weights (uniform phi) for the given environment.
AbstractionModel make_model(EnvKind kind, AbstractPolicyTable policy,
                            const std::vector<int>& hidden = {64, 64});

// Likelihood batch for the given quadruples (normalised states, per-sample
// cluster weights).
LikelihoodBatch<double> make_batch(const AbstractionModel& model, const Dataset& d,
                                   std::span<const std::size_t> rows);

double dataset_loss(const AbstractionModel& model, const Dataset& d);

// Minibatch Adam on the negative log marginal likelihood of the expert
// actions. Returns the parameters with the lowest full-dataset loss seen,
// including the initial ones.
AbstractionModel train(const Dataset& dataset, const AbstractPolicyTable& policy,
                       const TrainConfig& cfg, Rng& rng);

enum class PhiMode { Argmax, Sample };

Eigen::VectorXd phi(const AbstractionModel& model, const State& s);
// Argmax breaks exact ties toward the lowest cluster; Sample requires rng.
AbstractState phi_map(const AbstractionModel& model, const State& s, PhiMode mode = PhiMode::Argmax,
                      Rng* rng = nullptr);
// sum_c phi(c|s) pi(a|c,k)
Eigen::VectorXd marginal_action_dist(const AbstractionModel& model, const State& s, int task_id);

// Throws DimensionMismatch when the model was built for another environment.
void require_compatible(const AbstractionModel& model, const TaskConfig& task);

void save_model(const AbstractionModel& model, const std::string& path);
AbstractionModel load_model(const std::string& path,
                            const std::optional<ModelMeta>& expected = std::nullopt);

void save_loss_trace(const AbstractionModel& model, const std::string& path);

}  // namespace alab

#endif  // ALAB_ABSTRACTION_HPP_
