#ifndef ALAB_EXPERIMENTS_HPP_
#define ALAB_EXPERIMENTS_HPP_

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "alab/agents.hpp"
#include "alab/analysis.hpp"

namespace alab {

enum class Experiment { SingleTask, Transfer, SampleSweep, Analysis, DumpAbstraction };

std::string to_string(Experiment e);
Experiment parse_experiment(const std::string& s);

// A failure inside one protocol stage; the CLI reports the stage and exits 3.
class StageError : public std::runtime_error {
 public:
  StageError(std::string stage, const std::string& what)
      : std::runtime_error(stage + ": " + what), stage_(std::move(stage)) {}
  const std::string& stage() const { return stage_; }

 private:
  std::string stage_;
};

struct ExperimentConfig {
  Experiment experiment = Experiment::SingleTask;
  TaskConfig task;
  int seeds = 25;
  std::uint64_t seed = 0;
  int episodes = 100;
  int samples = 4000;
  Sampler sampler = Sampler::UniformState;
  TrainConfig train;
  QConfig q;
  PolicyMode policy_mode = PolicyMode::ActionTuple;
  std::optional<int> budget;
  bool linear_normalise = false;

  // Cart Pole transfer
  int rounds = 20;
  std::vector<double> gravities{9.8, 5.0, 6.0, 8.0, 12.0};

  // Sample sweep
  std::vector<int> sweep_sizes{1, 501, 1001, 1501, 2001, 2501, 3001, 3501, 4001, 4501};

  // Analysis
  int grid_resolution = 20;
  int heldout_states = 2000;
  int rademacher_states = 200;
  int rademacher_draws = 5;
  RademacherConfig rademacher;
  double delta_prob = 0.05;
  int mc_episodes = 200;

  // Dump
  int resolution = 100;
  std::string model_path;

  int threads = 0;  // 0: hardware concurrency
  std::string out_dir;
};

// Protocol defaults for (experiment, environment), then every key in `kv`
// applied on top. Unknown keys and invalid values raise ConfigError.
ExperimentConfig make_config(Experiment e, const KeyValues& kv);
void validate(const ExperimentConfig& cfg);
// Round-trippable snapshot of every setting.
KeyValues to_key_values(const ExperimentConfig& cfg);

// Runs fn(i) for i in [0, count) on a shared-nothing worker pool. The first
// exception thrown by a worker is rethrown after all workers stop.
void parallel_for(int count, int threads, const std::function<void(int)>& fn);

struct AggregateRow {
  int episode = 0;
  double cum_mean = 0, cum_ci = 0;
  double return_mean = 0, return_ci = 0;
  double steps_mean = 0, steps_ci = 0;
  double success_rate = 0;
};

// Mean and 95% normal-approximation half-width: 1.96 sd / sqrt(n); 0 for n = 1.
std::pair<double, double> mean_ci(const std::vector<double>& xs);
std::vector<AggregateRow> aggregate(const std::vector<LearningCurve>& curves);
void save_aggregate(const std::vector<AggregateRow>& rows, const std::string& path);

struct SingleTaskResult {
  std::vector<LearningCurve> q_phi, linear_q;
  std::vector<double> final_losses;
};

struct TransferResult {
  std::vector<LearningCurve> q_phi, linear_q;
  std::vector<Corner> held_out;                 // Puddle
  std::vector<std::vector<double>> round_gravity;  // Cart Pole, per seed
};

struct SweepPoint {
  int n = 0;
  std::vector<double> final_returns;  // one per seed
  double mean = 0, ci = 0;
};

struct DumpResult {
  std::vector<int> clusters;  // row-major over y then x, resolution^2 entries
  int resolution = 0;
  double coherence = 0;
};

SingleTaskResult run_single_task(const ExperimentConfig& cfg);
TransferResult run_transfer(const ExperimentConfig& cfg);
std::vector<SweepPoint> run_sample_sweep(const ExperimentConfig& cfg);
BoundReport run_analysis(const ExperimentConfig& cfg);
DumpResult run_dump_abstraction(const ExperimentConfig& cfg);

// Argmax cluster on the resolution x resolution grid of cell centres.
DumpResult dump_abstraction(const AbstractionModel& model, int resolution);
// Fraction of cells whose 4-neighbours all share the cell's cluster.
double spatial_coherence(const std::vector<int>& clusters, int resolution);

// Trains the transfer abstraction of one seed: all family tasks except
// `held_out`. Throws when the dataset contains the held-out task.
AbstractionModel train_transfer_model(const ExperimentConfig& cfg, Corner held_out, Rng& rng);

// git blob hash: sha1("blob <size>\0" + content), lowercase hex.
std::string git_blob_hash(const std::string& content);

// Executes the configured experiment and writes its artifacts into
// cfg.out_dir (config.txt, manifest.txt, curves_*.csv, report.txt).
void run_experiment(const ExperimentConfig& cfg);

}  // namespace alab

#endif  // ALAB_EXPERIMENTS_HPP_
