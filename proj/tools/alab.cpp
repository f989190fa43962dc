#include <CLI11.hpp>

#include <iostream>

#include "alab/experiments.hpp"

namespace {

struct Options {
  std::string config;
  std::string out;
  std::string model;
  std::optional<long long> seed;
  std::optional<int> seeds;
  std::optional<int> episodes;
  std::optional<int> resolution;
  std::optional<int> threads;
};

void add_common(CLI::App* cmd, Options& o) {
  cmd->add_option("--config", o.config, "Key-value config file")->check(CLI::ExistingFile);
  cmd->add_option("--out", o.out, "Output directory")->required();
  cmd->add_option("--seed", o.seed, "Base seed");
  cmd->add_option("--seeds", o.seeds, "Number of seeds");
  cmd->add_option("--episodes", o.episodes, "Episodes per run (per round for Cart Pole transfer)");
  cmd->add_option("--threads", o.threads, "Worker threads (0 = all cores)");
}

alab::ExperimentConfig resolve(alab::Experiment e, const Options& o) {
  alab::KeyValues kv;
  if (!o.config.empty()) kv = alab::KeyValues::load(o.config);
  if (o.seed) kv.set("seed", std::to_string(*o.seed));
  if (o.seeds) kv.set("seeds", std::to_string(*o.seeds));
  if (o.episodes) kv.set("episodes", std::to_string(*o.episodes));
  if (o.resolution) kv.set("resolution", std::to_string(*o.resolution));
  if (o.threads) kv.set("threads", std::to_string(*o.threads));
  if (!o.model.empty()) kv.set("model", o.model);
  alab::ExperimentConfig cfg = alab::make_config(e, kv);
  cfg.out_dir = o.out;
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Learned state abstractions for transfer in continuous control"};
  app.require_subcommand(1);
  Options o;

  const std::vector<std::pair<alab::Experiment, std::string>> verbs{
      {alab::Experiment::SingleTask, "Train phi and run Q-learning on the same task"},
      {alab::Experiment::Transfer, "Train phi on some tasks, learn on a held-out one"},
      {alab::Experiment::SampleSweep, "Final-episode reward against training set size"},
      {alab::Experiment::Analysis, "Measure the KL loss and certify the value bounds"},
      {alab::Experiment::DumpAbstraction, "Write the cluster map of a Puddle World model"}};
  std::vector<std::pair<CLI::App*, alab::Experiment>> commands;
  for (const auto& [e, help] : verbs) {
    CLI::App* cmd = app.add_subcommand(alab::to_string(e), help);
    add_common(cmd, o);
    if (e == alab::Experiment::Analysis || e == alab::Experiment::DumpAbstraction)
      cmd->add_option("--model", o.model, "Trained model file")->check(CLI::ExistingFile);
    if (e == alab::Experiment::DumpAbstraction)
      cmd->add_option("--resolution", o.resolution, "Grid cells per axis");
    commands.emplace_back(cmd, e);
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  alab::Experiment chosen = alab::Experiment::SingleTask;
  for (const auto& [cmd, e] : commands)
    if (cmd->parsed()) chosen = e;

  try {
    const alab::ExperimentConfig cfg = resolve(chosen, o);
    alab::run_experiment(cfg);
    std::cout << "wrote " << cfg.out_dir << '\n';
    return 0;
  } catch (const alab::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (const alab::ParseError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (const alab::StageError& e) {
    std::cerr << "stage " << e.stage() << " failed: " << e.what() << '\n';
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "stage output failed: " << e.what() << '\n';
    return 3;
  }
}
