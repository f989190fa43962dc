#include "alab/experiments.hpp"

#include <openssl/sha.h>

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>

namespace alab {

namespace {

std::string num(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

std::string fmt17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

template <class T>
std::string join(const std::vector<T>& xs) {
  std::string out;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    if (i) out += ',';
    if constexpr (std::is_floating_point_v<T>)
      out += num(xs[i]);
    else
      out += std::to_string(xs[i]);
  }
  return out;
}

std::vector<double> split_doubles(const std::string& key, const std::string& text) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t pos = 0;
      out.push_back(std::stod(item, &pos));
      if (item.find_first_not_of(" \t", pos) != std::string::npos) throw std::invalid_argument("");
    } catch (const std::exception&) {
      throw ConfigError("key '" + key + "': bad list entry '" + item + "'");
    }
  }
  return out;
}

std::vector<int> split_ints(const std::string& key, const std::string& text) {
  std::vector<int> out;
  for (double v : split_doubles(key, text)) {
    if (v != std::floor(v)) throw ConfigError("key '" + key + "': expected integers");
    out.push_back(static_cast<int>(v));
  }
  return out;
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "1" || v == "true") return true;
  if (v == "0" || v == "false") return false;
  throw ConfigError("key '" + key + "': expected true/false, got " + v);
}

const std::set<std::string>& task_keys() {
  static const std::set<std::string> keys{"env_kind", "goal_corner", "gravity",
                                          "noise_std", "horizon",     "puddle_rects"};
  return keys;
}

const std::set<std::string>& experiment_keys() {
  static const std::set<std::string> keys{
      "experiment",       "seeds",           "seed",              "episodes",
      "samples",          "sampler",         "lr",                "epochs",
      "batch_size",       "hidden",          "min_improvement",   "patience",
      "alpha",            "gamma",           "epsilon",           "tie_break",
      "policy_mode",      "budget",          "linear_normalise",  "rounds",
      "gravities",        "sweep_sizes",     "grid_resolution",   "heldout_states",
      "rademacher_states", "rademacher_draws", "rademacher_steps", "rademacher_lr",
      "rademacher_restarts", "delta_prob",   "mc_episodes",       "resolution",
      "model",            "threads"};
  return keys;
}

template <class F>
auto stage(const char* name, F&& f) -> decltype(f()) {
  try {
    return f();
  } catch (const StageError&) {
    throw;
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    throw StageError(name, e.what());
  }
}

Rng seed_rng(const ExperimentConfig& cfg, int index, std::uint64_t stream = 0) {
  return Rng(derive_seed(derive_seed(cfg.seed, static_cast<std::uint64_t>(index)), stream));
}

constexpr std::uint64_t kLinearStream = 1;

std::vector<State> uniform_states(EnvKind kind, int n, Rng& rng) {
  std::vector<State> out;
  out.reserve(n);
  for (int i = 0; i < n; ++i) out.push_back(sample_uniform_state(kind, rng));
  return out;
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << text;
  if (!out) throw std::runtime_error("error writing " + path);
}

std::string read_text(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

std::string to_string(Experiment e) {
  switch (e) {
    case Experiment::SingleTask: return "single-task";
    case Experiment::Transfer: return "transfer";
    case Experiment::SampleSweep: return "sample-sweep";
    case Experiment::Analysis: return "analysis";
    case Experiment::DumpAbstraction: return "dump-abstraction";
  }
  return "single-task";
}

Experiment parse_experiment(const std::string& s) {
  for (Experiment e : {Experiment::SingleTask, Experiment::Transfer, Experiment::SampleSweep,
                       Experiment::Analysis, Experiment::DumpAbstraction})
    if (to_string(e) == s) return e;
  throw ConfigError("unknown experiment: " + s);
}

ExperimentConfig make_config(Experiment e, const KeyValues& kv) {
  for (const auto& [key, value] : kv.entries())
    if (!task_keys().count(key) && !experiment_keys().count(key))
      throw ConfigError("unknown config key: " + key);
  if (auto named = kv.get("experiment"); named && parse_experiment(*named) != e)
    throw ConfigError("config is for experiment '" + *named + "', not '" + to_string(e) + "'");

  ExperimentConfig cfg;
  cfg.experiment = e;
  cfg.task = task_from_key_values(kv);
  const bool puddle = cfg.task.env_kind == EnvKind::PuddleWorld;

  if (puddle) {
    cfg.samples = 4000;
    cfg.sampler = Sampler::UniformState;
    cfg.seeds = 25;
    cfg.episodes = 100;
    if (e == Experiment::Transfer || e == Experiment::DumpAbstraction) {
      cfg.episodes = 250;
      cfg.policy_mode = PolicyMode::Budget;
      cfg.budget = 81;
    }
    if (e == Experiment::SampleSweep) cfg.seeds = 10;
    if (e == Experiment::Analysis || e == Experiment::DumpAbstraction) cfg.seeds = 1;
  } else {
    cfg.samples = 1000;
    cfg.sampler = Sampler::OnPolicy;
    cfg.seeds = 20;
    cfg.episodes = e == Experiment::Transfer ? 200 : 50;
  }

  cfg.seeds = static_cast<int>(kv.get_int("seeds", cfg.seeds));
  cfg.seed = static_cast<std::uint64_t>(kv.get_int("seed", 0));
  cfg.episodes = static_cast<int>(kv.get_int("episodes", cfg.episodes));
  cfg.samples = static_cast<int>(kv.get_int("samples", cfg.samples));
  if (auto s = kv.get("sampler")) {
    if (*s == "uniform") cfg.sampler = Sampler::UniformState;
    else if (*s == "on_policy") cfg.sampler = Sampler::OnPolicy;
    else throw ConfigError("key 'sampler': expected uniform or on_policy, got " + *s);
  }
  cfg.train.adam.lr = kv.get_double("lr", cfg.train.adam.lr);
  cfg.train.epochs = static_cast<int>(kv.get_int("epochs", cfg.train.epochs));
  cfg.train.batch_size = static_cast<int>(kv.get_int("batch_size", cfg.train.batch_size));
  if (auto h = kv.get("hidden")) cfg.train.hidden = split_ints("hidden", *h);
  cfg.train.min_improvement = kv.get_double("min_improvement", cfg.train.min_improvement);
  cfg.train.patience = static_cast<int>(kv.get_int("patience", cfg.train.patience));
  cfg.q.alpha = kv.get_double("alpha", cfg.q.alpha);
  cfg.q.gamma = kv.get_double("gamma", cfg.q.gamma);
  cfg.q.epsilon = kv.get_double("epsilon", cfg.q.epsilon);
  if (auto t = kv.get("tie_break")) {
    if (*t == "lowest") cfg.q.tie_break = TieBreak::Lowest;
    else if (*t == "random") cfg.q.tie_break = TieBreak::Random;
    else throw ConfigError("key 'tie_break': expected lowest or random, got " + *t);
  }
  if (auto m = kv.get("policy_mode")) {
    if (*m == "action_tuple") cfg.policy_mode = PolicyMode::ActionTuple;
    else if (*m == "budget") cfg.policy_mode = PolicyMode::Budget;
    else throw ConfigError("key 'policy_mode': expected action_tuple or budget, got " + *m);
  }
  if (kv.has("budget")) cfg.budget = static_cast<int>(kv.get_int("budget", 0));
  if (cfg.policy_mode == PolicyMode::ActionTuple) cfg.budget.reset();
  if (auto v = kv.get("linear_normalise")) cfg.linear_normalise = parse_bool("linear_normalise", *v);
  cfg.rounds = static_cast<int>(kv.get_int("rounds", cfg.rounds));
  if (auto g = kv.get("gravities")) cfg.gravities = split_doubles("gravities", *g);
  if (auto s = kv.get("sweep_sizes")) cfg.sweep_sizes = split_ints("sweep_sizes", *s);
  cfg.grid_resolution = static_cast<int>(kv.get_int("grid_resolution", cfg.grid_resolution));
  cfg.heldout_states = static_cast<int>(kv.get_int("heldout_states", cfg.heldout_states));
  cfg.rademacher_states = static_cast<int>(kv.get_int("rademacher_states", cfg.rademacher_states));
  cfg.rademacher_draws = static_cast<int>(kv.get_int("rademacher_draws", cfg.rademacher_draws));
  cfg.rademacher.hidden = cfg.train.hidden;
  cfg.rademacher.steps = static_cast<int>(kv.get_int("rademacher_steps", cfg.rademacher.steps));
  cfg.rademacher.lr = kv.get_double("rademacher_lr", cfg.rademacher.lr);
  cfg.rademacher.restarts =
      static_cast<int>(kv.get_int("rademacher_restarts", cfg.rademacher.restarts));
  cfg.delta_prob = kv.get_double("delta_prob", cfg.delta_prob);
  cfg.mc_episodes = static_cast<int>(kv.get_int("mc_episodes", cfg.mc_episodes));
  cfg.resolution = static_cast<int>(kv.get_int("resolution", cfg.resolution));
  cfg.model_path = kv.get_string("model", "");
  cfg.threads = static_cast<int>(kv.get_int("threads", 0));
  validate(cfg);
  return cfg;
}

void validate(const ExperimentConfig& cfg) {
  cfg.task.validate();
  const bool puddle = cfg.task.env_kind == EnvKind::PuddleWorld;
  if (cfg.seeds < 1) throw ConfigError("seeds must be >= 1");
  if (cfg.episodes < 1) throw ConfigError("episodes must be >= 1");
  if (cfg.samples < 1) throw ConfigError("samples must be >= 1");
  if (cfg.threads < 0) throw ConfigError("threads must be >= 0");
  if (!(cfg.train.adam.lr > 0)) throw ConfigError("lr must be > 0");
  if (cfg.train.epochs < 0 || cfg.train.batch_size < 1 || cfg.train.patience < 1)
    throw ConfigError("epochs >= 0, batch_size >= 1 and patience >= 1 required");
  for (int h : cfg.train.hidden)
    if (h < 1) throw ConfigError("hidden widths must be >= 1");
  if (!(cfg.q.alpha > 0 && cfg.q.alpha <= 1)) throw ConfigError("alpha must be in (0,1]");
  if (!(cfg.q.gamma > 0 && cfg.q.gamma < 1)) throw ConfigError("gamma must be in (0,1)");
  if (!(cfg.q.epsilon >= 0 && cfg.q.epsilon <= 1)) throw ConfigError("epsilon must be in [0,1]");
  if (cfg.policy_mode == PolicyMode::Budget &&
      (!cfg.budget || *cfg.budget < action_count(cfg.task.env_kind)))
    throw ConfigError("budget mode needs budget >= number of actions");
  if (cfg.rounds < 1) throw ConfigError("rounds must be >= 1");
  if (cfg.gravities.empty()) throw ConfigError("gravities must not be empty");
  for (double g : cfg.gravities)
    if (!(g > 0)) throw ConfigError("gravities must be > 0");
  if (cfg.sweep_sizes.empty()) throw ConfigError("sweep_sizes must not be empty");
  for (int n : cfg.sweep_sizes)
    if (n < 1) throw ConfigError("sweep sizes must be >= 1");
  if (cfg.grid_resolution < 2 || cfg.resolution < 1) throw ConfigError("resolution too small");
  if (cfg.heldout_states < 1 || cfg.rademacher_states < 1 || cfg.rademacher_draws < 1 ||
      cfg.rademacher.steps < 0 || cfg.rademacher.restarts < 1 || cfg.mc_episodes < 2)
    throw ConfigError("analysis sizes out of range");
  if (!(cfg.delta_prob > 0 && cfg.delta_prob < 1)) throw ConfigError("delta_prob must be in (0,1)");
  if (!cfg.model_path.empty() && !std::filesystem::exists(cfg.model_path))
    throw ConfigError("model file does not exist: " + cfg.model_path);
  switch (cfg.experiment) {
    case Experiment::SampleSweep:
    case Experiment::Analysis:
      if (!puddle) throw ConfigError(to_string(cfg.experiment) + " requires the Puddle World");
      break;
    case Experiment::DumpAbstraction:
      if (!puddle) throw ConfigError("dump-abstraction requires a 2-dimensional state space");
      break;
    default: break;
  }
}

KeyValues to_key_values(const ExperimentConfig& cfg) {
  KeyValues kv = to_key_values(cfg.task);
  kv.set("experiment", to_string(cfg.experiment));
  kv.set("seeds", std::to_string(cfg.seeds));
  kv.set("seed", std::to_string(cfg.seed));
  kv.set("episodes", std::to_string(cfg.episodes));
  kv.set("samples", std::to_string(cfg.samples));
  kv.set("sampler", cfg.sampler == Sampler::UniformState ? "uniform" : "on_policy");
  kv.set("lr", num(cfg.train.adam.lr));
  kv.set("epochs", std::to_string(cfg.train.epochs));
  kv.set("batch_size", std::to_string(cfg.train.batch_size));
  kv.set("hidden", join(cfg.train.hidden));
  kv.set("min_improvement", num(cfg.train.min_improvement));
  kv.set("patience", std::to_string(cfg.train.patience));
  kv.set("alpha", num(cfg.q.alpha));
  kv.set("gamma", num(cfg.q.gamma));
  kv.set("epsilon", num(cfg.q.epsilon));
  kv.set("tie_break", cfg.q.tie_break == TieBreak::Lowest ? "lowest" : "random");
  kv.set("policy_mode", cfg.policy_mode == PolicyMode::ActionTuple ? "action_tuple" : "budget");
  if (cfg.budget) kv.set("budget", std::to_string(*cfg.budget));
  kv.set("linear_normalise", cfg.linear_normalise ? "true" : "false");
  kv.set("rounds", std::to_string(cfg.rounds));
  kv.set("gravities", join(cfg.gravities));
  kv.set("sweep_sizes", join(cfg.sweep_sizes));
  kv.set("grid_resolution", std::to_string(cfg.grid_resolution));
  kv.set("heldout_states", std::to_string(cfg.heldout_states));
  kv.set("rademacher_states", std::to_string(cfg.rademacher_states));
  kv.set("rademacher_draws", std::to_string(cfg.rademacher_draws));
  kv.set("rademacher_steps", std::to_string(cfg.rademacher.steps));
  kv.set("rademacher_lr", num(cfg.rademacher.lr));
  kv.set("rademacher_restarts", std::to_string(cfg.rademacher.restarts));
  kv.set("delta_prob", num(cfg.delta_prob));
  kv.set("mc_episodes", std::to_string(cfg.mc_episodes));
  kv.set("resolution", std::to_string(cfg.resolution));
  if (!cfg.model_path.empty()) kv.set("model", cfg.model_path);
  return kv;
}

void parallel_for(int count, int threads, const std::function<void(int)>& fn) {
  if (count <= 0) return;
  if (threads <= 0) threads = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
  threads = std::min(threads, count);
  std::atomic<int> next{0};
  std::atomic<bool> stop{false};
  std::exception_ptr error;
  int error_index = count;
  std::mutex mu;
  const auto worker = [&] {
    for (int i = next++; i < count && !stop; i = next++) {
      try {
        fn(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(mu);
        if (i < error_index) {
          error_index = i;
          error = std::current_exception();
        }
        stop = true;
      }
    }
  };
  if (threads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  if (error) std::rethrow_exception(error);
}

std::pair<double, double> mean_ci(const std::vector<double>& xs) {
  if (xs.empty()) return {0.0, 0.0};
  const double n = static_cast<double>(xs.size());
  double mean = 0;
  for (double x : xs) mean += x;
  mean /= n;
  if (xs.size() == 1) return {mean, 0.0};
  double ss = 0;
  for (double x : xs) ss += (x - mean) * (x - mean);
  return {mean, 1.96 * std::sqrt(ss / (n - 1)) / std::sqrt(n)};
}

std::vector<AggregateRow> aggregate(const std::vector<LearningCurve>& curves) {
  if (curves.empty()) return {};
  std::size_t len = curves.front().size();
  for (const auto& c : curves)
    if (c.size() != len) throw DimensionMismatch("aggregate: curves differ in length");
  std::vector<AggregateRow> rows(len);
  std::vector<double> cum(curves.size()), ret(curves.size()), steps(curves.size());
  for (std::size_t e = 0; e < len; ++e) {
    double succ = 0;
    for (std::size_t s = 0; s < curves.size(); ++s) {
      cum[s] = curves[s][e].cum_reward;
      ret[s] = curves[s][e].ep_return;
      steps[s] = curves[s][e].steps;
      succ += curves[s][e].success ? 1.0 : 0.0;
    }
    AggregateRow& r = rows[e];
    r.episode = static_cast<int>(e);
    std::tie(r.cum_mean, r.cum_ci) = mean_ci(cum);
    std::tie(r.return_mean, r.return_ci) = mean_ci(ret);
    std::tie(r.steps_mean, r.steps_ci) = mean_ci(steps);
    r.success_rate = succ / static_cast<double>(curves.size());
  }
  return rows;
}

void save_aggregate(const std::vector<AggregateRow>& rows, const std::string& path) {
  std::ostringstream out;
  out << "episode,cum_mean,cum_lo,cum_hi,return_mean,return_lo,return_hi,steps_mean,steps_lo,"
         "steps_hi,success_rate\n";
  for (const AggregateRow& r : rows) {
    out << r.episode << ',' << fmt17(r.cum_mean) << ',' << fmt17(r.cum_mean - r.cum_ci) << ','
        << fmt17(r.cum_mean + r.cum_ci) << ',' << fmt17(r.return_mean) << ','
        << fmt17(r.return_mean - r.return_ci) << ',' << fmt17(r.return_mean + r.return_ci) << ','
        << fmt17(r.steps_mean) << ',' << fmt17(r.steps_mean - r.steps_ci) << ','
        << fmt17(r.steps_mean + r.steps_ci) << ',' << fmt17(r.success_rate) << '\n';
  }
  write_text(path, out.str());
}

SingleTaskResult run_single_task(const ExperimentConfig& cfg) {
  validate(cfg);
  SingleTaskResult res;
  res.q_phi.resize(cfg.seeds);
  res.linear_q.resize(cfg.seeds);
  res.final_losses.resize(cfg.seeds);
  parallel_for(cfg.seeds, cfg.threads, [&](int i) {
    Rng rng = seed_rng(cfg, i);
    const Dataset d = stage("collect", [&] {
      return collect_dataset({cfg.task}, cfg.samples, cfg.sampler, rng);
    });
    const AbstractionModel model = stage("train", [&] {
      const auto table = build_policy_table(action_count(cfg.task.env_kind), 1, cfg.policy_mode,
                                            cfg.budget, rng);
      return train(d, table, cfg.train, rng);
    });
    res.final_losses[i] = model.loss_trace[model.best_epoch];
    res.q_phi[i] = stage("q_phi", [&] { return run_q_phi(model, cfg.task, cfg.episodes, cfg.q, rng).curve; });
    Rng lin = seed_rng(cfg, i, kLinearStream);
    res.linear_q[i] = stage("linear_q", [&] {
      return run_linear_q(cfg.task, cfg.episodes, cfg.q, lin, cfg.linear_normalise).curve;
    });
  });
  return res;
}

AbstractionModel train_transfer_model(const ExperimentConfig& cfg, Corner held_out, Rng& rng) {
  std::vector<TaskConfig> tasks;
  for (const TaskConfig& t : task_family(cfg.task))
    if (t.goal_corner != held_out) tasks.push_back(t);
  const Dataset d = stage("collect", [&] {
    return collect_dataset(tasks, cfg.samples, cfg.sampler, rng);
  });
  for (const Quadruple& q : d.quadruples) {
    if (q.task_id < 0 || q.task_id >= static_cast<int>(tasks.size()) ||
        tasks[q.task_id].goal_corner == held_out)
      throw StageError("audit", "held-out goal " + to_string(held_out) + " found in training data");
  }
  return stage("train", [&] {
    const auto table = build_policy_table(action_count(cfg.task.env_kind),
                                          static_cast<int>(tasks.size()), cfg.policy_mode,
                                          cfg.budget, rng);
    return train(d, table, cfg.train, rng);
  });
}

TransferResult run_transfer(const ExperimentConfig& cfg) {
  validate(cfg);
  TransferResult res;
  res.q_phi.resize(cfg.seeds);
  res.linear_q.resize(cfg.seeds);
  const bool puddle = cfg.task.env_kind == EnvKind::PuddleWorld;
  if (puddle)
    res.held_out.resize(cfg.seeds);
  else
    res.round_gravity.resize(cfg.seeds);

  parallel_for(cfg.seeds, cfg.threads, [&](int i) {
    Rng rng = seed_rng(cfg, i);
    Rng lin = seed_rng(cfg, i, kLinearStream);
    if (puddle) {
      const auto family = task_family(cfg.task);
      std::uniform_int_distribution<int> pick(0, static_cast<int>(family.size()) - 1);
      const TaskConfig test = family[pick(rng)];
      res.held_out[i] = test.goal_corner;
      const AbstractionModel model = train_transfer_model(cfg, test.goal_corner, rng);
      res.q_phi[i] = stage("q_phi", [&] { return run_q_phi(model, test, cfg.episodes, cfg.q, rng).curve; });
      res.linear_q[i] = stage("linear_q", [&] {
        return run_linear_q(test, cfg.episodes, cfg.q, lin, cfg.linear_normalise).curve;
      });
      return;
    }
    const Dataset d = stage("collect", [&] {
      return collect_dataset({cfg.task}, cfg.samples, cfg.sampler, rng);
    });
    const AbstractionModel model = stage("train", [&] {
      const auto table = build_policy_table(action_count(cfg.task.env_kind), 1, cfg.policy_mode,
                                            cfg.budget, rng);
      return train(d, table, cfg.train, rng);
    });
    QTable q = QTable::zeros(model.num_clusters(), action_count(cfg.task.env_kind), cfg.q);
    LinearQ lq = LinearQ::zeros(cfg.task.env_kind, cfg.q, cfg.linear_normalise);
    std::uniform_int_distribution<int> pick(0, static_cast<int>(cfg.gravities.size()) - 1);
    for (int r = 0; r < cfg.rounds; ++r) {
      TaskConfig task = cfg.task;
      task.gravity = cfg.gravities[pick(rng)];
      res.round_gravity[i].push_back(task.gravity);
      stage("q_phi", [&] {
        append_curve(res.q_phi[i], continue_q_phi(model, task, q, cfg.episodes, rng));
      });
      stage("linear_q", [&] {
        append_curve(res.linear_q[i], run_linear_q_on(TaskEnv{task}, lq, cfg.episodes, lin));
      });
    }
  });
  return res;
}

std::vector<SweepPoint> run_sample_sweep(const ExperimentConfig& cfg) {
  validate(cfg);
  const int sizes = static_cast<int>(cfg.sweep_sizes.size());
  std::vector<SweepPoint> points(sizes);
  for (int k = 0; k < sizes; ++k) {
    points[k].n = cfg.sweep_sizes[k];
    points[k].final_returns.resize(cfg.seeds);
  }
  parallel_for(sizes * cfg.seeds, cfg.threads, [&](int job) {
    const int k = job / cfg.seeds, i = job % cfg.seeds;
    Rng rng = seed_rng(cfg, i, 100 + static_cast<std::uint64_t>(k));
    const Dataset d = stage("collect", [&] {
      return collect_dataset({cfg.task}, points[k].n, cfg.sampler, rng);
    });
    const AbstractionModel model = stage("train", [&] {
      const auto table = build_policy_table(action_count(cfg.task.env_kind), 1, cfg.policy_mode,
                                            cfg.budget, rng);
      return train(d, table, cfg.train, rng);
    });
    const LearningCurve c =
        stage("q_phi", [&] { return run_q_phi(model, cfg.task, cfg.episodes, cfg.q, rng).curve; });
    points[k].final_returns[i] = c.back().ep_return;
  });
  for (SweepPoint& p : points) std::tie(p.mean, p.ci) = mean_ci(p.final_returns);
  return points;
}

BoundReport run_analysis(const ExperimentConfig& cfg) {
  validate(cfg);
  Rng rng = seed_rng(cfg, 0);
  const Dataset d = stage("collect", [&] {
    return collect_dataset({cfg.task}, cfg.samples, cfg.sampler, rng);
  });
  const AbstractionModel model = stage("train", [&] {
    if (!cfg.model_path.empty())
      return load_model(cfg.model_path, ModelMeta{cfg.task.env_kind, state_dim(cfg.task.env_kind),
                                                  action_count(cfg.task.env_kind), 1});
    const auto table = build_policy_table(action_count(cfg.task.env_kind), 1, cfg.policy_mode,
                                          cfg.budget, rng);
    return train(d, table, cfg.train, rng);
  });

  BoundReport r;
  const PolicyFn expert = point_mass_expert(cfg.task);
  stage("measure", [&] {
    std::vector<State> train_states;
    for (const Quadruple& q : d.quadruples) train_states.push_back(q.state);
    const DeltaMeasurement m = measure_delta(model, expert, train_states, 0);
    r.delta = m.delta;
    r.mean_kl = m.mean_kl;
    r.mean_l1 = m.mean_l1;
    r.pinsker_holds = m.pinsker_holds;
    r.training_nll = dataset_loss(model, d);
    const auto heldout = uniform_states(cfg.task.env_kind, cfg.heldout_states, rng);
    r.heldout_mean_l1 = measure_delta(model, expert, heldout, 0).mean_l1;
    r.n = static_cast<long long>(d.size());
  });
  stage("grid", [&] {
    const GridMdp grid = solve_grid_mdp(cfg.task, cfg.grid_resolution, cfg.q.gamma);
    const Lemma1Check lemma =
        verify_lemma1(model, expert, grid, uniform_state_distribution(grid), 0);
    r.lemma_k = lemma.k;
    r.lemma_bound = lemma.lemma_bound;
    r.measured_value_gap = lemma.measured_value_gap;
    r.lemma_holds = lemma.holds;
    const State start = reset(cfg.task, rng);
    TaskConfig noise_free = cfg.task;
    noise_free.noise_std = 0;
    const PolicyFn learner = abstraction_policy(model, 0);
    const MonteCarloValue mc =
        monte_carlo_value(noise_free, learner, start, cfg.mc_episodes, cfg.q.gamma, rng);
    r.mc_value = mc.mean;
    r.mc_std_error = mc.std_error;
    r.grid_value = grid.evaluate(grid.tabulate(learner))(grid.cell_of(start));
  });
  stage("rademacher", [&] {
    const int n = std::min<int>(cfg.rademacher_states, static_cast<int>(d.size()));
    Eigen::MatrixXd states(model.meta.state_dim, n);
    for (int j = 0; j < n; ++j) states.col(j) = model.normalise(d.quadruples[j].state);
    r.rademacher_estimate =
        empirical_rademacher(cfg.rademacher, states, model.meta.action_count,
                             cfg.rademacher_draws, rng)
            .estimate;
  });
  r.delta_prob = cfg.delta_prob;
  const TheoremBound tb = theorem_bound(r.delta, r.rademacher_estimate, r.n, r.delta_prob);
  r.theorem_bound = tb.stated;
  r.theorem_bound_pinsker = tb.pinsker;
  return r;
}

DumpResult dump_abstraction(const AbstractionModel& model, int resolution) {
  if (model.meta.state_dim != 2)
    throw std::invalid_argument("dump_abstraction needs a 2-dimensional state space");
  if (resolution < 1) throw std::invalid_argument("resolution must be >= 1");
  DumpResult out;
  out.resolution = resolution;
  out.clusters.resize(static_cast<std::size_t>(resolution) * resolution);
  for (int j = 0; j < resolution; ++j)
    for (int i = 0; i < resolution; ++i)
      out.clusters[j * resolution + i] =
          phi_map(model, Eigen::Vector2d((i + 0.5) / resolution, (j + 0.5) / resolution)).cluster;
  out.coherence = spatial_coherence(out.clusters, resolution);
  return out;
}

double spatial_coherence(const std::vector<int>& clusters, int resolution) {
  if (resolution < 1 || clusters.size() != static_cast<std::size_t>(resolution) * resolution)
    throw DimensionMismatch("cluster grid does not match the resolution");
  int agree = 0;
  for (int j = 0; j < resolution; ++j) {
    for (int i = 0; i < resolution; ++i) {
      const int c = clusters[j * resolution + i];
      bool same = true;
      if (i > 0) same &= clusters[j * resolution + i - 1] == c;
      if (i + 1 < resolution) same &= clusters[j * resolution + i + 1] == c;
      if (j > 0) same &= clusters[(j - 1) * resolution + i] == c;
      if (j + 1 < resolution) same &= clusters[(j + 1) * resolution + i] == c;
      agree += same ? 1 : 0;
    }
  }
  return static_cast<double>(agree) / static_cast<double>(clusters.size());
}

DumpResult run_dump_abstraction(const ExperimentConfig& cfg) {
  validate(cfg);
  Rng rng = seed_rng(cfg, 0);
  const AbstractionModel model = stage("train", [&] {
    if (!cfg.model_path.empty()) return load_model(cfg.model_path);
    const auto family = task_family(cfg.task);
    std::uniform_int_distribution<int> pick(0, static_cast<int>(family.size()) - 1);
    return train_transfer_model(cfg, family[pick(rng)].goal_corner, rng);
  });
  return stage("dump", [&] { return dump_abstraction(model, cfg.resolution); });
}

std::string git_blob_hash(const std::string& content) {
  const std::string blob = "blob " + std::to_string(content.size()) + '\0' + content;
  unsigned char digest[SHA_DIGEST_LENGTH];
  SHA1(reinterpret_cast<const unsigned char*>(blob.data()), blob.size(), digest);
  static const char* hex = "0123456789abcdef";
  std::string out;
  for (unsigned char b : digest) {
    out += hex[b >> 4];
    out += hex[b & 15];
  }
  return out;
}

namespace {

void save_curves(const std::vector<LearningCurve>& curves, const std::string& dir,
                 const std::string& name) {
  for (std::size_t i = 0; i < curves.size(); ++i)
    save_curve(curves[i], dir + "/curves_" + name + "_seed" + std::to_string(i) + ".csv");
  save_aggregate(aggregate(curves), dir + "/curves_" + name + ".csv");
}

// Mean over seeds and over the last `window` episodes of `field`. For the
// episode return this is the slope of the mean cumulative-reward curve.
double tail_mean(const std::vector<LearningCurve>& curves, int window,
                 double (*field)(const EpisodeRecord&)) {
  double total = 0, count = 0;
  for (const auto& c : curves) {
    const int n = static_cast<int>(c.size());
    for (int e = std::max(0, n - window); e < n; ++e) {
      total += field(c[e]);
      count += 1;
    }
  }
  return count > 0 ? total / count : 0.0;
}

double ep_return(const EpisodeRecord& r) { return r.ep_return; }
double ep_steps(const EpisodeRecord& r) { return r.steps; }
double ep_success(const EpisodeRecord& r) { return r.success ? 1.0 : 0.0; }

}  // namespace

void run_experiment(const ExperimentConfig& cfg) {
  validate(cfg);
  if (cfg.out_dir.empty()) throw ConfigError("no output directory given");
  std::filesystem::create_directories(cfg.out_dir);
  const std::string dir = cfg.out_dir;
  const KeyValues snapshot = to_key_values(cfg);
  const std::string config_text = snapshot.to_string();
  write_text(dir + "/config.txt", config_text);

  std::ostringstream manifest;
  manifest << "experiment = " << to_string(cfg.experiment) << '\n'
           << "config_hash = " << git_blob_hash(config_text) << '\n';
  if (!cfg.model_path.empty())
    manifest << "model_hash = " << git_blob_hash(read_text(cfg.model_path)) << '\n';
  manifest << "base_seed = " << cfg.seed << '\n' << "seed_list = ";
  for (int i = 0; i < cfg.seeds; ++i)
    manifest << (i ? "," : "") << derive_seed(cfg.seed, static_cast<std::uint64_t>(i));
  manifest << '\n';
  for (const auto& [k, v] : snapshot.entries()) manifest << "config." << k << " = " << v << '\n';
  write_text(dir + "/manifest.txt", manifest.str());

  KeyValues report;
  switch (cfg.experiment) {
    case Experiment::SingleTask: {
      const SingleTaskResult res = run_single_task(cfg);
      save_curves(res.q_phi, dir, "q_phi");
      save_curves(res.linear_q, dir, "linear_q");
      const auto q = aggregate(res.q_phi), l = aggregate(res.linear_q);
      report.set("q_phi_final_cum_mean", fmt17(q.back().cum_mean));
      report.set("q_phi_final_cum_ci", fmt17(q.back().cum_ci));
      report.set("q_phi_slope_last50", fmt17(tail_mean(res.q_phi, 50, ep_return)));
      report.set("q_phi_success_last50", fmt17(tail_mean(res.q_phi, 50, ep_success)));
      report.set("q_phi_steps_last10", fmt17(tail_mean(res.q_phi, 10, ep_steps)));
      report.set("linear_q_final_cum_mean", fmt17(l.back().cum_mean));
      report.set("linear_q_final_cum_ci", fmt17(l.back().cum_ci));
      double loss = 0;
      for (double x : res.final_losses) loss += x;
      report.set("mean_training_loss", fmt17(loss / res.final_losses.size()));
      break;
    }
    case Experiment::Transfer: {
      const TransferResult res = run_transfer(cfg);
      save_curves(res.q_phi, dir, "q_phi");
      save_curves(res.linear_q, dir, "linear_q");
      std::ostringstream tasks;
      if (!res.held_out.empty()) {
        tasks << "seed,held_out\n";
        for (std::size_t i = 0; i < res.held_out.size(); ++i)
          tasks << i << ',' << to_string(res.held_out[i]) << '\n';
      } else {
        tasks << "seed,round,gravity\n";
        for (std::size_t i = 0; i < res.round_gravity.size(); ++i)
          for (std::size_t r = 0; r < res.round_gravity[i].size(); ++r)
            tasks << i << ',' << r << ',' << num(res.round_gravity[i][r]) << '\n';
      }
      write_text(dir + "/tasks.csv", tasks.str());
      const auto q = aggregate(res.q_phi);
      report.set("q_phi_final_cum_mean", fmt17(q.back().cum_mean));
      report.set("q_phi_success_last50", fmt17(tail_mean(res.q_phi, 50, ep_success)));
      report.set("linear_q_final_cum_mean", fmt17(aggregate(res.linear_q).back().cum_mean));
      break;
    }
    case Experiment::SampleSweep: {
      const auto points = run_sample_sweep(cfg);
      std::ostringstream agg, runs;
      agg << "n,mean,lo,hi\n";
      runs << "n,seed,final_return\n";
      for (const SweepPoint& p : points) {
        agg << p.n << ',' << fmt17(p.mean) << ',' << fmt17(p.mean - p.ci) << ','
            << fmt17(p.mean + p.ci) << '\n';
        for (std::size_t i = 0; i < p.final_returns.size(); ++i)
          runs << p.n << ',' << i << ',' << fmt17(p.final_returns[i]) << '\n';
        report.set("mean_n" + std::to_string(p.n), fmt17(p.mean));
      }
      write_text(dir + "/curves_sweep.csv", agg.str());
      write_text(dir + "/sweep_runs.csv", runs.str());
      break;
    }
    case Experiment::Analysis: {
      const BoundReport r = run_analysis(cfg);
      write_report(r, dir + "/report.txt");
      return;
    }
    case Experiment::DumpAbstraction: {
      const DumpResult res = run_dump_abstraction(cfg);
      std::ostringstream csv;
      csv << "x,y,cluster\n";
      for (int j = 0; j < res.resolution; ++j)
        for (int i = 0; i < res.resolution; ++i)
          csv << fmt17((i + 0.5) / res.resolution) << ',' << fmt17((j + 0.5) / res.resolution)
              << ',' << res.clusters[j * res.resolution + i] << '\n';
      write_text(dir + "/abstraction.csv", csv.str());
      report.set("resolution", std::to_string(res.resolution));
      report.set("spatial_coherence", fmt17(res.coherence));
      break;
    }
  }
  write_text(dir + "/report.txt", report.to_string());
}

}  // namespace alab
