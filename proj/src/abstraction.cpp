#include "alab/abstraction.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <numeric>

namespace alab {

namespace {

constexpr const char* kModelMagic = "alab-abstraction-model";
constexpr int kModelVersion = 1;

std::string fmt17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

void write_vector(std::ostream& out, const Eigen::Ref<const Eigen::VectorXd>& v) {
  for (Eigen::Index i = 0; i < v.size(); ++i) out << (i ? " " : "") << fmt17(v(i));
  out << '\n';
}

class ModelReader {
 public:
  explicit ModelReader(std::istream& in) : in_(in) {}

  void expect(const std::string& word) {
    std::string got;
    if (!(in_ >> got)) throw std::runtime_error("model file truncated: expected '" + word + "'");
    if (got != word)
      throw std::runtime_error("model file: expected '" + word + "', found '" + got + "'");
  }
  std::string word() {
    std::string w;
    if (!(in_ >> w)) throw std::runtime_error("model file truncated");
    return w;
  }
  long long integer() {
    const std::string w = word();
    try {
      std::size_t pos = 0;
      long long v = std::stoll(w, &pos);
      if (pos == w.size()) return v;
    } catch (const std::exception&) {
    }
    throw std::runtime_error("model file: expected an integer, found '" + w + "'");
  }
  double number() {
    const std::string w = word();
    char* end = nullptr;
    const double v = std::strtod(w.c_str(), &end);
    if (end != w.c_str() + w.size())
      throw std::runtime_error("model file: expected a number, found '" + w + "'");
    return v;
  }
  Eigen::VectorXd vector(Eigen::Index n) {
    Eigen::VectorXd v(n);
    for (Eigen::Index i = 0; i < n; ++i) v(i) = number();
    return v;
  }

 private:
  std::istream& in_;
};

std::string mode_name(PolicyMode m) { return m == PolicyMode::ActionTuple ? "action_tuple" : "budget"; }

PolicyMode parse_mode(const std::string& s) {
  if (s == "action_tuple") return PolicyMode::ActionTuple;
  if (s == "budget") return PolicyMode::Budget;
  throw std::runtime_error("model file: unknown policy mode '" + s + "'");
}

}  // namespace

ActionId AbstractPolicyTable::action_of(int cluster, int task) const {
  Eigen::Index best = 0;
  by_task[task].col(cluster).maxCoeff(&best);
  return ActionId{static_cast<int>(best)};
}

AbstractPolicyTable build_policy_table(int num_actions, int num_tasks, PolicyMode mode,
                                       std::optional<int> budget, Rng& rng) {
  if (num_actions < 2) throw std::invalid_argument("policy table needs at least 2 actions");
  if (num_tasks < 1) throw std::invalid_argument("policy table needs at least 1 task");
  long long tuples = 1;
  for (int k = 0; k < num_tasks; ++k) {
    tuples *= num_actions;
    if (tuples > (1 << 20)) throw std::invalid_argument("action-tuple enumeration too large");
  }
  long long clusters = tuples;
  if (mode == PolicyMode::Budget) {
    if (!budget || *budget < num_actions)
      throw std::invalid_argument("budget mode requires budget >= number of actions");
    clusters = *budget;
  }

  AbstractPolicyTable table;
  table.mode = mode;
  table.by_task.assign(num_tasks, Eigen::MatrixXd::Zero(num_actions, clusters));
  std::uniform_int_distribution<int> pick(0, num_actions - 1);
  for (long long c = 0; c < clusters; ++c) {
    long long digits = c;
    for (int k = 0; k < num_tasks; ++k) {
      int a;
      if (c < tuples) {
        a = static_cast<int>(digits % num_actions);
        digits /= num_actions;
      } else {
        a = pick(rng);
      }
      table.by_task[k](a, c) = 1.0;
    }
  }
  return table;
}

Eigen::VectorXd AbstractionModel::normalise(const State& s) const {
  if (s.size() != input_center.size())
    throw DimensionMismatch("state has dimension " + std::to_string(s.size()) + ", model expects " +
                            std::to_string(input_center.size()));
  return (s - input_center).cwiseQuotient(input_scale);
}

bool AbstractionModel::operator==(const AbstractionModel& o) const {
  return net == o.net && policy == o.policy && meta == o.meta && input_center == o.input_center &&
         input_scale == o.input_scale;
}

AbstractionModel make_model(EnvKind kind, AbstractPolicyTable policy,
                            const std::vector<int>& hidden) {
  if (policy.num_actions() != action_count(kind))
    throw DimensionMismatch("policy table action count does not match the environment");
  AbstractionModel m;
  m.meta = {kind, state_dim(kind), action_count(kind), policy.num_tasks()};
  std::vector<int> widths{state_dim(kind)};
  widths.insert(widths.end(), hidden.begin(), hidden.end());
  widths.push_back(policy.num_clusters());
  m.net = Mlp<double>::zeros(widths);
  m.policy = std::move(policy);
  const StateBox box = state_box(kind);
  m.input_center = 0.5 * (box.lo + box.hi);
  m.input_scale = 0.5 * (box.hi - box.lo);
  return m;
}

LikelihoodBatch<double> make_batch(const AbstractionModel& model, const Dataset& d,
                                   std::span<const std::size_t> rows) {
  LikelihoodBatch<double> b;
  b.states.resize(model.meta.state_dim, static_cast<Eigen::Index>(rows.size()));
  b.cluster_weights.resize(model.num_clusters(), static_cast<Eigen::Index>(rows.size()));
  for (std::size_t j = 0; j < rows.size(); ++j) {
    const Quadruple& q = d.quadruples[rows[j]];
    b.states.col(j) = model.normalise(q.state);
    b.cluster_weights.col(j) = model.policy.cluster_weights(q.action, q.task_id);
  }
  return b;
}

double dataset_loss(const AbstractionModel& model, const Dataset& d) {
  std::vector<std::size_t> all(d.size());
  std::iota(all.begin(), all.end(), 0);
  return nll_loss(model.net, make_batch(model, d, all));
}

AbstractionModel train(const Dataset& dataset, const AbstractPolicyTable& policy,
                       const TrainConfig& cfg, Rng& rng) {
  if (dataset.empty()) throw std::invalid_argument("train: empty dataset");
  if (dataset.num_tasks != policy.num_tasks())
    throw DimensionMismatch("train: dataset has " + std::to_string(dataset.num_tasks) +
                            " tasks, policy table has " + std::to_string(policy.num_tasks()));
  if (cfg.batch_size < 1 || cfg.epochs < 0) throw std::invalid_argument("train: bad config");

  AbstractionModel model = make_model(dataset.env_kind, policy, cfg.hidden);
  for (const Quadruple& q : dataset.quadruples) {
    if (q.task_id < 0 || q.task_id >= policy.num_tasks() || q.action.index < 0 ||
        q.action.index >= policy.num_actions())
      throw DimensionMismatch("train: quadruple task/action outside the policy table");
  }
  model.net = Mlp<double>::glorot(model.net.widths(), rng);

  std::vector<std::size_t> order(dataset.size());
  std::iota(order.begin(), order.end(), 0);
  const LikelihoodBatch<double> full = make_batch(model, dataset, order);

  AdamState<double> adam = AdamState<double>::for_params(model.net);
  Mlp<double> best = model.net;
  double best_loss = nll_loss(model.net, full);
  double prev_loss = best_loss;
  model.loss_trace = {best_loss};
  model.best_epoch = 0;
  int stalled = 0;

  const std::size_t bs = static_cast<std::size_t>(cfg.batch_size);
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t start = 0; start < order.size(); start += bs) {
      const std::size_t n = std::min(bs, order.size() - start);
      LikelihoodBatch<double> batch;
      batch.states.resize(full.states.rows(), static_cast<Eigen::Index>(n));
      batch.cluster_weights.resize(full.cluster_weights.rows(), static_cast<Eigen::Index>(n));
      for (std::size_t j = 0; j < n; ++j) {
        batch.states.col(j) = full.states.col(order[start + j]);
        batch.cluster_weights.col(j) = full.cluster_weights.col(order[start + j]);
      }
      const NllResult<double> r = nll_and_grad(model.net, batch);
      adam_step(model.net, adam, r.grad, cfg.adam);
    }
    const double loss = nll_loss(model.net, full);
    model.loss_trace.push_back(loss);
    if (loss < best_loss) {
      best_loss = loss;
      best = model.net;
      model.best_epoch = epoch;
    }
    stalled = (prev_loss - loss < cfg.min_improvement) ? stalled + 1 : 0;
    prev_loss = loss;
    if (stalled >= cfg.patience) break;
  }
  model.net = std::move(best);
  return model;
}

Eigen::VectorXd phi(const AbstractionModel& model, const State& s) {
  return forward(model.net, model.normalise(s));
}

AbstractState phi_map(const AbstractionModel& model, const State& s, PhiMode mode, Rng* rng) {
  const Eigen::VectorXd p = phi(model, s);
  if (mode == PhiMode::Argmax) {
    Eigen::Index best = 0;
    p.maxCoeff(&best);  // first maximum
    return {static_cast<int>(best)};
  }
  if (!rng) throw std::invalid_argument("phi_map: Sample mode requires a random source");
  std::discrete_distribution<int> dist(p.data(), p.data() + p.size());
  return {dist(*rng)};
}

Eigen::VectorXd marginal_action_dist(const AbstractionModel& model, const State& s, int task_id) {
  if (task_id < 0 || task_id >= model.policy.num_tasks())
    throw std::out_of_range("task id outside the policy table");
  return model.policy.by_task[task_id] * phi(model, s);
}

void require_compatible(const AbstractionModel& model, const TaskConfig& task) {
  if (model.meta.env_kind != task.env_kind || model.meta.state_dim != state_dim(task.env_kind) ||
      model.meta.action_count != action_count(task.env_kind))
    throw DimensionMismatch("abstraction model was built for " + to_string(model.meta.env_kind) +
                            ", task is " + to_string(task.env_kind));
}

void save_model(const AbstractionModel& model, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write model: " + path);
  const auto& m = model.meta;
  out << kModelMagic << ' ' << kModelVersion << '\n'
      << "env " << to_string(m.env_kind) << '\n'
      << "state_dim " << m.state_dim << '\n'
      << "action_count " << m.action_count << '\n'
      << "num_tasks " << m.num_tasks << '\n'
      << "policy_mode " << mode_name(model.policy.mode) << '\n'
      << "widths";
  for (int w : model.net.widths()) out << ' ' << w;
  out << "\ninput_center ";
  write_vector(out, model.input_center);
  out << "input_scale ";
  write_vector(out, model.input_scale);
  out << "policy\n";
  for (const auto& table : model.policy.by_task)
    for (Eigen::Index a = 0; a < table.rows(); ++a) write_vector(out, table.row(a).transpose());
  for (int l = 0; l < model.net.num_layers(); ++l) {
    out << "layer " << l << '\n';
    const auto& w = model.net.weights[l];
    for (Eigen::Index r = 0; r < w.rows(); ++r) write_vector(out, w.row(r).transpose());
    write_vector(out, model.net.biases[l]);
  }
  out << "end\n";
  if (!out) throw std::runtime_error("error writing model: " + path);
}

AbstractionModel load_model(const std::string& path, const std::optional<ModelMeta>& expected) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read model: " + path);
  ModelReader r(in);
  r.expect(kModelMagic);
  const long long version = r.integer();
  if (version != kModelVersion)
    throw std::runtime_error("model file version " + std::to_string(version) + " is not supported");

  ModelMeta meta;
  r.expect("env");
  try {
    meta.env_kind = parse_env_kind(r.word());
  } catch (const ConfigError& e) {
    throw std::runtime_error(std::string("model file: ") + e.what());
  }
  r.expect("state_dim");
  meta.state_dim = static_cast<int>(r.integer());
  r.expect("action_count");
  meta.action_count = static_cast<int>(r.integer());
  r.expect("num_tasks");
  meta.num_tasks = static_cast<int>(r.integer());
  if (meta.state_dim != state_dim(meta.env_kind) || meta.action_count != action_count(meta.env_kind))
    throw DimensionMismatch("model file: dimensions do not match " + to_string(meta.env_kind));
  if (meta.num_tasks < 1) throw std::runtime_error("model file: num_tasks must be >= 1");
  if (expected && !(*expected == meta))
    throw DimensionMismatch("model metadata (" + to_string(meta.env_kind) + ", K=" +
                            std::to_string(meta.num_tasks) + ") does not match the caller's (" +
                            to_string(expected->env_kind) + ", K=" +
                            std::to_string(expected->num_tasks) + ")");
  r.expect("policy_mode");
  const PolicyMode mode = parse_mode(r.word());

  r.expect("widths");
  std::vector<int> widths;
  std::string w;
  while ((w = r.word()) != "input_center") {
    try {
      widths.push_back(std::stoi(w));
    } catch (const std::exception&) {
      throw std::runtime_error("model file: bad width '" + w + "'");
    }
    if (widths.back() < 1) throw std::runtime_error("model file: widths must be positive");
  }
  if (widths.size() < 2 || widths.front() != meta.state_dim)
    throw DimensionMismatch("model file: network widths do not match the state dimension");

  AbstractionModel model;
  model.meta = meta;
  model.input_center = r.vector(meta.state_dim);
  r.expect("input_scale");
  model.input_scale = r.vector(meta.state_dim);
  r.expect("policy");
  const int clusters = widths.back();
  model.policy.mode = mode;
  for (int k = 0; k < meta.num_tasks; ++k) {
    Eigen::MatrixXd table(meta.action_count, clusters);
    for (int a = 0; a < meta.action_count; ++a) table.row(a) = r.vector(clusters).transpose();
    model.policy.by_task.push_back(std::move(table));
  }
  model.net = Mlp<double>::zeros(widths);
  for (int l = 0; l < model.net.num_layers(); ++l) {
    r.expect("layer");
    if (r.integer() != l) throw std::runtime_error("model file: layers out of order");
    auto& wm = model.net.weights[l];
    for (Eigen::Index row = 0; row < wm.rows(); ++row) wm.row(row) = r.vector(wm.cols()).transpose();
    model.net.biases[l] = r.vector(model.net.biases[l].size());
  }
  r.expect("end");
  return model;
}

void save_loss_trace(const AbstractionModel& model, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write loss trace: " + path);
  out << "epoch,loss\n";
  for (std::size_t e = 0; e < model.loss_trace.size(); ++e)
    out << e << ',' << fmt17(model.loss_trace[e]) << '\n';
}

}  // namespace alab
