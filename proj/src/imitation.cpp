#include "bimgame/imitation.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>

#include "bimgame/error.hpp"

namespace bimgame::imitation {

std::vector<double> compute_returns(std::span<const double> rewards, double gamma) {
  std::vector<double> g(rewards.size());
  double acc = 0.0;
  for (std::size_t t = rewards.size(); t-- > 0;) {
    acc = rewards[t] + gamma * acc;
    g[t] = acc;
  }
  return g;
}

LabeledEpisode from_trajectory(const expert::Trajectory& traj, double gamma) {
  LabeledEpisode ep;
  ep.seed = traj.episode_seed;
  const std::uint64_t key = expert::mix_seed(traj.episode_seed, 0x5eed);
  for (std::size_t t = 0; t < traj.size(); ++t) {
    const auto& s = traj.steps[t];
    ep.states.push_back(s.state);
    ep.taken.push_back(maze::action_index(s.action));
    ep.labels.push_back(maze::action_index(s.action));
    ep.rewards.push_back(s.reward);
    ep.query_ids.push_back(expert::mix_seed(key, t));
  }
  ep.returns = compute_returns(ep.rewards, gamma);
  return ep;
}

std::vector<LabeledEpisode> from_dataset(const expert::Dataset& data,
                                         const std::vector<std::size_t>& indices, double gamma) {
  std::vector<LabeledEpisode> out;
  out.reserve(indices.size());
  for (auto i : indices) out.push_back(from_trajectory(data.trajectories.at(i), gamma));
  return out;
}

std::vector<nn::NetworkInput> episode_inputs(const agent::Observer& obs, const LabeledEpisode& ep) {
  std::vector<nn::NetworkInput> in(ep.size());
  for (std::size_t t = 0; t < ep.size(); ++t) {
    const int prev_a = t == 0 ? -1 : ep.taken[t - 1];
    const double prev_r = t == 0 ? 0.0 : ep.rewards[t - 1];
    obs.fill(in[t], ep.states[t], prev_a, prev_r);
  }
  return in;
}

PretrainConfig PretrainConfig::from_config(const KeyValueConfig& kv) {
  PretrainConfig c;
  c.arch = nn::Architecture::from_config(kv.subset("arch."));
  c.gamma = kv.get_double("gamma", c.gamma);
  c.l2_lambda = kv.get_double("l2_lambda", c.l2_lambda);
  c.policy_loss_weight = kv.get_double("policy_loss_weight", c.policy_loss_weight);
  c.value_loss_weight = kv.get_double("value_loss_weight", c.value_loss_weight);
  c.epochs = static_cast<int>(kv.get_int("epochs", c.epochs));
  c.batch_episodes = static_cast<int>(kv.get_int("batch_episodes", c.batch_episodes));
  c.optimizer.learning_rate = kv.get_double("lr", c.optimizer.learning_rate);
  c.optimizer.decay = kv.get_double("rms_decay", c.optimizer.decay);
  c.optimizer.epsilon = kv.get_double("rms_epsilon", c.optimizer.epsilon);
  c.clip_norm = kv.get_double("clip_norm", c.clip_norm);
  c.seed = static_cast<std::uint64_t>(kv.get_int("seed", 0));
  if (!(c.gamma >= 0 && c.gamma < 1)) throw ConfigError("gamma must be in [0, 1)");
  if (c.l2_lambda < 0) throw ConfigError("l2_lambda must be >= 0");
  if (c.epochs < 0 || c.batch_episodes < 1) throw ConfigError("bad epochs or batch_episodes");
  return c;
}

KeyValueConfig PretrainConfig::to_config() const {
  KeyValueConfig kv;
  const KeyValueConfig arch_kv = arch.to_config();
  for (const auto& [k, v] : arch_kv.values()) kv.set("arch." + k, v);
  kv.set("gamma", format_double(gamma));
  kv.set("l2_lambda", format_double(l2_lambda));
  kv.set("policy_loss_weight", format_double(policy_loss_weight));
  kv.set("value_loss_weight", format_double(value_loss_weight));
  kv.set("epochs", std::to_string(epochs));
  kv.set("batch_episodes", std::to_string(batch_episodes));
  kv.set("lr", format_double(optimizer.learning_rate));
  kv.set("rms_decay", format_double(optimizer.decay));
  kv.set("rms_epsilon", format_double(optimizer.epsilon));
  kv.set("clip_norm", format_double(clip_norm));
  kv.set("seed", std::to_string(seed));
  return kv;
}

namespace {

struct StepStats {
  LossBreakdown loss;
  double value_sq_error = 0.0;
};

StepStats episode_loss(const nn::NetworkParams& params, const agent::Observer& obs,
                       const LabeledEpisode& ep, const PretrainConfig& cfg,
                       std::vector<double>* grad) {
  if (ep.size() == 0) throw DatasetError("empty episode");
  if (ep.returns.size() != ep.size() || ep.labels.size() != ep.size())
    throw DatasetError("episode missing labels or return targets");
  const auto inputs = episode_inputs(obs, ep);
  std::vector<nn::StepCache> caches;
  const auto outs = nn::forward_sequence(params, inputs, nn::RecurrentState::zeros(params.arch),
                                         grad ? &caches : nullptr);
  StepStats st;
  std::vector<nn::OutputGrad> og(ep.size());
  for (std::size_t t = 0; t < ep.size(); ++t) {
    const auto& z = outs[t].logits;
    const int label = ep.labels[t];
    const double zmax = *std::max_element(z.begin(), z.end());
    double sum = 0.0;
    for (double v : z) sum += std::exp(v - zmax);
    const double ce = zmax + std::log(sum) - z[label];
    const double err = outs[t].value - ep.returns[t];
    st.loss.cross_entropy += cfg.policy_loss_weight * ce;
    st.loss.value += cfg.value_loss_weight * err * err;
    st.value_sq_error += err * err;
    st.loss.correct += agent::greedy_action(outs[t].policy) == label;
    for (int c = 0; c < nn::kActions; ++c)
      og[t].dlogits[c] = cfg.policy_loss_weight * (outs[t].policy[c] - (c == label ? 1.0 : 0.0));
    og[t].dvalue = 2.0 * cfg.value_loss_weight * err;
  }
  st.loss.steps = ep.size();
  st.loss.total = st.loss.cross_entropy + st.loss.value;
  if (grad) nn::backward(params, caches, og, nn::RecurrentGrad::zeros(params.arch), *grad);
  return st;
}

StepStats batch_loss(const nn::NetworkParams& params, const agent::Observer& obs,
                     std::span<const LabeledEpisode> episodes, const PretrainConfig& cfg,
                     std::vector<double>* grad) {
  StepStats all;
  for (const auto& ep : episodes) {
    const StepStats s = episode_loss(params, obs, ep, cfg, grad);
    all.loss.cross_entropy += s.loss.cross_entropy;
    all.loss.value += s.loss.value;
    all.loss.steps += s.loss.steps;
    all.loss.correct += s.loss.correct;
    all.value_sq_error += s.value_sq_error;
  }
  all.loss.l2 = nn::l2_penalty(params, cfg.l2_lambda, grad);
  all.loss.total = all.loss.cross_entropy + all.loss.value + all.loss.l2;
  return all;
}

double ratio(std::size_t a, std::size_t b) { return b ? static_cast<double>(a) / b : 0.0; }

PretrainResult train_impl(const maze::MazeGeometry& geometry,
                          std::span<const LabeledEpisode> train,
                          std::span<const LabeledEpisode> test, const PretrainConfig& cfg,
                          const std::optional<nn::NetworkParams>& init,
                          const EpochCallback& on_epoch, bool select_by_value) {
  if (train.empty()) throw DatasetError("empty training split");
  cfg.arch.validate();
  nn::NetworkParams params = init ? *init : nn::NetworkParams::initialize(cfg.arch, cfg.seed);
  if (!(params.arch == cfg.arch)) throw ShapeError("initial parameters do not match architecture");
  params.frozen = false;
  const agent::Observer obs(geometry, cfg.arch);
  nn::RmsProp opt(params.size(), cfg.optimizer);

  PretrainResult res;
  auto evaluate_test = [&](EpochMetrics& m) {
    if (test.empty()) return;
    const StepStats s = batch_loss(params, obs, test, cfg, nullptr);
    m.test_accuracy = ratio(s.loss.correct, s.loss.steps);
    m.test_value_mse = s.value_sq_error / static_cast<double>(s.loss.steps);
  };
  auto better = [&](const EpochMetrics& m, const EpochMetrics& best) {
    return select_by_value ? m.test_value_mse < best.test_value_mse
                           : m.test_accuracy > best.test_accuracy;
  };

  EpochMetrics m0;
  {
    const StepStats s = batch_loss(params, obs, train, cfg, nullptr);
    m0.train_loss = s.loss.total / static_cast<double>(s.loss.steps);
    m0.train_accuracy = ratio(s.loss.correct, s.loss.steps);
  }
  evaluate_test(m0);
  res.curve.push_back(m0);
  if (on_epoch) on_epoch(m0);
  res.best = params;
  EpochMetrics best_m = m0;

  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), 0);
  std::vector<double> grad(params.size());
  std::vector<LabeledEpisode> batch;
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::mt19937_64 rng(expert::mix_seed(cfg.seed, static_cast<std::uint64_t>(epoch)));
    std::shuffle(order.begin(), order.end(), rng);
    EpochMetrics m;
    m.epoch = epoch;
    double loss_sum = 0.0;
    std::size_t steps = 0, correct = 0;
    const auto bsz = static_cast<std::size_t>(cfg.batch_episodes);
    for (std::size_t b = 0; b < order.size(); b += bsz) {
      batch.clear();
      for (std::size_t i = b; i < std::min(order.size(), b + bsz); ++i)
        batch.push_back(train[order[i]]);
      std::fill(grad.begin(), grad.end(), 0.0);
      const StepStats s = batch_loss(params, obs, batch, cfg, &grad);
      if (cfg.clip_norm > 0) nn::clip_grad_norm(grad, cfg.clip_norm);
      opt.update(params, grad);
      loss_sum += s.loss.cross_entropy + s.loss.value;
      steps += s.loss.steps;
      correct += s.loss.correct;
    }
    m.train_loss = loss_sum / static_cast<double>(steps);
    m.train_accuracy = ratio(correct, steps);
    evaluate_test(m);
    res.curve.push_back(m);
    if (on_epoch) on_epoch(m);
    if (!test.empty() && better(m, best_m)) {
      best_m = m;
      res.best = params;
      res.best_epoch = epoch;
    }
  }
  res.last = params;
  if (test.empty()) {
    res.best = params;
    res.best_epoch = cfg.epochs;
  }
  return res;
}

}  // namespace

LossBreakdown pretrain_loss(const nn::NetworkParams& params, const agent::Observer& obs,
                            std::span<const LabeledEpisode> episodes, const PretrainConfig& cfg,
                            std::vector<double>* grad) {
  if (grad) grad->resize(params.size(), 0.0);
  return batch_loss(params, obs, episodes, cfg, grad).loss;
}

PretrainResult pretrain(const maze::MazeGeometry& geometry, std::span<const LabeledEpisode> train,
                        std::span<const LabeledEpisode> test, const PretrainConfig& cfg,
                        const std::optional<nn::NetworkParams>& init,
                        const EpochCallback& on_epoch) {
  if (test.empty()) throw DatasetError("empty test split");
  return train_impl(geometry, train, test, cfg, init, on_epoch, cfg.policy_loss_weight == 0.0);
}

PretrainResult pretrain(const expert::Dataset& data, const PretrainConfig& cfg,
                        const EpochCallback& on_epoch) {
  const auto geometry = maze::MazeGeometry::build(data.geometry);
  const auto train = from_dataset(data, data.train, cfg.gamma);
  const auto test = from_dataset(data, data.test, cfg.gamma);
  return pretrain(geometry, train, test, cfg, std::nullopt, on_epoch);
}

PretrainResult train_value_only(const expert::Dataset& data, PretrainConfig cfg,
                                const EpochCallback& on_epoch) {
  cfg.policy_loss_weight = 0.0;
  PretrainResult r = pretrain(data, cfg, on_epoch);
  r.best.frozen = true;
  return r;
}

void write_metrics_csv(const std::vector<EpochMetrics>& curve, const std::string& path) {
  std::ofstream f(path);
  if (!f) throw IoError("cannot write " + path);
  f << "epoch,train_loss,test_accuracy,train_accuracy,test_value_mse\n";
  for (const auto& m : curve)
    f << m.epoch << ',' << format_double(m.train_loss) << ',' << format_double(m.test_accuracy)
      << ',' << format_double(m.train_accuracy) << ',' << format_double(m.test_value_mse) << '\n';
}

DaggerConfig DaggerConfig::from_config(const KeyValueConfig& kv) {
  DaggerConfig c;
  c.iterations = static_cast<int>(kv.get_int("iterations", c.iterations));
  c.rollouts_per_iteration = static_cast<int>(kv.get_int("rollouts", c.rollouts_per_iteration));
  c.max_steps = static_cast<int>(kv.get_int("max_steps", c.max_steps));
  c.warm_start = kv.get_bool("warm_start", c.warm_start);
  c.query_budget = static_cast<std::size_t>(kv.get_int("query_budget", 0));
  c.eval_episodes = static_cast<int>(kv.get_int("eval_episodes", c.eval_episodes));
  auto selection = [&](const char* key, agent::ActionSelection fallback) {
    const std::string v = kv.get_string(key, fallback == agent::ActionSelection::Greedy ? "greedy" : "sample");
    if (v == "greedy") return agent::ActionSelection::Greedy;
    if (v == "sample") return agent::ActionSelection::Sample;
    throw ConfigError(std::string(key) + " must be greedy or sample");
  };
  c.rollout_selection = selection("rollout_selection", c.rollout_selection);
  c.eval_selection = selection("eval_selection", c.eval_selection);
  c.seed = static_cast<std::uint64_t>(kv.get_int("seed", 0));
  c.train = PretrainConfig::from_config(kv.subset("train."));
  if (c.iterations < 1 || c.rollouts_per_iteration < 1) throw ConfigError("bad DAgger schedule");
  return c;
}

KeyValueConfig DaggerConfig::to_config() const {
  KeyValueConfig kv;
  kv.set("iterations", std::to_string(iterations));
  kv.set("rollouts", std::to_string(rollouts_per_iteration));
  kv.set("max_steps", std::to_string(max_steps));
  kv.set("warm_start", warm_start ? "true" : "false");
  kv.set("query_budget", std::to_string(query_budget));
  kv.set("eval_episodes", std::to_string(eval_episodes));
  kv.set("rollout_selection",
         rollout_selection == agent::ActionSelection::Greedy ? "greedy" : "sample");
  kv.set("eval_selection", eval_selection == agent::ActionSelection::Greedy ? "greedy" : "sample");
  kv.set("seed", std::to_string(seed));
  const KeyValueConfig train_kv = train.to_config();
  for (const auto& [k, v] : train_kv.values()) kv.set("train." + k, v);
  return kv;
}

double dagger_beta(int iteration) { return iteration <= 1 ? 1.0 : 0.0; }

namespace {

// Mixture rollout: each step takes the expert's label with probability beta,
// otherwise the learner's sampled action. Every visited state is labeled.
LabeledEpisode mixture_rollout(const expert::ShootingExpert& expert,
                               const nn::NetworkParams& params, const agent::Observer& obs,
                               std::uint64_t seed, int max_steps, double beta,
                               agent::ActionSelection selection, std::uint64_t action_seed) {
  const auto& geometry = expert.geometry();
  const auto& task = expert.task();
  std::mt19937_64 rng(action_seed);
  LabeledEpisode ep;
  ep.seed = seed;
  maze::BoardState s = maze::reset(geometry, task, seed);
  nn::RecurrentState h = nn::RecurrentState::zeros(params.arch);
  nn::NetworkInput in;
  const std::uint64_t key = expert::mix_seed(seed, 0x5eed);
  for (int t = 0; t < max_steps; ++t) {
    const std::uint64_t qid = expert::mix_seed(key, static_cast<std::uint64_t>(t));
    const int label = maze::action_index(expert.choose(s, qid).action);
    int taken = label;
    if (beta < 1.0) {
      obs.fill(in, s, t == 0 ? -1 : ep.taken.back(), t == 0 ? 0.0 : ep.rewards.back());
      nn::NetworkOutput out = nn::forward(params, in, h);
      h = std::move(out.next);
      const int learner = selection == agent::ActionSelection::Greedy
                              ? agent::greedy_action(out.policy)
                              : agent::sample_action(out.policy, rng);
      const bool use_expert =
          beta > 0.0 && std::uniform_real_distribution<double>(0.0, 1.0)(rng) < beta;
      taken = use_expert ? label : learner;
    }
    const maze::StepResult r = maze::step(geometry, s, maze::action_from_index(taken), task);
    ep.states.push_back(s);
    ep.labels.push_back(label);
    ep.query_ids.push_back(qid);
    ep.taken.push_back(taken);
    ep.rewards.push_back(r.reward);
    s = r.state;
    if (r.events.terminal) break;
  }
  return ep;
}

}  // namespace

DaggerResult dagger(const expert::ShootingExpert& expert, const DaggerConfig& cfg,
                    const std::function<void(const DaggerIteration&)>& on_iteration) {
  const auto& geometry = expert.geometry();
  const auto& task = expert.task();
  const int cap = cfg.max_steps > 0 ? cfg.max_steps : agent::episode_cap(task);
  PretrainConfig train_cfg = cfg.train;
  train_cfg.policy_loss_weight = 1.0;
  train_cfg.value_loss_weight = 0.0;
  const agent::Observer obs(geometry, train_cfg.arch);

  DaggerResult res;
  res.params = nn::NetworkParams::initialize(train_cfg.arch, expert::mix_seed(cfg.seed, 0));
  std::size_t queries = 0;
  for (int it = 1; it <= cfg.iterations; ++it) {
    const double beta = dagger_beta(it);
    for (int j = 0; j < cfg.rollouts_per_iteration; ++j) {
      if (cfg.query_budget && queries >= cfg.query_budget) break;
      int steps = cap;
      if (cfg.query_budget)
        steps = static_cast<int>(std::min<std::size_t>(cap, cfg.query_budget - queries));
      const std::uint64_t episode =
          static_cast<std::uint64_t>(it - 1) * cfg.rollouts_per_iteration + j;
      const std::uint64_t seed = expert::mix_seed(cfg.seed, episode) % agent::kEvalSeedBase;
      LabeledEpisode ep = mixture_rollout(expert, res.params, obs, seed, steps, beta,
                                          cfg.rollout_selection, expert::mix_seed(seed, it));
      ep.returns = compute_returns(ep.rewards, train_cfg.gamma);
      queries += ep.size();
      res.aggregate.push_back(std::move(ep));
    }
    train_cfg.seed = expert::mix_seed(cfg.seed, static_cast<std::uint64_t>(it));
    std::optional<nn::NetworkParams> init;
    if (cfg.warm_start && it > 1) init = res.params;
    PretrainResult fit = train_impl(geometry, res.aggregate, {}, train_cfg, init, {}, false);
    res.params = fit.last;

    DaggerIteration rec;
    rec.iteration = it;
    rec.beta = beta;
    for (const auto& ep : res.aggregate) rec.aggregate_steps += ep.size();
    rec.expert_queries = queries;
    rec.train_accuracy = fit.curve.back().train_accuracy;
    const auto ev = agent::evaluate(res.params, geometry, task, cfg.eval_episodes,
                                    cfg.eval_selection, cap);
    rec.eval_return = ev.mean_return;
    rec.eval_solved = ev.solved_fraction;
    res.iterations.push_back(rec);
    if (on_iteration) on_iteration(rec);
    if (cfg.query_budget && queries >= cfg.query_budget) break;
  }
  return res;
}

void write_dagger_csv(const std::vector<DaggerIteration>& its, const std::string& path) {
  std::ofstream f(path);
  if (!f) throw IoError("cannot write " + path);
  f << "iteration,beta,aggregate_steps,expert_queries,train_accuracy,eval_return,eval_solved\n";
  for (const auto& r : its)
    f << r.iteration << ',' << format_double(r.beta) << ',' << r.aggregate_steps << ','
      << r.expert_queries << ',' << format_double(r.train_accuracy) << ','
      << format_double(r.eval_return) << ',' << format_double(r.eval_solved) << '\n';
}

}  // namespace bimgame::imitation
