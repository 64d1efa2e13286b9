#include "bimgame/rl.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <fstream>
#include <mutex>
#include <sstream>
#include <thread>

#include "bimgame/error.hpp"
#include "bimgame/expert.hpp"

namespace bimgame::rl {

double shaped_reward(double reward, double v_prev, double v_next, double gamma, bool terminal) {
  return reward + (terminal ? 0.0 : gamma * v_next) - v_prev;
}

ShapingPotential::ShapingPotential(const nn::NetworkParams& vhat,
                                   const maze::MazeGeometry& geometry, double gamma)
    : vhat_(&vhat), obs_(geometry, vhat.arch), gamma_(gamma) {
  if (!vhat.frozen) throw PreconditionError("shaping potential must be a frozen network");
}

void ShapingPotential::reset(const maze::BoardState& start) {
  state_ = nn::RecurrentState::zeros(vhat_->arch);
  obs_.fill(input_, start, -1, 0.0);
  nn::NetworkOutput out = nn::forward(*vhat_, input_, state_);
  state_ = std::move(out.next);
  value_ = out.value;
}

double ShapingPotential::step(int action, double reward, const maze::BoardState& next,
                              bool terminal) {
  const double prev = value_;
  obs_.fill(input_, next, action, reward);
  nn::NetworkOutput out = nn::forward(*vhat_, input_, state_);
  state_ = std::move(out.next);
  value_ = out.value;
  return shaped_reward(reward, prev, value_, gamma_, terminal);
}

A3CConfig A3CConfig::from_config(const KeyValueConfig& kv) {
  A3CConfig c;
  c.arch = nn::Architecture::from_config(kv.subset("arch."));
  c.workers = static_cast<int>(kv.get_int("workers", c.workers));
  c.t_max = static_cast<int>(kv.get_int("t_max", c.t_max));
  c.gamma = kv.get_double("gamma", c.gamma);
  c.entropy_beta = kv.get_double("entropy_beta", c.entropy_beta);
  c.value_loss_weight = kv.get_double("value_loss_weight", c.value_loss_weight);
  c.optimizer.learning_rate = kv.get_double("lr", c.optimizer.learning_rate);
  c.optimizer.decay = kv.get_double("rms_decay", c.optimizer.decay);
  c.optimizer.epsilon = kv.get_double("rms_epsilon", c.optimizer.epsilon);
  c.clip_norm = kv.get_double("clip_norm", c.clip_norm);
  c.budget = kv.get_int("budget", c.budget);
  c.init = kv.get_string("init", c.init);
  c.shaping = kv.get_string("shaping", c.shaping);
  c.shaping_gamma = kv.get_double("shaping_gamma", c.shaping_gamma);
  c.seed = static_cast<std::uint64_t>(kv.get_int("seed", 0));
  c.max_episode_steps = static_cast<int>(kv.get_int("max_episode_steps", c.max_episode_steps));
  c.threaded = kv.get_bool("threaded", c.threaded);
  c.eval_every = kv.get_int("eval_every", c.eval_every);
  c.eval_episodes = static_cast<int>(kv.get_int("eval_episodes", c.eval_episodes));
  if (c.workers < 1) throw ConfigError("workers must be >= 1");
  if (c.t_max < 1) throw ConfigError("t_max must be >= 1");
  if (!(c.gamma >= 0 && c.gamma < 1)) throw ConfigError("gamma must be in [0, 1)");
  if (c.budget < 0) throw ConfigError("budget must be >= 0");
  return c;
}

KeyValueConfig A3CConfig::to_config() const {
  KeyValueConfig kv;
  const KeyValueConfig arch_kv = arch.to_config();
  for (const auto& [k, v] : arch_kv.values()) kv.set("arch." + k, v);
  kv.set("workers", std::to_string(workers));
  kv.set("t_max", std::to_string(t_max));
  kv.set("gamma", format_double(gamma));
  kv.set("entropy_beta", format_double(entropy_beta));
  kv.set("value_loss_weight", format_double(value_loss_weight));
  kv.set("lr", format_double(optimizer.learning_rate));
  kv.set("rms_decay", format_double(optimizer.decay));
  kv.set("rms_epsilon", format_double(optimizer.epsilon));
  kv.set("clip_norm", format_double(clip_norm));
  kv.set("budget", std::to_string(budget));
  kv.set("init", init);
  kv.set("shaping", shaping);
  kv.set("shaping_gamma", format_double(shaping_gamma));
  kv.set("seed", std::to_string(seed));
  kv.set("max_episode_steps", std::to_string(max_episode_steps));
  kv.set("threaded", threaded ? "true" : "false");
  kv.set("eval_every", std::to_string(eval_every));
  kv.set("eval_episodes", std::to_string(eval_episodes));
  return kv;
}

nn::OutputGrad a3c_output_grad(const nn::NetworkOutput& out, int action, double target,
                               double advantage, double entropy_beta, double value_weight) {
  nn::OutputGrad g;
  const double h = nn::entropy(out.policy);
  for (int c = 0; c < nn::kActions; ++c) {
    const double p = out.policy[c];
    // d(-log pi(a))/dz_c = p_c - [c == a];  dH/dz_c = -p_c (log p_c + H)
    const double logp = p > 0 ? std::log(p) : 0.0;
    g.dlogits[c] = advantage * (p - (c == action ? 1.0 : 0.0)) + entropy_beta * p * (logp + h);
  }
  g.dvalue = 2.0 * value_weight * (out.value - target);
  return g;
}

double a3c_loss(const nn::NetworkParams& params, std::span<const nn::NetworkInput> inputs,
                std::span<const int> actions, std::span<const double> targets,
                std::span<const double> advantages, double entropy_beta, double value_weight,
                const nn::RecurrentState& initial, std::vector<double>* grad) {
  std::vector<nn::StepCache> caches;
  const auto outs = nn::forward_sequence(params, inputs, initial, grad ? &caches : nullptr);
  double loss = 0.0;
  std::vector<nn::OutputGrad> og(outs.size());
  for (std::size_t t = 0; t < outs.size(); ++t) {
    const auto& o = outs[t];
    const auto& z = o.logits;
    const double zmax = *std::max_element(z.begin(), z.end());
    double sum = 0.0;
    for (double v : z) sum += std::exp(v - zmax);
    const double nll = zmax + std::log(sum) - z[actions[t]];
    const double err = targets[t] - o.value;
    loss += nll * advantages[t] + value_weight * err * err - entropy_beta * nn::entropy(o.policy);
    og[t] = a3c_output_grad(o, actions[t], targets[t], advantages[t], entropy_beta, value_weight);
  }
  if (!std::isfinite(loss)) throw NumericFault("non-finite actor-critic loss");
  if (grad) {
    grad->resize(params.size(), 0.0);
    nn::backward(params, caches, og, nn::RecurrentGrad::zeros(params.arch), *grad);
  }
  return loss;
}

std::vector<double> nstep_targets(std::span<const double> rewards, double bootstrap, double gamma) {
  std::vector<double> r(rewards.size());
  double acc = bootstrap;
  for (std::size_t t = rewards.size(); t-- > 0;) {
    acc = rewards[t] + gamma * acc;
    r[t] = acc;
  }
  return r;
}

Worker::Worker(int id, const maze::MazeGeometry& geometry, const maze::TaskSpec& task,
               const A3CConfig& cfg, const nn::NetworkParams* vhat)
    : id_(id),
      geometry_(&geometry),
      task_(task),
      cfg_(&cfg),
      cap_(cfg.max_episode_steps > 0 ? cfg.max_episode_steps : agent::episode_cap(task)),
      obs_(geometry, cfg.arch),
      rng_(expert::mix_seed(cfg.seed, 0xac7000 + static_cast<std::uint64_t>(id))),
      seed_key_(expert::mix_seed(cfg.seed, static_cast<std::uint64_t>(id))) {
  if (vhat) {
    const double g = cfg.shaping_gamma < 0 ? cfg.gamma : cfg.shaping_gamma;
    shaping_.emplace(*vhat, geometry, g);
  }
  start_episode();
}

void Worker::start_episode() {
  episode_seed_ = expert::mix_seed(seed_key_, episodes_++) % agent::kEvalSeedBase;
  state_ = maze::reset(*geometry_, task_, episode_seed_);
  h_ = nn::RecurrentState::zeros(cfg_->arch);
  prev_action_ = -1;
  prev_reward_ = 0.0;
  t_ = 0;
  return_ = 0.0;
  discount_ = 1.0;
  disc_task_ = 0.0;
  disc_shaped_ = 0.0;
  if (shaping_) {
    shaping_->reset(state_);
    v0_ = shaping_->current();
  }
}

Worker::Rollout Worker::rollout(const nn::NetworkParams& params) {
  Rollout out;
  const int n = cfg_->t_max;
  std::vector<nn::NetworkInput> inputs;
  std::vector<nn::StepCache> caches;
  std::vector<nn::NetworkOutput> outs;
  std::vector<int> actions;
  std::vector<double> rewards;
  inputs.reserve(static_cast<std::size_t>(n));
  bool terminal = false, truncated = false;
  while (static_cast<int>(actions.size()) < n) {
    inputs.emplace_back();
    obs_.fill(inputs.back(), state_, prev_action_, prev_reward_);
    caches.emplace_back();
    outs.push_back(nn::forward(params, inputs.back(), h_, &caches.back()));
    const int a = agent::sample_action(outs.back().policy, rng_);
    const maze::StepResult r = maze::step(*geometry_, state_, maze::action_from_index(a), task_);
    terminal = r.events.terminal;
    ++t_;
    truncated = !terminal && t_ >= cap_;
    double learn_r = r.reward;
    if (shaping_) {
      learn_r = shaping_->step(a, r.reward, r.state, terminal);
      disc_shaped_ += discount_ * learn_r;
    }
    disc_task_ += discount_ * r.reward;
    discount_ *= shaping_ ? shaping_->gamma() : cfg_->gamma;
    return_ += r.reward;
    actions.push_back(a);
    rewards.push_back(learn_r);
    h_ = outs.back().next;
    state_ = r.state;
    prev_action_ = a;
    prev_reward_ = r.reward;
    if (terminal || truncated) break;
  }
  out.steps = static_cast<int>(actions.size());
  steps_taken_ += out.steps;

  double bootstrap = 0.0;
  if (!terminal) {
    nn::NetworkInput next;
    obs_.fill(next, state_, prev_action_, prev_reward_);
    bootstrap = nn::forward(params, next, h_).value;
  }
  const auto targets = nstep_targets(rewards, bootstrap, cfg_->gamma);
  std::vector<nn::OutputGrad> og(outs.size());
  for (std::size_t t = 0; t < outs.size(); ++t) {
    const double adv = targets[t] - outs[t].value;
    const double err = targets[t] - outs[t].value;
    const double logp = std::log(std::max(outs[t].policy[actions[t]], 1e-300));
    out.loss += -logp * adv + cfg_->value_loss_weight * err * err -
                cfg_->entropy_beta * nn::entropy(outs[t].policy);
    og[t] = a3c_output_grad(outs[t], actions[t], targets[t], adv, cfg_->entropy_beta,
                            cfg_->value_loss_weight);
  }
  if (!std::isfinite(out.loss)) throw NumericFault("non-finite actor-critic loss");
  out.grad.assign(params.size(), 0.0);
  nn::backward(params, caches, og, nn::RecurrentGrad::zeros(params.arch), out.grad);

  if (terminal || truncated) {
    EpisodeLog log;
    log.worker = id_;
    log.seed = episode_seed_;
    log.episode_return = return_;
    log.length = t_;
    log.solved = terminal;
    if (shaping_) {
      const double end = terminal ? 0.0 : discount_ * shaping_->current();
      log.shaping_residual = disc_shaped_ - (disc_task_ + end - v0_);
    }
    out.finished = log;
    start_episode();
  }
  return out;
}

std::vector<double> moving_average(std::span<const double> values, std::size_t window) {
  std::vector<double> out(values.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < values.size(); ++i) {
    sum += values[i];
    if (i >= window) sum -= values[i - window];
    out[i] = sum / static_cast<double>(std::min(i + 1, window));
  }
  return out;
}

TrainResult train(const maze::MazeGeometry& geometry, const maze::TaskSpec& task,
                  const A3CConfig& cfg_in, const TrainHooks& hooks) {
  A3CConfig cfg = cfg_in;
  cfg.arch.validate();
  if (cfg.shaping_gamma >= 0 && cfg.shaping_gamma != cfg.gamma)
    throw ConfigError("shaping gamma " + format_double(cfg.shaping_gamma) +
                      " differs from actor-critic gamma " + format_double(cfg.gamma));
  TrainResult res;
  if (cfg.init == "random" || cfg.init.empty()) {
    res.params = nn::NetworkParams::initialize(cfg.arch, expert::mix_seed(cfg.seed, 0x1417));
  } else {
    res.params = nn::load_params(cfg.init);
    if (!(res.params.arch == cfg.arch))
      throw ShapeError("checkpoint " + cfg.init + " architecture does not match the configured one");
    res.params.frozen = false;
  }
  std::optional<nn::NetworkParams> vhat;
  if (cfg.shaping != "off" && !cfg.shaping.empty()) {
    vhat = nn::load_params(cfg.shaping);
    if (!vhat->frozen) throw PreconditionError("shaping checkpoint " + cfg.shaping + " is not frozen");
  }
  res.worker_steps.assign(static_cast<std::size_t>(cfg.workers), 0);
  if (cfg.budget == 0) return res;

  std::vector<Worker> workers;
  workers.reserve(static_cast<std::size_t>(cfg.workers));
  for (int w = 0; w < cfg.workers; ++w)
    workers.emplace_back(w, geometry, task, cfg, vhat ? &*vhat : nullptr);

  nn::RmsProp opt(res.params.size(), cfg.optimizer);
  std::deque<double> window;
  double window_sum = 0.0;
  std::int64_t next_eval = cfg.eval_every > 0 ? cfg.eval_every : -1;
  const auto t0 = std::chrono::steady_clock::now();
  auto elapsed = [&] {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  };

  // Applies one rollout; callers serialize access.
  auto apply = [&](Worker& w, Worker::Rollout& r) {
    if (cfg.clip_norm > 0) nn::clip_grad_norm(r.grad, cfg.clip_norm);
    opt.update(res.params, r.grad);
    res.total_steps += r.steps;
    res.worker_steps[static_cast<std::size_t>(w.id())] += r.steps;
    if (r.finished) {
      EpisodeLog log = *r.finished;
      log.step = res.total_steps;
      log.wallclock_s = elapsed();
      window.push_back(log.episode_return);
      window_sum += log.episode_return;
      if (window.size() > 100) {
        window_sum -= window.front();
        window.pop_front();
      }
      log.ma100 = window_sum / static_cast<double>(window.size());
      res.curve.push_back(log);
      if (hooks.on_episode) hooks.on_episode(log);
    }
  };
  auto maybe_eval = [&](const nn::NetworkParams& snapshot) {
    if (next_eval < 0 || res.total_steps < next_eval) return;
    while (next_eval <= res.total_steps) next_eval += cfg.eval_every;
    const auto ev = agent::evaluate(snapshot, geometry, task, cfg.eval_episodes,
                                    agent::ActionSelection::Greedy, cfg.max_episode_steps);
    EvalPoint p{res.total_steps, ev.mean_return, ev.solved_fraction};
    res.evals.push_back(p);
    if (hooks.on_eval) hooks.on_eval(p);
  };

  if (!cfg.threaded) {
    for (std::size_t k = 0; res.total_steps < cfg.budget; k = (k + 1) % workers.size()) {
      auto r = workers[k].rollout(res.params);
      apply(workers[k], r);
      maybe_eval(res.params);
    }
  } else {
    std::mutex mu;
    std::vector<std::thread> pool;
    for (auto& w : workers) {
      pool.emplace_back([&, wp = &w] {
        for (;;) {
          nn::NetworkParams snapshot;
          {
            std::lock_guard lock(mu);
            if (res.total_steps >= cfg.budget) return;
            snapshot = res.params;
          }
          auto r = wp->rollout(snapshot);
          std::optional<nn::NetworkParams> eval_snapshot;
          {
            std::lock_guard lock(mu);
            if (res.total_steps >= cfg.budget) return;
            apply(*wp, r);
            if (next_eval >= 0 && res.total_steps >= next_eval) {
              while (next_eval <= res.total_steps) next_eval += cfg.eval_every;
              eval_snapshot = res.params;
            }
          }
          if (eval_snapshot) {
            const auto ev = agent::evaluate(*eval_snapshot, geometry, task, cfg.eval_episodes,
                                            agent::ActionSelection::Greedy,
                                            cfg.max_episode_steps);
            std::lock_guard lock(mu);
            EvalPoint p{res.total_steps, ev.mean_return, ev.solved_fraction};
            res.evals.push_back(p);
            if (hooks.on_eval) hooks.on_eval(p);
          }
        }
      });
    }
    for (auto& t : pool) t.join();
  }
  res.wallclock_s = elapsed();
  return res;
}

void write_curve_csv(const std::vector<EpisodeLog>& curve, const std::string& path) {
  std::ofstream f(path);
  if (!f) throw IoError("cannot write " + path);
  f << "step,episode_return,ma100,wallclock_s,worker,seed,length,solved,shaping_residual\n";
  for (const auto& e : curve)
    f << e.step << ',' << format_double(e.episode_return) << ',' << format_double(e.ma100) << ','
      << format_double(e.wallclock_s) << ',' << e.worker << ',' << e.seed << ',' << e.length << ','
      << (e.solved ? 1 : 0) << ',' << format_double(e.shaping_residual) << '\n';
}

std::vector<EpisodeLog> read_curve_csv(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot read " + path);
  std::string line;
  std::getline(f, line);
  std::vector<EpisodeLog> out;
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string cell;
    std::vector<std::string> cells;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (cells.size() < 4) throw IoError("malformed curve row in " + path + ": " + line);
    EpisodeLog e;
    e.step = std::stoll(cells[0]);
    e.episode_return = std::stod(cells[1]);
    e.ma100 = std::stod(cells[2]);
    e.wallclock_s = std::stod(cells[3]);
    if (cells.size() >= 9) {
      e.worker = std::stoi(cells[4]);
      e.seed = std::stoull(cells[5]);
      e.length = std::stoi(cells[6]);
      e.solved = cells[7] == "1";
      e.shaping_residual = std::stod(cells[8]);
    }
    out.push_back(e);
  }
  return out;
}

void write_eval_csv(const std::vector<EvalPoint>& evals, const std::string& path) {
  std::ofstream f(path);
  if (!f) throw IoError("cannot write " + path);
  f << "step,mean_return,solved_fraction\n";
  for (const auto& e : evals)
    f << e.step << ',' << format_double(e.mean_return) << ',' << format_double(e.solved_fraction)
      << '\n';
}

std::vector<int> chain_optimal_policy(const ChainMdp& mdp) {
  const int n = mdp.states;
  std::vector<double> v(static_cast<std::size_t>(n), 0.0);
  auto q = [&](int s, int a) {
    const int s2 = a == 0 ? s - 1 : s + 1;
    if (s2 == 0) return mdp.left_reward;
    if (s2 == n - 1) return mdp.right_reward;
    return mdp.gamma * v[static_cast<std::size_t>(s2)];
  };
  for (int it = 0; it < 1000; ++it)
    for (int s = 1; s < n - 1; ++s) v[static_cast<std::size_t>(s)] = std::max(q(s, 0), q(s, 1));
  std::vector<int> pi(static_cast<std::size_t>(n), -1);
  for (int s = 1; s < n - 1; ++s) pi[static_cast<std::size_t>(s)] = q(s, 1) > q(s, 0) ? 1 : 0;
  return pi;
}

std::vector<int> tabular_actor_critic(const ChainMdp& mdp, std::span<const double> potential,
                                      const TabularConfig& cfg) {
  const int n = mdp.states;
  if (n < 3) throw ConfigError("chain needs at least 3 states");
  if (!potential.empty() && static_cast<int>(potential.size()) != n)
    throw ConfigError("potential needs one entry per state");
  std::vector<std::array<double, 2>> logits(static_cast<std::size_t>(n), {0.0, 0.0});
  std::vector<double> value(static_cast<std::size_t>(n), 0.0);
  std::mt19937_64 rng(cfg.seed);
  auto phi = [&](int s) { return potential.empty() ? 0.0 : potential[static_cast<std::size_t>(s)]; };
  auto policy = [&](int s) {
    const auto& z = logits[static_cast<std::size_t>(s)];
    const double m = std::max(z[0], z[1]);
    const double e0 = std::exp(z[0] - m), e1 = std::exp(z[1] - m);
    return std::array<double, 2>{e0 / (e0 + e1), e1 / (e0 + e1)};
  };
  for (int ep = 0; ep < cfg.episodes; ++ep) {
    int s = mdp.start >= 1 && mdp.start < n - 1
                ? mdp.start
                : 1 + static_cast<int>(rng() % static_cast<std::uint64_t>(n - 2));
    bool done = false;
    for (int t = 0; t < mdp.max_steps && !done;) {
      std::vector<int> ss, as;
      std::vector<double> rs;
      for (int k = 0; k < cfg.t_max && !done && t < mdp.max_steps; ++k, ++t) {
        const auto p = policy(s);
        const int a = std::uniform_real_distribution<double>(0, 1)(rng) < p[0] ? 0 : 1;
        const int s2 = a == 0 ? s - 1 : s + 1;
        done = s2 == 0 || s2 == n - 1;
        double r = s2 == 0 ? mdp.left_reward : s2 == n - 1 ? mdp.right_reward : 0.0;
        r = potential.empty() ? r : shaped_reward(r, phi(s), phi(s2), mdp.gamma, done);
        ss.push_back(s);
        as.push_back(a);
        rs.push_back(r);
        s = s2;
      }
      const double boot = done ? 0.0 : value[static_cast<std::size_t>(s)];
      const auto targets = nstep_targets(rs, boot, mdp.gamma);
      for (std::size_t i = 0; i < ss.size(); ++i) {
        const auto si = static_cast<std::size_t>(ss[i]);
        const auto p = policy(ss[i]);
        const double adv = targets[i] - value[si];
        const double h = -(p[0] * std::log(p[0]) + p[1] * std::log(p[1]));
        for (int c = 0; c < 2; ++c) {
          const double g = adv * (p[c] - (c == as[i] ? 1.0 : 0.0)) +
                           cfg.entropy_beta * p[c] * (std::log(p[c]) + h);
          logits[si][c] -= cfg.learning_rate * g;
        }
        value[si] += cfg.learning_rate * adv;
      }
    }
  }
  std::vector<int> pi(static_cast<std::size_t>(n), -1);
  for (int s = 1; s < n - 1; ++s) {
    const auto& z = logits[static_cast<std::size_t>(s)];
    pi[static_cast<std::size_t>(s)] = z[1] > z[0] ? 1 : 0;
  }
  return pi;
}

}  // namespace bimgame::rl
