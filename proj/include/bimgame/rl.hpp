#pragma once

#include <chrono>
#include <functional>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "bimgame/agent.hpp"
#include "bimgame/config.hpp"
#include "bimgame/network.hpp"

// Advantage actor-critic fine-tuning with optional potential-based shaping
// from a frozen value network.
namespace bimgame::rl {

// r + gamma * V(next) - V(prev); the V(next) term is dropped at a terminal.
double shaped_reward(double reward, double v_prev, double v_next, double gamma, bool terminal);

// A frozen value network evaluated along one episode. The network is
// recurrent, so the potential of a state is its value output with the
// recurrent state threaded from the episode start; each state's potential is
// computed once and reused as "prev" on the following step.
class ShapingPotential {
 public:
  // Throws PreconditionError unless `vhat` is frozen.
  ShapingPotential(const nn::NetworkParams& vhat, const maze::MazeGeometry& geometry,
                   double gamma);

  void reset(const maze::BoardState& start);
  // Shaped reward for the transition into `next`; advances the potential.
  double step(int action, double reward, const maze::BoardState& next, bool terminal);
  double current() const { return value_; }
  double gamma() const { return gamma_; }

 private:
  const nn::NetworkParams* vhat_;
  agent::Observer obs_;
  double gamma_;
  nn::RecurrentState state_;
  nn::NetworkInput input_;
  double value_ = 0.0;
};

struct A3CConfig {
  nn::Architecture arch;  // used for random init; must match a checkpoint init
  int workers = 8;
  int t_max = 20;
  double gamma = 0.99;
  double entropy_beta = 0.01;
  double value_loss_weight = 0.5;
  nn::RmsPropConfig optimizer{1e-4, 0.99, 1e-8};
  double clip_norm = 40.0;
  std::int64_t budget = 2'000'000;  // total environment steps
  std::string init = "random";      // or a checkpoint path
  std::string shaping = "off";      // or a frozen value checkpoint path
  double shaping_gamma = -1.0;      // < 0: same as gamma
  std::uint64_t seed = 0;
  int max_episode_steps = 0;  // 0: the task's episode cap
  bool threaded = false;      // false: deterministic round-robin in one thread
  std::int64_t eval_every = 0;  // environment steps between evaluations; 0 = off
  int eval_episodes = 10;

  static A3CConfig from_config(const KeyValueConfig& kv);
  KeyValueConfig to_config() const;
};

// Per-step gradient of
//   -log pi(a) * A + w_v * (R - V)^2 - beta * H(pi)
// with the advantage A held constant.
nn::OutputGrad a3c_output_grad(const nn::NetworkOutput& out, int action, double target,
                               double advantage, double entropy_beta, double value_weight);

// Loss of a fixed rollout with fixed targets and advantages, unrolled from
// `initial`. Accumulates the parameter gradient into `grad` when non-null.
double a3c_loss(const nn::NetworkParams& params, std::span<const nn::NetworkInput> inputs,
                std::span<const int> actions, std::span<const double> targets,
                std::span<const double> advantages, double entropy_beta, double value_weight,
                const nn::RecurrentState& initial, std::vector<double>* grad);

// n-step targets R_t = r_t + gamma * R_{t+1}, seeded with `bootstrap`.
std::vector<double> nstep_targets(std::span<const double> rewards, double bootstrap, double gamma);

struct EpisodeLog {
  std::int64_t step = 0;  // global environment steps when the episode ended
  int worker = 0;
  std::uint64_t seed = 0;
  double episode_return = 0.0;  // task reward, never shaped
  double ma100 = 0.0;
  double wallclock_s = 0.0;
  int length = 0;
  bool solved = false;
  // sum gamma^t rbar_t - (sum gamma^t r_t + gamma^T V(s_T)[non-terminal] - V(s_0))
  double shaping_residual = 0.0;
};

struct EvalPoint {
  std::int64_t step = 0;
  double mean_return = 0.0;
  double solved_fraction = 0.0;
};

// One environment and recurrent state owned by a rollout worker.
class Worker {
 public:
  Worker(int id, const maze::MazeGeometry& geometry, const maze::TaskSpec& task,
         const A3CConfig& cfg, const nn::NetworkParams* vhat);

  struct Rollout {
    std::vector<double> grad;
    int steps = 0;
    std::optional<EpisodeLog> finished;
    double loss = 0.0;
  };

  // Collects up to t_max steps with `params` and returns the gradient of the
  // actor-critic loss with respect to them.
  Rollout rollout(const nn::NetworkParams& params);

  int id() const { return id_; }
  std::int64_t steps_taken() const { return steps_taken_; }

 private:
  void start_episode();

  int id_;
  const maze::MazeGeometry* geometry_;
  maze::TaskSpec task_;
  const A3CConfig* cfg_;
  int cap_;
  agent::Observer obs_;
  std::optional<ShapingPotential> shaping_;
  std::mt19937_64 rng_;
  std::uint64_t seed_key_;
  std::uint64_t episodes_ = 0;
  std::int64_t steps_taken_ = 0;

  std::uint64_t episode_seed_ = 0;
  maze::BoardState state_;
  nn::RecurrentState h_;
  int prev_action_ = -1;
  double prev_reward_ = 0.0;
  int t_ = 0;
  double return_ = 0.0;
  double discount_ = 1.0;
  double disc_task_ = 0.0;
  double disc_shaped_ = 0.0;
  double v0_ = 0.0;
};

struct TrainResult {
  nn::NetworkParams params;
  std::vector<EpisodeLog> curve;
  std::vector<EvalPoint> evals;
  std::int64_t total_steps = 0;
  std::vector<std::int64_t> worker_steps;
  double wallclock_s = 0.0;
};

struct TrainHooks {
  std::function<void(const EpisodeLog&)> on_episode;
  std::function<void(const EvalPoint&)> on_eval;
};

// Runs workers until the step budget is spent. Every rollout reads the current
// shared parameters and applies its gradient through one shared RMSProp state,
// one rollout at a time.
TrainResult train(const maze::MazeGeometry& geometry, const maze::TaskSpec& task,
                  const A3CConfig& cfg, const TrainHooks& hooks = {});

// Moving average over the last `window` returns, per episode.
std::vector<double> moving_average(std::span<const double> values, std::size_t window = 100);

void write_curve_csv(const std::vector<EpisodeLog>& curve, const std::string& path);
std::vector<EpisodeLog> read_curve_csv(const std::string& path);
void write_eval_csv(const std::vector<EvalPoint>& evals, const std::string& path);

// Deterministic chain MDP for checking that shaping leaves the learned greedy
// policy unchanged. States 0..n-1, actions 0 = left and 1 = right; both ends
// are terminal with their own rewards.
struct ChainMdp {
  int states = 5;
  int start = 1;
  double left_reward = 0.5;
  double right_reward = 1.0;
  double gamma = 0.9;
  int max_steps = 50;
};

struct TabularConfig {
  int episodes = 3000;
  int t_max = 5;
  double learning_rate = 0.1;
  double entropy_beta = 0.001;
  std::uint64_t seed = 0;
};

// Tabular softmax actor-critic with the same n-step loss as the network
// learner. `potential` (one entry per state) shapes the reward when non-empty.
// Returns the greedy action per non-terminal state.
std::vector<int> tabular_actor_critic(const ChainMdp& mdp, std::span<const double> potential,
                                      const TabularConfig& cfg);

// Value iteration; optimal action per non-terminal state.
std::vector<int> chain_optimal_policy(const ChainMdp& mdp);

}  // namespace bimgame::rl
