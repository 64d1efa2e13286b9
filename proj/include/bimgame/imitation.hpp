#pragma once

#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "bimgame/agent.hpp"
#include "bimgame/config.hpp"
#include "bimgame/expert.hpp"
#include "bimgame/network.hpp"

// Supervised pre-training on expert trajectories, the value-only potential
// network, and the DAgger baseline.
namespace bimgame::imitation {

// G_t = r_t + gamma * G_{t+1}, with G after the last step = 0.
std::vector<double> compute_returns(std::span<const double> rewards, double gamma);

// One episode as the learner sees it. `taken` feeds the previous-action input;
// `labels` are the expert's actions at each state. They coincide for expert
// rollouts and differ for DAgger's learner rollouts.
struct LabeledEpisode {
  std::uint64_t seed = 0;
  std::vector<maze::BoardState> states;
  std::vector<int> taken;
  std::vector<double> rewards;
  std::vector<int> labels;
  std::vector<std::uint64_t> query_ids;  // expert query behind each label
  std::vector<double> returns;

  std::size_t size() const { return states.size(); }
};

LabeledEpisode from_trajectory(const expert::Trajectory& traj, double gamma);
std::vector<LabeledEpisode> from_dataset(const expert::Dataset& data,
                                         const std::vector<std::size_t>& indices, double gamma);

// Network inputs for every step of an episode.
std::vector<nn::NetworkInput> episode_inputs(const agent::Observer& obs, const LabeledEpisode& ep);

struct PretrainConfig {
  nn::Architecture arch;
  double gamma = 0.99;
  double l2_lambda = 1e-4;
  double policy_loss_weight = 1.0;  // 0 drops the cross-entropy term
  double value_loss_weight = 0.5;
  int epochs = 50;
  int batch_episodes = 1;
  nn::RmsPropConfig optimizer{5e-4, 0.99, 1e-8};
  double clip_norm = 40.0;  // <= 0 disables clipping
  std::uint64_t seed = 0;   // initialization and episode order

  static PretrainConfig from_config(const KeyValueConfig& kv);
  KeyValueConfig to_config() const;
};

struct LossBreakdown {
  double total = 0.0;
  double cross_entropy = 0.0;
  double value = 0.0;  // weighted squared error
  double l2 = 0.0;
  std::size_t steps = 0;
  std::size_t correct = 0;  // greedy action equals label
};

// Sum over steps of w_pi * CE(label, policy) + w_v * (V - G)^2 over the given
// episodes (each unrolled from a zero recurrent state) plus the L2 term.
// Accumulates the gradient into `grad` when non-null.
LossBreakdown pretrain_loss(const nn::NetworkParams& params, const agent::Observer& obs,
                            std::span<const LabeledEpisode> episodes, const PretrainConfig& cfg,
                            std::vector<double>* grad);

struct EpochMetrics {
  int epoch = 0;  // 0 = before any update
  double train_loss = 0.0;
  double train_accuracy = 0.0;
  double test_accuracy = 0.0;
  double test_value_mse = 0.0;
};

struct PretrainResult {
  nn::NetworkParams best;  // highest test accuracy (lowest test value error for value-only)
  nn::NetworkParams last;
  int best_epoch = 0;
  std::vector<EpochMetrics> curve;
};

using EpochCallback = std::function<void(const EpochMetrics&)>;

// Gradient descent over whole episodes. Throws DatasetError on an empty split.
PretrainResult pretrain(const maze::MazeGeometry& geometry, std::span<const LabeledEpisode> train,
                        std::span<const LabeledEpisode> test, const PretrainConfig& cfg,
                        const std::optional<nn::NetworkParams>& init = std::nullopt,
                        const EpochCallback& on_epoch = {});
PretrainResult pretrain(const expert::Dataset& data, const PretrainConfig& cfg,
                        const EpochCallback& on_epoch = {});

// Same pipeline with the cross-entropy term dropped; `best` comes back frozen.
PretrainResult train_value_only(const expert::Dataset& data, PretrainConfig cfg,
                                const EpochCallback& on_epoch = {});

void write_metrics_csv(const std::vector<EpochMetrics>& curve, const std::string& path);

struct DaggerConfig {
  int iterations = 10;
  int rollouts_per_iteration = 10;
  int max_steps = 0;         // 0: the task's episode cap
  bool warm_start = false;   // retrain from scratch by default
  std::size_t query_budget = 0;  // stop once this many labels exist; 0 = no limit
  int eval_episodes = 20;
  agent::ActionSelection rollout_selection = agent::ActionSelection::Sample;
  agent::ActionSelection eval_selection = agent::ActionSelection::Greedy;
  std::uint64_t seed = 0;
  PretrainConfig train;  // policy-only training is forced

  static DaggerConfig from_config(const KeyValueConfig& kv);
  KeyValueConfig to_config() const;
};

struct DaggerIteration {
  int iteration = 0;  // 1-based
  double beta = 0.0;
  std::size_t aggregate_steps = 0;
  std::size_t expert_queries = 0;  // cumulative
  double train_accuracy = 0.0;
  double eval_return = 0.0;
  double eval_solved = 0.0;
};

struct DaggerResult {
  nn::NetworkParams params;
  std::vector<DaggerIteration> iterations;
  std::vector<LabeledEpisode> aggregate;
};

// beta_1 = 1 (pure expert rollouts), beta_i = 0 afterwards.
double dagger_beta(int iteration);

DaggerResult dagger(const expert::ShootingExpert& expert, const DaggerConfig& cfg,
                    const std::function<void(const DaggerIteration&)>& on_iteration = {});

void write_dagger_csv(const std::vector<DaggerIteration>& its, const std::string& path);

}  // namespace bimgame::imitation
