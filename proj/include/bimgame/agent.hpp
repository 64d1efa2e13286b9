#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include "bimgame/maze.hpp"
#include "bimgame/network.hpp"

// Glue between the simulator and the network: observations, action
// selection and whole-episode policy rollouts.
namespace bimgame::agent {

// Episode seeds at or above this value are reserved for evaluation.
inline constexpr std::uint64_t kEvalSeedBase = 1'000'000;

// Control-step cap per episode: 2000 for FULL, 1000 for steps-to-go tasks.
int episode_cap(const maze::TaskSpec& task);

class Observer {
 public:
  Observer(const maze::MazeGeometry& geometry, const nn::Architecture& arch);

  nn::NetworkInput input(const maze::BoardState& state, int prev_action,
                         double prev_reward) const;
  void fill(nn::NetworkInput& in, const maze::BoardState& state, int prev_action,
            double prev_reward) const;

  const maze::Renderer& renderer() const { return renderer_; }

 private:
  maze::Renderer renderer_;
};

enum class ActionSelection { Greedy, Sample };

// Argmax with ties going to the lowest index.
int greedy_action(const std::array<double, nn::kActions>& policy);
int sample_action(const std::array<double, nn::kActions>& policy, std::mt19937_64& rng);

struct EpisodeRecord {
  std::uint64_t seed = 0;
  std::vector<maze::BoardState> states;  // state before each action
  std::vector<int> actions;
  std::vector<double> rewards;
  maze::BoardState final_state;
  bool terminal = false;
  double total_reward = 0.0;

  std::size_t size() const { return actions.size(); }
};

EpisodeRecord run_episode(const nn::NetworkParams& params, const maze::MazeGeometry& geometry,
                          const maze::TaskSpec& task, std::uint64_t seed, int max_steps,
                          ActionSelection selection, std::uint64_t action_seed = 0);

struct Evaluation {
  double mean_return = 0.0;
  double solved_fraction = 0.0;
  double mean_length = 0.0;
  std::vector<double> returns;
};

// Runs one episode per seed in kEvalSeedBase + [0, episodes).
Evaluation evaluate(const nn::NetworkParams& params, const maze::MazeGeometry& geometry,
                    const maze::TaskSpec& task, int episodes, ActionSelection selection,
                    int max_steps = 0);

}  // namespace bimgame::agent
