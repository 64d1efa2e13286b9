#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "bimgame/config.hpp"
#include "bimgame/maze.hpp"

// Random-shooting model-predictive control that uses the simulator itself as
// the forward model, plus the trajectory dataset built from its rollouts.
namespace bimgame::expert {

enum class RewardMode { Radial, Geodesic };
// TowardCenter rewards d(prev) - d(next); AsWritten rewards d(next) - d(prev).
enum class ProgressSign { TowardCenter, AsWritten };

struct ShootingConfig {
  int candidates = 10;  // K
  int horizon = 20;     // H
  RewardMode reward_mode = RewardMode::Radial;
  ProgressSign progress_sign = ProgressSign::TowardCenter;
  std::uint64_t rng_seed = 0;
  // Score every one of the 5^H sequences in lexicographic order instead of
  // sampling `candidates` of them.
  bool exhaustive = false;

  static ShootingConfig from_config(const KeyValueConfig& kv);
  KeyValueConfig to_config() const;
};

// Holds what the shooting objective needs: geometry, task and (for geodesic
// scoring) the precomputed distance field. Immutable and shareable.
class ShootingExpert {
 public:
  ShootingExpert(const maze::MazeGeometry& geometry, const maze::TaskSpec& task,
                 ShootingConfig cfg);

  struct Choice {
    maze::Action action = maze::Action::Noop;
    double predicted_return = 0.0;
    int candidate = 0;  // index of the winning sequence
  };

  // d(s) under the configured reward mode.
  double distance(const maze::BoardState& s) const;
  double progress_reward(const maze::BoardState& prev, const maze::BoardState& next) const;

  // Cumulative progress reward of an action sequence; stops early at a task
  // terminal.
  double score(const maze::BoardState& start, const std::vector<maze::Action>& seq) const;

  // One receding-horizon decision: sample K uniform sequences of length H,
  // return the first action of the best (ties go to the lowest index).
  Choice choose(const maze::BoardState& state, std::mt19937_64& rng) const;
  // Reproducible decision for query `query_id`; the rng is derived from
  // (cfg.rng_seed, query_id).
  Choice choose(const maze::BoardState& state, std::uint64_t query_id) const;

  const ShootingConfig& config() const { return cfg_; }
  const maze::MazeGeometry& geometry() const { return geometry_; }
  const maze::TaskSpec& task() const { return task_; }

 private:
  maze::MazeGeometry geometry_;
  maze::TaskSpec task_;
  ShootingConfig cfg_;
  std::optional<maze::GeodesicField> geodesic_;
};

double progress_reward(const maze::BoardState& prev, const maze::BoardState& next,
                       ProgressSign sign);

std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b);

struct TrajectoryStep {
  maze::BoardState state;  // state before the action
  maze::Action action = maze::Action::Noop;
  double reward = 0.0;  // task reward of the transition
};

struct Trajectory {
  std::uint64_t episode_seed = 0;
  std::vector<TrajectoryStep> steps;
  maze::BoardState final_state;
  bool terminal = false;
  bool solved = false;

  std::size_t size() const { return steps.size(); }
};

// Closed-loop rollout from reset(seed) until the task terminal or max_steps.
Trajectory generate_trajectory(const ShootingExpert& expert, std::uint64_t episode_seed,
                               int max_steps);

// Re-simulates the recorded actions; true when every state and reward matches
// bit for bit.
bool replay_matches(const maze::MazeGeometry& geometry, const maze::TaskSpec& task,
                    const Trajectory& traj);

struct DatasetOptions {
  int trajectories = 100;
  double test_fraction = 0.2;
  int max_steps = 5000;
  bool keep_unsolved = false;
  int workers = 1;
};

struct Dataset {
  maze::GeometryConfig geometry;
  maze::TaskSpec task;
  ShootingConfig shooting;
  std::vector<Trajectory> trajectories;
  std::vector<std::size_t> train;
  std::vector<std::size_t> test;

  std::size_t total_steps() const;
  std::size_t solved_count() const;
};

Dataset build_dataset(const ShootingExpert& expert, const DatasetOptions& opts);

// Binary trajectory file. Observations are not stored; they are re-rendered
// from the stored states on load.
void save_dataset(const Dataset& data, const std::string& path);
Dataset load_dataset(const std::string& path);

struct HistogramBin {
  std::int64_t lo = 0;
  std::int64_t hi = 0;
  std::size_t count = 0;
};

std::vector<HistogramBin> length_histogram(const Dataset& data, std::int64_t bin_width,
                                           bool include_unsolved = false);
void write_histogram_csv(const std::vector<HistogramBin>& bins, const std::string& path);

}  // namespace bimgame::expert
