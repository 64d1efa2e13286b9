#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "bimgame/config.hpp"
#include "bimgame/expert.hpp"
#include "bimgame/imitation.hpp"
#include "bimgame/maze.hpp"
#include "bimgame/rl.hpp"

// End-to-end experiment orchestration: expert data, pre-training, the value
// potential, the four actor-critic variants, DAgger, curves and plots.
namespace bimgame::harness {

struct Variant {
  std::string name;
  bool pretrained = false;
  bool shaping = false;
};

// a3c | pre_a3c | a3c_shape | pre_a3c_shape
Variant parse_variant(const std::string& name);

struct ExperimentPlan {
  std::string output_dir = "runs/plan";
  maze::GeometryConfig geometry = maze::GeometryConfig::desk();
  maze::TaskSpec task = maze::TaskSpec::full();
  expert::ShootingConfig shooting;
  expert::DatasetOptions data{200, 0.2, 5000, false, 1};
  nn::Architecture arch = nn::Architecture::desk();
  imitation::PretrainConfig pretrain;
  imitation::PretrainConfig value;
  rl::A3CConfig a3c;
  std::vector<Variant> variants;
  std::vector<std::uint64_t> seeds{0, 1, 2};
  bool dagger_enabled = true;
  bool dagger_match_queries = true;  // query budget = labelled steps in the dataset
  imitation::DaggerConfig dagger;
  int histogram_bin = 25;
  double threshold_fraction = 0.8;  // of the expert's mean return

  // Keys: output, task, seeds, variants, geometry.*, expert.*, data.*, arch.*,
  // pretrain.*, value.* (defaults to pretrain.*), rl.*, dagger.*,
  // histogram_bin, threshold_fraction.
  static ExperimentPlan from_config(const KeyValueConfig& kv);
  KeyValueConfig to_config() const;
};

struct Crossing {
  bool reached = false;
  std::int64_t step = 0;
  std::size_t episode = 0;
};

// First episode at which the trailing `window`-episode mean return reaches
// `threshold`; only full windows count.
Crossing first_crossing(const std::vector<rl::EpisodeLog>& curve, double threshold,
                        std::size_t window = 100);

struct SpeedupReport {
  Crossing baseline;
  Crossing treatment;
  double ratio = 0.0;        // baseline steps / treatment steps when both cross
  bool both_reached = false;
  // Treatment crossed but the baseline did not: baseline_budget / treatment
  // steps is a lower bound on the ratio.
  bool censored = false;
  double lower_bound = 0.0;

  std::string text() const;
};

SpeedupReport speedup_report(const std::vector<rl::EpisodeLog>& baseline,
                             const std::vector<rl::EpisodeLog>& treatment, double threshold,
                             std::int64_t baseline_budget = 0, std::size_t window = 100);

struct StageOutcome {
  std::string name;
  std::string hash;
  bool skipped = false;
};

struct RunSummary {
  std::vector<StageOutcome> stages;
  std::string report;
};

using Logger = std::function<void(const std::string&)>;

// Runs every stage in dependency order. A stage whose record carries the same
// config hash and whose outputs all exist is skipped; a different recorded
// hash raises StaleArtifactError. A lock file keeps a second writer out.
RunSummary run_plan(const ExperimentPlan& plan, const Logger& log = {});

}  // namespace bimgame::harness
