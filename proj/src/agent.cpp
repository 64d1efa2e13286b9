#include "bimgame/agent.hpp"

#include "bimgame/error.hpp"

namespace bimgame::agent {

int episode_cap(const maze::TaskSpec& task) {
  return task.kind == maze::TaskKind::Full ? 2000 : 1000;
}

Observer::Observer(const maze::MazeGeometry& geometry, const nn::Architecture& arch)
    : renderer_(geometry, arch.height, arch.width) {}

nn::NetworkInput Observer::input(const maze::BoardState& state, int prev_action,
                                 double prev_reward) const {
  nn::NetworkInput in;
  fill(in, state, prev_action, prev_reward);
  return in;
}

void Observer::fill(nn::NetworkInput& in, const maze::BoardState& state, int prev_action,
                    double prev_reward) const {
  in.image.resize(static_cast<std::size_t>(renderer_.height() * renderer_.width()));
  renderer_.render_into(state, in.image.data());
  in.prev_action = prev_action;
  in.prev_reward = prev_reward;
}

int greedy_action(const std::array<double, nn::kActions>& policy) {
  int best = 0;
  for (int a = 1; a < nn::kActions; ++a)
    if (policy[a] > policy[best]) best = a;
  return best;
}

int sample_action(const std::array<double, nn::kActions>& policy, std::mt19937_64& rng) {
  const double u = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
  double acc = 0.0;
  for (int a = 0; a < nn::kActions; ++a) {
    acc += policy[a];
    if (u < acc) return a;
  }
  return nn::kActions - 1;
}

EpisodeRecord run_episode(const nn::NetworkParams& params, const maze::MazeGeometry& geometry,
                          const maze::TaskSpec& task, std::uint64_t seed, int max_steps,
                          ActionSelection selection, std::uint64_t action_seed) {
  if (max_steps < 1) throw PreconditionError("max_steps must be >= 1");
  const Observer obs(geometry, params.arch);
  std::mt19937_64 rng(action_seed);
  EpisodeRecord rec;
  rec.seed = seed;
  maze::BoardState s = maze::reset(geometry, task, seed);
  nn::RecurrentState h = nn::RecurrentState::zeros(params.arch);
  nn::NetworkInput in;
  int prev_action = -1;
  double prev_reward = 0.0;
  for (int t = 0; t < max_steps; ++t) {
    obs.fill(in, s, prev_action, prev_reward);
    nn::NetworkOutput out = nn::forward(params, in, h);
    const int a = selection == ActionSelection::Greedy ? greedy_action(out.policy)
                                                       : sample_action(out.policy, rng);
    const maze::StepResult r = maze::step(geometry, s, maze::action_from_index(a), task);
    rec.states.push_back(s);
    rec.actions.push_back(a);
    rec.rewards.push_back(r.reward);
    rec.total_reward += r.reward;
    s = r.state;
    h = std::move(out.next);
    prev_action = a;
    prev_reward = r.reward;
    if (r.events.terminal) {
      rec.terminal = true;
      break;
    }
  }
  rec.final_state = s;
  return rec;
}

Evaluation evaluate(const nn::NetworkParams& params, const maze::MazeGeometry& geometry,
                    const maze::TaskSpec& task, int episodes, ActionSelection selection,
                    int max_steps) {
  if (max_steps <= 0) max_steps = episode_cap(task);
  Evaluation ev;
  if (episodes < 1) return ev;
  std::size_t solved = 0, steps = 0;
  for (int i = 0; i < episodes; ++i) {
    const auto seed = kEvalSeedBase + static_cast<std::uint64_t>(i);
    const EpisodeRecord rec = run_episode(params, geometry, task, seed, max_steps, selection, seed);
    ev.returns.push_back(rec.total_reward);
    ev.mean_return += rec.total_reward;
    solved += rec.terminal;
    steps += rec.size();
  }
  ev.mean_return /= episodes;
  ev.solved_fraction = static_cast<double>(solved) / episodes;
  ev.mean_length = static_cast<double>(steps) / episodes;
  return ev;
}

}  // namespace bimgame::agent
