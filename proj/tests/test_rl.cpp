#include <cmath>
#include <cstdio>
#include <set>

#include "bimgame/error.hpp"
#include "bimgame/expert.hpp"
#include "bimgame/rl.hpp"
#include "doctest.h"
#include "fd_oracle.hpp"

using namespace bimgame;
using namespace bimgame::rl;

namespace {

const maze::MazeGeometry& desk() {
  static const auto g = maze::MazeGeometry::build(maze::GeometryConfig::desk());
  return g;
}

nn::Architecture small_arch() {
  nn::Architecture a;
  a.height = 16;
  a.width = 16;
  a.conv1_filters = 4;
  a.conv1_kernel = 4;
  a.conv1_stride = 2;
  a.conv2_filters = 4;
  a.conv2_kernel = 3;
  a.conv2_stride = 2;
  a.fc = 16;
  a.lstm = 8;
  return a;
}

nn::Architecture tiny_arch() {
  nn::Architecture a;
  a.height = 8;
  a.width = 8;
  a.conv1_filters = 2;
  a.conv1_kernel = 3;
  a.conv1_stride = 1;
  a.conv2_filters = 2;
  a.conv2_kernel = 2;
  a.conv2_stride = 2;
  a.fc = 4;
  a.lstm = 3;
  return a;
}

nn::NetworkParams frozen_vhat(std::uint64_t seed) {
  auto p = nn::NetworkParams::initialize(small_arch(), seed);
  // Larger value head so the potential is far from zero.
  const auto lay = p.layout();
  for (std::size_t i = lay.value_w.offset; i < lay.value_w.offset + lay.value_w.size; ++i)
    p.values[i] *= 20.0;
  p.values[lay.value_b.offset] = 0.4;
  p.frozen = true;
  return p;
}

A3CConfig small_cfg() {
  A3CConfig c;
  c.arch = small_arch();
  c.workers = 1;
  c.budget = 400;
  c.max_episode_steps = 60;
  c.optimizer.learning_rate = 1e-3;
  return c;
}

}  // namespace

TEST_CASE("shaped reward algebra") {
  CHECK(shaped_reward(1.0, 0.0, 0.0, 0.99, false) == 1.0);
  CHECK(shaped_reward(-1.0, 0.0, 0.0, 0.99, true) == -1.0);
  const double c = 0.7;
  CHECK(shaped_reward(1.0, c, c, 0.99, false) == doctest::Approx(1.0 + (0.99 - 1) * c));
  CHECK(shaped_reward(1.0, 0.3, 5.0, 0.99, true) == doctest::Approx(0.7));
}

TEST_CASE("shaping refuses a trainable potential") {
  auto p = nn::NetworkParams::initialize(small_arch(), 1);
  CHECK_THROWS_AS(ShapingPotential(p, desk(), 0.99), PreconditionError);
}

TEST_CASE("shaping telescopes over recorded episodes") {
  const auto vhat = frozen_vhat(2);
  const auto policy = nn::NetworkParams::initialize(small_arch(), 3);
  const double gamma = 0.99;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto task = seed % 2 ? maze::TaskSpec::full() : maze::TaskSpec::steps_to_go(1);
    const auto rec = agent::run_episode(policy, desk(), task, seed, 80,
                                        agent::ActionSelection::Sample, seed);
    ShapingPotential phi(vhat, desk(), gamma);
    phi.reset(rec.states.front());
    const double v0 = phi.current();
    double lhs = 0, task_sum = 0, w = 1;
    for (std::size_t t = 0; t < rec.size(); ++t) {
      const auto& next = t + 1 < rec.size() ? rec.states[t + 1] : rec.final_state;
      const bool term = rec.terminal && t + 1 == rec.size();
      lhs += w * phi.step(rec.actions[t], rec.rewards[t], next, term);
      task_sum += w * rec.rewards[t];
      w *= gamma;
    }
    const double rhs = task_sum + (rec.terminal ? 0.0 : w * phi.current()) - v0;
    CHECK(std::abs(lhs - rhs) <= 1e-10);
    CHECK(std::abs(v0) > 1e-3);
  }
}

TEST_CASE("n-step targets") {
  const std::vector<double> r{1, 0, 2};
  const auto t = nstep_targets(r, 10.0, 0.5);
  CHECK(t[2] == 7.0);
  CHECK(t[1] == 3.5);
  CHECK(t[0] == 2.75);
}

TEST_CASE("actor-critic loss gradient matches finite differences") {
  const auto a = tiny_arch();
  const agent::Observer obs(desk(), a);
  const auto task = maze::TaskSpec::full();
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    CAPTURE(seed);
    auto p = nn::NetworkParams::initialize(a, seed);
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(-0.2, 0.2);
    for (double& v : p.values) v += u(rng);
    const auto s0 = maze::reset(desk(), task, seed);
    const auto s1 = maze::step(desk(), s0, maze::Action::TiltXPlus, task).state;
    std::vector<nn::NetworkInput> in{obs.input(s0, -1, 0.0), obs.input(s1, 0, 0.0)};
    const std::vector<int> acts{0, 3};
    const std::vector<double> targets{0.8, -0.4}, adv{0.5, -1.2};
    std::vector<double> grad;
    a3c_loss(p, in, acts, targets, adv, 0.05, 0.5, nn::RecurrentState::zeros(a), &grad);
    const auto rep = fd::compare(p.values, grad, [&](const std::vector<double>& x) {
      nn::NetworkParams q = p;
      q.values = x;
      return a3c_loss(q, in, acts, targets, adv, 0.05, 0.5, nn::RecurrentState::zeros(a), nullptr);
    });
    CHECK(rep.max_rel_error <= 1e-4);
  }
}

TEST_CASE("zero advantage leaves only the entropy gradient") {
  const auto a = tiny_arch();
  const agent::Observer obs(desk(), a);
  const auto p = nn::NetworkParams::initialize(a, 4);
  const auto s0 = maze::reset(desk(), maze::TaskSpec::full(), 4);
  std::vector<nn::NetworkInput> in{obs.input(s0, -1, 0.0), obs.input(s0, 2, 0.0)};
  const auto outs = nn::forward_sequence(p, in, nn::RecurrentState::zeros(a));
  const std::vector<double> targets{outs[0].value, outs[1].value}, adv{0.0, 0.0};
  const std::vector<int> acts{1, 4};
  std::vector<double> g0;
  a3c_loss(p, in, acts, targets, adv, 0.0, 0.5, nn::RecurrentState::zeros(a), &g0);
  for (double g : g0) CHECK(g == 0.0);

  std::vector<double> ge;
  a3c_loss(p, in, acts, targets, adv, 0.1, 0.5, nn::RecurrentState::zeros(a), &ge);
  const auto rep = fd::compare(p.values, ge, [&](const std::vector<double>& x) {
    nn::NetworkParams q = p;
    q.values = x;
    double h = 0;
    for (const auto& o : nn::forward_sequence(q, in, nn::RecurrentState::zeros(a)))
      h += nn::entropy(o.policy);
    return -0.1 * h;
  });
  CHECK(rep.max_rel_error <= 1e-4);
}

TEST_CASE("zero budget returns the initial parameters") {
  auto cfg = small_cfg();
  cfg.budget = 0;
  const auto r = train(desk(), maze::TaskSpec::full(), cfg);
  CHECK(r.curve.empty());
  CHECK(r.total_steps == 0);
  CHECK(r.params.values ==
        nn::NetworkParams::initialize(cfg.arch, expert::mix_seed(cfg.seed, 0x1417)).values);
}

TEST_CASE("single-worker training is bit-reproducible") {
  const auto cfg = small_cfg();
  const auto a = train(desk(), maze::TaskSpec::full(), cfg);
  const auto b = train(desk(), maze::TaskSpec::full(), cfg);
  CHECK(a.params.values == b.params.values);
  REQUIRE(a.curve.size() == b.curve.size());
  CHECK(a.curve.size() >= 5);
  for (std::size_t i = 0; i < a.curve.size(); ++i) {
    CHECK(a.curve[i].step == b.curve[i].step);
    CHECK(a.curve[i].episode_return == b.curve[i].episode_return);
  }
}

TEST_CASE("step accounting and curve ordering") {
  for (bool threaded : {false, true}) {
    CAPTURE(threaded);
    auto cfg = small_cfg();
    cfg.workers = 3;
    cfg.threaded = threaded;
    cfg.budget = 500;
    const auto r = train(desk(), maze::TaskSpec::full(), cfg);
    std::int64_t sum = 0;
    for (auto s : r.worker_steps) sum += s;
    CHECK(sum == r.total_steps);
    CHECK(r.total_steps >= cfg.budget);
    CHECK(r.total_steps < cfg.budget + cfg.t_max);
    for (std::size_t i = 1; i < r.curve.size(); ++i) CHECK(r.curve[i].step > r.curve[i - 1].step);
  }
}

TEST_CASE("workers draw the same seed streams regardless of worker count") {
  auto one = small_cfg();
  one.budget = 300;
  auto three = one;
  three.workers = 3;
  three.budget = 900;
  const auto r1 = train(desk(), maze::TaskSpec::full(), one);
  const auto r3 = train(desk(), maze::TaskSpec::full(), three);
  std::vector<std::uint64_t> s1, s3;
  for (const auto& e : r1.curve) s1.push_back(e.seed);
  for (const auto& e : r3.curve)
    if (e.worker == 0) s3.push_back(e.seed);
  const auto n = std::min(s1.size(), s3.size());
  REQUIRE(n >= 3);
  CHECK(std::equal(s1.begin(), s1.begin() + static_cast<long>(n), s3.begin()));
}

TEST_CASE("shaped training logs a telescoping residual near zero") {
  const std::string path = "test_rl_vhat.net";
  nn::save_params(frozen_vhat(5), path);
  auto cfg = small_cfg();
  cfg.shaping = path;
  cfg.budget = 300;
  const auto r = train(desk(), maze::TaskSpec::full(), cfg);
  REQUIRE(!r.curve.empty());
  for (const auto& e : r.curve) CHECK(std::abs(e.shaping_residual) <= 1e-10);

  cfg.shaping_gamma = 0.95;
  CHECK_THROWS_AS(train(desk(), maze::TaskSpec::full(), cfg), ConfigError);

  auto unfrozen = frozen_vhat(5);
  unfrozen.frozen = false;
  nn::save_params(unfrozen, path);
  cfg.shaping_gamma = -1;
  CHECK_THROWS_AS(train(desk(), maze::TaskSpec::full(), cfg), PreconditionError);
  std::remove(path.c_str());
}

TEST_CASE("checkpoint init must match the architecture") {
  const std::string path = "test_rl_init.net";
  nn::save_params(nn::NetworkParams::initialize(tiny_arch(), 1), path);
  auto cfg = small_cfg();
  cfg.init = path;
  CHECK_THROWS_AS(train(desk(), maze::TaskSpec::full(), cfg), ShapeError);
  nn::save_params(nn::NetworkParams::initialize(small_arch(), 1), path);
  cfg.budget = 40;
  CHECK(train(desk(), maze::TaskSpec::full(), cfg).total_steps >= 40);
  std::remove(path.c_str());
}

TEST_CASE("policy entropy stays within [0, ln 5]") {
  auto cfg = small_cfg();
  cfg.budget = 200;
  const auto r = train(desk(), maze::TaskSpec::full(), cfg);
  const agent::Observer obs(desk(), cfg.arch);
  auto h = nn::RecurrentState::zeros(cfg.arch);
  auto s = maze::reset(desk(), maze::TaskSpec::full(), 3);
  for (int t = 0; t < 50; ++t) {
    const auto o = nn::forward(r.params, obs.input(s, t ? 0 : -1, 0.0), h);
    const double e = nn::entropy(o.policy);
    CHECK(e >= 0.0);
    CHECK(e <= std::log(5.0) + 1e-12);
    h = o.next;
    s = maze::step(desk(), s, maze::Action::TiltYPlus, maze::TaskSpec::full()).state;
  }
}

TEST_CASE("moving average and curve csv") {
  const std::vector<double> v{1, 2, 3, 4};
  const auto m = moving_average(v, 2);
  CHECK(m == std::vector<double>{1, 1.5, 2.5, 3.5});
  std::vector<EpisodeLog> c(2);
  c[0].step = 10;
  c[0].episode_return = 1;
  c[1].step = 25;
  c[1].episode_return = -1;
  c[1].ma100 = 0.0;
  write_curve_csv(c, "test_rl_curve.csv");
  const auto back = read_curve_csv("test_rl_curve.csv");
  REQUIRE(back.size() == 2);
  CHECK(back[1].step == 25);
  CHECK(back[1].episode_return == -1);
  std::remove("test_rl_curve.csv");
}

TEST_CASE("chain MDP oracle") {
  ChainMdp mdp;
  CHECK(chain_optimal_policy(mdp) == std::vector<int>{-1, 1, 1, 1, -1});
  mdp.left_reward = 0.95;
  CHECK(chain_optimal_policy(mdp) == std::vector<int>{-1, 0, 1, 1, -1});
}

TEST_CASE("shaping preserves the greedy policy on a chain") {
  for (double left : {0.5, 0.95}) {
    ChainMdp mdp;
    mdp.left_reward = left;
    mdp.start = -1;
    const auto optimal = chain_optimal_policy(mdp);
    const std::vector<double> misleading{0.0, 3.0, 1.0, -2.0, 0.0};
    for (std::uint64_t seed : {0u, 1u}) {
      TabularConfig cfg;
      cfg.seed = seed;
      CHECK(tabular_actor_critic(mdp, {}, cfg) == optimal);
      CHECK(tabular_actor_critic(mdp, misleading, cfg) == optimal);
    }
  }
}
