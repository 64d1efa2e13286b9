#include <cmath>
#include <fstream>
#include <map>

#include "bimgame/error.hpp"
#include "bimgame/imitation.hpp"
#include "doctest.h"
#include "fd_oracle.hpp"

using namespace bimgame;
using namespace bimgame::imitation;

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

const expert::Dataset& data10() {
  static const expert::Dataset d = [] {
    const expert::ShootingExpert e(desk(), maze::TaskSpec::full(), expert::ShootingConfig{});
    expert::DatasetOptions o;
    o.trajectories = 10;
    o.max_steps = 3000;
    return expert::build_dataset(e, o);
  }();
  return d;
}

LabeledEpisode truncated(const LabeledEpisode& ep, std::size_t n, double gamma) {
  LabeledEpisode out = ep;
  out.states.resize(n);
  out.taken.resize(n);
  out.labels.resize(n);
  out.rewards.resize(n);
  out.query_ids.resize(n);
  out.returns = compute_returns(out.rewards, gamma);
  return out;
}

}  // namespace

TEST_CASE("discounted returns") {
  const std::vector<double> r{0, 0, 1};
  const auto g = compute_returns(r, 0.9);
  CHECK(g[0] == doctest::Approx(0.81).epsilon(1e-15));
  CHECK(g[1] == doctest::Approx(0.9).epsilon(1e-15));
  CHECK(g[2] == 1.0);
  CHECK(compute_returns(r, 0.0) == r);
  for (double v : compute_returns(std::vector<double>(5, 0.0), 0.99)) CHECK(v == 0.0);

  std::mt19937_64 rng(1);
  std::normal_distribution<double> n;
  std::vector<double> rr(300);
  for (double& v : rr) v = n(rng);
  const auto gg = compute_returns(rr, 0.97);
  for (std::size_t t = 0; t < rr.size(); ++t) {
    double direct = 0, w = 1;
    for (std::size_t k = t; k < rr.size(); ++k, w *= 0.97) direct += w * rr[k];
    CHECK(std::abs(gg[t] - direct) <= 1e-12);
    if (t + 1 < rr.size()) CHECK(std::abs(gg[t] - 0.97 * gg[t + 1] - rr[t]) <= 1e-12);
  }
}

TEST_CASE("trajectory conversion keeps labels and query ids") {
  const auto& d = data10();
  const auto ep = from_trajectory(d.trajectories[0], 0.99);
  CHECK(ep.size() == d.trajectories[0].size());
  CHECK(ep.taken == ep.labels);
  const expert::ShootingExpert e(desk(), maze::TaskSpec::full(), d.shooting);
  for (std::size_t t = 0; t < 20; ++t)
    CHECK(maze::action_index(e.choose(ep.states[t], ep.query_ids[t]).action) == ep.labels[t]);
}

TEST_CASE("uniform policy costs ln 5 per step") {
  const auto a = small_arch();
  const agent::Observer obs(desk(), a);
  const auto ep = truncated(from_trajectory(data10().trajectories[1], 0.99), 12, 0.99);
  PretrainConfig cfg;
  cfg.arch = a;
  const auto zero = nn::NetworkParams::zeros(a);
  const auto l = pretrain_loss(zero, obs, std::span(&ep, 1), cfg, nullptr);
  CHECK(l.cross_entropy == doctest::Approx(12 * std::log(5.0)).epsilon(1e-12));
  double expect_v = 0;
  for (double g : ep.returns) expect_v += 0.5 * g * g;
  CHECK(l.value == doctest::Approx(expect_v).epsilon(1e-12));
  CHECK(l.l2 == 0.0);
}

TEST_CASE("perfect value estimates leave only the cross-entropy") {
  const auto a = small_arch();
  const agent::Observer obs(desk(), a);
  auto ep = truncated(from_trajectory(data10().trajectories[2], 0.99), 15, 0.99);
  const auto p = nn::NetworkParams::initialize(a, 3);
  const auto outs =
      nn::forward_sequence(p, episode_inputs(obs, ep), nn::RecurrentState::zeros(a));
  for (std::size_t t = 0; t < ep.size(); ++t) ep.returns[t] = outs[t].value;
  PretrainConfig cfg;
  cfg.arch = a;
  cfg.l2_lambda = 0.0;
  const auto l = pretrain_loss(p, obs, std::span(&ep, 1), cfg, nullptr);
  CHECK(l.value == 0.0);
  CHECK(l.total == l.cross_entropy);
  CHECK(l.cross_entropy > 0.0);
}

TEST_CASE("pretraining loss gradient matches finite differences") {
  const auto a = tiny_arch();
  const agent::Observer obs(desk(), a);
  std::vector<LabeledEpisode> eps{truncated(from_trajectory(data10().trajectories[3], 0.9), 3, 0.9),
                                  truncated(from_trajectory(data10().trajectories[4], 0.9), 2, 0.9)};
  // Non-trivial value targets.
  eps[0].returns = {0.7, -0.2, 1.3};
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    CAPTURE(seed);
    PretrainConfig cfg;
    cfg.arch = a;
    cfg.l2_lambda = 0.01;
    auto p = nn::NetworkParams::initialize(a, seed);
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(-0.2, 0.2);
    for (double& v : p.values) v += u(rng);
    std::vector<double> grad;
    pretrain_loss(p, obs, eps, cfg, &grad);
    const auto rep = fd::compare(p.values, grad, [&](const std::vector<double>& x) {
      nn::NetworkParams q = p;
      q.values = x;
      return pretrain_loss(q, obs, eps, cfg, nullptr).total;
    });
    CAPTURE(rep.worst_index);
    CHECK(rep.max_rel_error <= 1e-4);
  }
}

TEST_CASE("cross-entropy is non-negative") {
  const auto a = small_arch();
  const agent::Observer obs(desk(), a);
  const auto eps = from_dataset(data10(), data10().test, 0.99);
  PretrainConfig cfg;
  cfg.arch = a;
  for (std::uint64_t s = 0; s < 3; ++s) {
    const auto l = pretrain_loss(nn::NetworkParams::initialize(a, s), obs, eps, cfg, nullptr);
    CHECK(l.cross_entropy >= 0.0);
  }
}

TEST_CASE("untrained accuracy is the frequency of the tie-break action") {
  const auto a = small_arch();
  const auto& d = data10();
  const auto train = from_dataset(d, d.train, 0.99);
  const auto test = from_dataset(d, d.test, 0.99);
  std::size_t zeros = 0, n = 0;
  for (const auto& ep : test)
    for (int l : ep.labels) {
      zeros += l == 0;
      ++n;
    }
  PretrainConfig cfg;
  cfg.arch = a;
  cfg.epochs = 0;
  const auto r = pretrain(desk(), train, test, cfg, nn::NetworkParams::zeros(a));
  REQUIRE(r.curve.size() == 1);
  CHECK(r.curve[0].test_accuracy == static_cast<double>(zeros) / n);
  CHECK(r.curve[0].test_accuracy > 0.1);
  CHECK(r.curve[0].test_accuracy < 0.3);
}

TEST_CASE("training loss falls on a small overfit set") {
  const auto a = small_arch();
  std::vector<LabeledEpisode> train;
  for (int i = 0; i < 3; ++i)
    train.push_back(truncated(from_trajectory(data10().trajectories[i], 0.99), 40, 0.99));
  PretrainConfig cfg;
  cfg.arch = a;
  cfg.epochs = 3;
  cfg.optimizer.learning_rate = 1e-3;
  const auto r = pretrain(desk(), train, train, cfg);
  REQUIRE(r.curve.size() == 4);
  for (int e = 1; e <= 3; ++e) CHECK(r.curve[e].train_loss < r.curve[e - 1].train_loss);
}

TEST_CASE("pretraining is deterministic and rejects empty splits") {
  const auto a = small_arch();
  std::vector<LabeledEpisode> train{truncated(from_trajectory(data10().trajectories[0], 0.99), 20, 0.99)};
  PretrainConfig cfg;
  cfg.arch = a;
  cfg.epochs = 2;
  const auto r1 = pretrain(desk(), train, train, cfg);
  const auto r2 = pretrain(desk(), train, train, cfg);
  CHECK(r1.last.values == r2.last.values);
  CHECK_THROWS_AS(pretrain(desk(), {}, train, cfg), DatasetError);
  CHECK_THROWS_AS(pretrain(desk(), train, {}, cfg), DatasetError);
}

TEST_CASE("value-only training") {
  const auto a = small_arch();
  PretrainConfig cfg;
  cfg.arch = a;
  cfg.epochs = 3;
  cfg.optimizer.learning_rate = 1e-3;
  SUBCASE("error falls and the result is frozen") {
    const auto r = train_value_only(data10(), cfg);
    CHECK(r.best.frozen);
    CHECK(r.curve.back().train_loss < r.curve.front().train_loss);
    nn::RmsProp opt(r.best.size(), {});
    auto p = r.best;
    CHECK_THROWS_AS(opt.update(p, std::vector<double>(p.size(), 1.0)), PreconditionError);
  }
  SUBCASE("zero rewards give a near-zero potential") {
    auto d = data10();
    for (auto& t : d.trajectories)
      for (auto& s : t.steps) s.reward = 0.0;
    const auto r = train_value_only(d, cfg);
    const agent::Observer obs(desk(), a);
    double worst = 0;
    for (const auto& ep : from_dataset(d, d.test, cfg.gamma)) {
      const auto outs = nn::forward_sequence(r.best, episode_inputs(obs, ep),
                                             nn::RecurrentState::zeros(a));
      for (const auto& o : outs) worst = std::max(worst, std::abs(o.value));
    }
    CHECK(worst < 0.05);
  }
}

TEST_CASE("metrics csv") {
  std::vector<EpochMetrics> c(2);
  c[1].epoch = 1;
  c[1].test_accuracy = 0.25;
  write_metrics_csv(c, "test_imitation_metrics.csv");
  std::ifstream f("test_imitation_metrics.csv");
  std::string header, row0, row1;
  std::getline(f, header);
  std::getline(f, row0);
  std::getline(f, row1);
  CHECK(header.rfind("epoch,train_loss,test_accuracy", 0) == 0);
  CHECK(row1.rfind("1,0,0.25", 0) == 0);
  std::remove("test_imitation_metrics.csv");
}

TEST_CASE("dagger schedule, aggregation and label consistency") {
  CHECK(dagger_beta(1) == 1.0);
  CHECK(dagger_beta(2) == 0.0);
  CHECK(dagger_beta(7) == 0.0);

  const auto task = maze::TaskSpec::steps_to_go(1);
  const expert::ShootingExpert e(desk(), task, expert::ShootingConfig{});
  DaggerConfig cfg;
  cfg.iterations = 3;
  cfg.rollouts_per_iteration = 2;
  cfg.max_steps = 60;
  cfg.eval_episodes = 2;
  cfg.train.arch = small_arch();
  cfg.train.epochs = 1;
  std::vector<DaggerIteration> seen;
  const auto r = dagger(e, cfg, [&](const DaggerIteration& it) { seen.push_back(it); });
  REQUIRE(r.iterations.size() == 3);
  CHECK(seen.size() == 3);
  for (std::size_t i = 1; i < r.iterations.size(); ++i)
    CHECK(r.iterations[i].aggregate_steps > r.iterations[i - 1].aggregate_steps);
  CHECK(r.iterations.back().expert_queries == r.iterations.back().aggregate_steps);

  // Iteration 1 is pure expert play: identical to the expert's own rollouts.
  for (int j = 0; j < 2; ++j) {
    const auto& ep = r.aggregate[static_cast<std::size_t>(j)];
    CHECK(ep.taken == ep.labels);
    const auto traj = expert::generate_trajectory(e, ep.seed, 60);
    REQUIRE(traj.size() == ep.size());
    for (std::size_t t = 0; t < ep.size(); ++t) CHECK(traj.steps[t].state == ep.states[t]);
  }
  // Every label re-queries to the same expert action.
  for (const auto& ep : r.aggregate)
    for (std::size_t t = 0; t < ep.size(); t += 7)
      CHECK(maze::action_index(e.choose(ep.states[t], ep.query_ids[t]).action) == ep.labels[t]);
}

TEST_CASE("dagger respects the expert query budget") {
  const expert::ShootingExpert e(desk(), maze::TaskSpec::full(), expert::ShootingConfig{});
  DaggerConfig cfg;
  cfg.iterations = 10;
  cfg.rollouts_per_iteration = 1;
  cfg.max_steps = 50;
  cfg.query_budget = 120;
  cfg.eval_episodes = 1;
  cfg.train.arch = small_arch();
  cfg.train.epochs = 1;
  const auto r = dagger(e, cfg);
  CHECK(r.iterations.back().expert_queries == 120);
  CHECK(r.iterations.size() == 3);
}
