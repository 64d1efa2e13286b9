#include "bimgame/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "bimgame/imitation.hpp"
#include "bimgame/rl.hpp"

namespace bimgame::gradcheck {

Result compare(const std::string& check, std::uint64_t seed, std::vector<double> x,
               const std::vector<double>& analytic,
               const std::function<double(const std::vector<double>&)>& loss, double eps) {
  Result r{check, seed, x.size(), 0.0, 0};
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double keep = x[i];
    x[i] = keep + eps;
    const double up = loss(x);
    x[i] = keep - eps;
    const double down = loss(x);
    x[i] = keep;
    const double num = (up - down) / (2 * eps);
    const double err =
        std::abs(analytic[i] - num) / std::max({std::abs(analytic[i]), std::abs(num), 1e-6});
    if (err > r.max_rel_error) {
      r.max_rel_error = err;
      r.worst_index = i;
    }
  }
  return r;
}

namespace {

nn::Architecture tiny() {
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

nn::NetworkParams perturbed(const nn::Architecture& a, std::uint64_t seed) {
  auto p = nn::NetworkParams::initialize(a, seed);
  std::mt19937_64 rng(seed ^ 0x9e37);
  std::uniform_real_distribution<double> u(-0.2, 0.2);
  for (double& v : p.values) v += u(rng);
  return p;
}

}  // namespace

std::vector<Result> run_suite(int seeds, double eps) {
  const auto geometry = maze::MazeGeometry::build(maze::GeometryConfig::desk());
  const auto task = maze::TaskSpec::full();
  const auto arch = tiny();
  const agent::Observer obs(geometry, arch);
  std::vector<Result> out;
  for (int si = 1; si <= seeds; ++si) {
    const auto seed = static_cast<std::uint64_t>(si);
    const auto p = perturbed(arch, seed);
    std::mt19937_64 rng(seed);

    // Short random-play episode.
    imitation::LabeledEpisode ep;
    ep.seed = seed;
    maze::BoardState s = maze::reset(geometry, task, seed);
    for (int t = 0; t < 3; ++t) {
      const int a = static_cast<int>(rng() % 5);
      const auto r = maze::step(geometry, s, maze::action_from_index(a), task);
      ep.states.push_back(s);
      ep.taken.push_back(a);
      ep.labels.push_back(static_cast<int>(rng() % 5));
      ep.rewards.push_back(r.reward);
      s = r.state;
    }
    ep.returns = {0.6, -0.3, 1.1};
    const auto inputs = imitation::episode_inputs(obs, ep);

    {
      std::normal_distribution<double> n;
      std::vector<std::array<double, nn::kActions>> wl(inputs.size());
      std::vector<double> wv(inputs.size());
      for (auto& w : wl)
        for (double& v : w) v = n(rng);
      for (double& v : wv) v = n(rng);
      auto probe = [&](const nn::NetworkParams& q) {
        double l = 0;
        const auto outs = nn::forward_sequence(q, inputs, nn::RecurrentState::zeros(arch));
        for (std::size_t t = 0; t < outs.size(); ++t) {
          for (int c = 0; c < nn::kActions; ++c) l += wl[t][c] * outs[t].logits[c];
          l += wv[t] * outs[t].value;
        }
        return l;
      };
      std::vector<nn::StepCache> caches;
      nn::forward_sequence(p, inputs, nn::RecurrentState::zeros(arch), &caches);
      std::vector<nn::OutputGrad> og(inputs.size());
      for (std::size_t t = 0; t < og.size(); ++t) {
        og[t].dlogits = wl[t];
        og[t].dvalue = wv[t];
      }
      std::vector<double> grad;
      nn::backward(p, caches, og, nn::RecurrentGrad::zeros(arch), grad);
      out.push_back(compare("bptt", seed, p.values, grad, [&](const std::vector<double>& x) {
        nn::NetworkParams q = p;
        q.values = x;
        return probe(q);
      }, eps));
    }
    {
      imitation::PretrainConfig cfg;
      cfg.arch = arch;
      cfg.l2_lambda = 0.01;
      std::vector<double> grad;
      imitation::pretrain_loss(p, obs, std::span(&ep, 1), cfg, &grad);
      out.push_back(compare("pretrain_loss", seed, p.values, grad, [&](const std::vector<double>& x) {
        nn::NetworkParams q = p;
        q.values = x;
        return imitation::pretrain_loss(q, obs, std::span(&ep, 1), cfg, nullptr).total;
      }, eps));
    }
    {
      const std::vector<double> targets{0.9, -0.2, 0.4}, adv{0.7, -1.1, 0.3};
      std::vector<double> grad;
      rl::a3c_loss(p, inputs, ep.taken, targets, adv, 0.05, 0.5, nn::RecurrentState::zeros(arch),
                   &grad);
      out.push_back(compare("a3c_loss", seed, p.values, grad, [&](const std::vector<double>& x) {
        nn::NetworkParams q = p;
        q.values = x;
        return rl::a3c_loss(q, inputs, ep.taken, targets, adv, 0.05, 0.5,
                            nn::RecurrentState::zeros(arch), nullptr);
      }, eps));
    }
  }
  return out;
}

}  // namespace bimgame::gradcheck
