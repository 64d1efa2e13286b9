#include <CLI11.hpp>

#include <cstdio>
#include <map>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "bimgame/bimgame.h"

namespace {

struct ConfigDeleter {
  void operator()(bim_config* c) const { bim_config_free(c); }
};
using ConfigPtr = std::unique_ptr<bim_config, ConfigDeleter>;

struct MazeDeleter {
  void operator()(bim_maze* m) const { bim_maze_free(m); }
};
using MazePtr = std::unique_ptr<bim_maze, MazeDeleter>;

struct Failure {
  int code;
};

void check(bim_status s) {
  if (s == BIM_OK) return;
  std::fprintf(stderr, "error (%s): %s\n", bim_status_name(s), bim_last_error());
  throw Failure{static_cast<int>(s)};
}

void print_line(const char* line, void*) {
  std::printf("%s\n", line);
  std::fflush(stdout);
}

// Base config from an optional file, then explicit overrides.
ConfigPtr make_config(const std::string& file, const std::map<std::string, std::string>& sets) {
  bim_config* raw = nullptr;
  check(file.empty() ? bim_config_create(&raw) : bim_config_load(file.c_str(), &raw));
  ConfigPtr cfg(raw);
  for (const auto& [k, v] : sets) check(bim_config_set(cfg.get(), k.c_str(), v.c_str()));
  return cfg;
}

// Records `key` when the option was given on the command line.
struct Overrides {
  std::map<std::string, std::string> values;
  std::vector<std::pair<CLI::Option*, std::pair<std::string, std::string*>>> pending;
  std::vector<std::string> raw_sets;

  void bind(CLI::App* app, const std::string& flag, const std::string& key,
            const std::string& help) {
    auto value = std::make_unique<std::string>();
    CLI::Option* opt = app->add_option(flag, *value, help);
    pending.push_back({opt, {key, value.get()}});
    storage.push_back(std::move(value));
  }
  void add_set_option(CLI::App* app) {
    app->add_option("--set", raw_sets, "Extra key=value overrides");
  }
  std::map<std::string, std::string> collect() {
    for (const auto& s : raw_sets) {
      const auto eq = s.find('=');
      if (eq == std::string::npos || eq == 0) {
        std::fprintf(stderr, "error: --set expects key=value, got '%s'\n", s.c_str());
        throw Failure{static_cast<int>(BIM_ERR_INVALID_ARGUMENT)};
      }
      values[s.substr(0, eq)] = s.substr(eq + 1);
    }
    for (const auto& [opt, kv] : pending) {
      if (opt->count() > 0) values[kv.first] = *kv.second;
    }
    return values;
  }

 private:
  std::vector<std::unique_ptr<std::string>> storage;
};

std::string budget_text(const std::string& v) {
  // Accept 2e6 style budgets.
  const double d = std::stod(v);
  return std::to_string(static_cast<long long>(d));
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Ball-in-maze simulator, expert, imitation and actor-critic pipeline"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(bim_version()));

  // sim-inspect
  auto* inspect = app.add_subcommand("sim-inspect", "Dump geometry as CSV and render a state");
  std::string inspect_cfg, inspect_preset = "default", inspect_task = "FULL";
  std::string inspect_csv = "geometry.csv", inspect_png = "state.png";
  std::uint64_t inspect_seed = 0;
  int inspect_steps = 0, inspect_size = 256;
  inspect->add_option("--geometry", inspect_cfg, "Geometry config file");
  inspect->add_option("--preset", inspect_preset, "Geometry preset (default|desk)");
  inspect->add_option("--task", inspect_task, "FULL or STG<k>");
  inspect->add_option("--seed", inspect_seed, "Reset seed");
  inspect->add_option("--steps", inspect_steps, "Random actions applied before rendering");
  inspect->add_option("--size", inspect_size, "PNG size in pixels");
  inspect->add_option("--csv", inspect_csv, "Geometry CSV output");
  inspect->add_option("--png", inspect_png, "State PNG output");

  // expert generate
  auto* expert = app.add_subcommand("expert", "Model-predictive expert");
  expert->require_subcommand(1);
  auto* generate = expert->add_subcommand("generate", "Build a trajectory dataset");
  std::string gen_cfg, gen_out;
  Overrides gen;
  generate->add_option("--config", gen_cfg, "Base config file");
  generate->add_option("--out", gen_out, "Dataset path")->required();
  gen.bind(generate, "--task", "task", "FULL or STG<k>");
  gen.bind(generate, "--n", "n", "Number of trajectories");
  gen.bind(generate, "--K", "expert.K", "Candidate sequences");
  gen.bind(generate, "--H", "expert.H", "Horizon");
  gen.bind(generate, "--seed", "expert.seed", "Expert seed");
  gen.bind(generate, "--reward-mode", "expert.reward_mode", "radial|geodesic");
  gen.bind(generate, "--max-steps", "max_steps", "Step cap per episode");
  gen.bind(generate, "--workers", "workers", "Worker threads");
  gen.bind(generate, "--test-fraction", "test_fraction", "Held-out fraction");
  gen.bind(generate, "--preset", "geometry.preset", "Geometry preset (default|desk)");
  gen.bind(generate, "--histogram-bin", "histogram_bin", "Length histogram bin width");
  gen.add_set_option(generate);

  // nn gradcheck
  auto* nn = app.add_subcommand("nn", "Network utilities");
  nn->require_subcommand(1);
  auto* gradcheck = nn->add_subcommand("gradcheck", "Finite-difference gradient check");
  int gc_seeds = 3;
  double gc_tol = 1e-4;
  gradcheck->add_option("--seeds", gc_seeds, "Number of random networks");
  gradcheck->add_option("--tol", gc_tol, "Maximum allowed relative error");

  // imitate pretrain | value | dagger
  auto* imitate = app.add_subcommand("imitate", "Imitation learning");
  imitate->require_subcommand(1);
  struct ImitateArgs {
    std::string config, data, out, metrics;
    Overrides ov;
  };
  ImitateArgs pre, val, dag;
  auto add_train_options = [](CLI::App* sub, ImitateArgs& a, const std::string& prefix) {
    sub->add_option("--config", a.config, "Base config file");
    sub->add_option("--data", a.data, "Trajectory dataset")->required();
    sub->add_option("--out", a.out, "Checkpoint path")->required();
    sub->add_option("--metrics", a.metrics, "Per-epoch metrics CSV");
    a.ov.bind(sub, "--gamma", prefix + "gamma", "Discount for value targets");
    a.ov.bind(sub, "--epochs", prefix + "epochs", "Training epochs");
    a.ov.bind(sub, "--lr", prefix + "lr", "RMSProp learning rate");
    a.ov.bind(sub, "--l2", prefix + "l2_lambda", "L2 weight penalty");
    a.ov.bind(sub, "--seed", prefix + "seed", "Initialization seed");
    a.ov.bind(sub, "--arch", prefix + "arch.preset", "Architecture preset (default|desk)");
    a.ov.add_set_option(sub);
  };
  auto* pretrain = imitate->add_subcommand("pretrain", "Supervised policy and value pre-training");
  add_train_options(pretrain, pre, "");
  pre.ov.bind(pretrain, "--value-weight", "value_loss_weight", "Value loss weight");
  auto* value = imitate->add_subcommand("value", "Train the frozen value potential");
  add_train_options(value, val, "");
  auto* dagger = imitate->add_subcommand("dagger", "DAgger baseline");
  add_train_options(dagger, dag, "train.");
  dag.ov.bind(dagger, "--iterations", "iterations", "DAgger iterations");
  dag.ov.bind(dagger, "--rollouts", "rollouts", "Rollouts per iteration");
  dag.ov.bind(dagger, "--query-budget", "query_budget", "Stop after this many expert labels");

  // rl train
  auto* rl = app.add_subcommand("rl", "Actor-critic training");
  rl->require_subcommand(1);
  auto* train = rl->add_subcommand("train", "Train A3C");
  std::string rl_cfg, rl_out, rl_budget;
  Overrides rlo;
  train->add_option("--config", rl_cfg, "Base config file");
  train->add_option("--out", rl_out, "Run directory")->required();
  train->add_option("--budget", rl_budget, "Total environment steps (e.g. 2e6)");
  rlo.bind(train, "--task", "task", "FULL or STG<k>");
  rlo.bind(train, "--init", "init", "random or a checkpoint path");
  rlo.bind(train, "--shaping", "shaping", "off or a frozen value checkpoint");
  rlo.bind(train, "--workers", "workers", "Number of workers");
  rlo.bind(train, "--lr", "lr", "RMSProp learning rate");
  rlo.bind(train, "--seed", "seed", "Run seed");
  rlo.bind(train, "--t-max", "t_max", "Rollout length");
  rlo.bind(train, "--entropy", "entropy_beta", "Entropy coefficient");
  rlo.bind(train, "--gamma", "gamma", "Discount");
  rlo.bind(train, "--threaded", "threaded", "Run workers on threads (true|false)");
  rlo.bind(train, "--eval-every", "eval_every", "Greedy evaluation interval in steps");
  rlo.bind(train, "--preset", "geometry.preset", "Geometry preset (default|desk)");
  rlo.bind(train, "--arch", "arch.preset", "Architecture preset (default|desk)");
  rlo.add_set_option(train);

  // plan run
  auto* plan = app.add_subcommand("plan", "Experiment plans");
  plan->require_subcommand(1);
  auto* plan_run = plan->add_subcommand("run", "Run or resume a plan");
  std::string plan_path;
  plan_run->add_option("plan", plan_path, "Plan config file")->required();

  // speedup
  auto* speedup = app.add_subcommand("speedup", "Compare two learning curves");
  std::string sp_base, sp_treat;
  double sp_threshold = 0.0;
  double sp_budget = 0.0;
  speedup->add_option("--baseline", sp_base, "Baseline curve.csv")->required();
  speedup->add_option("--treatment", sp_treat, "Treatment curve.csv")->required();
  speedup->add_option("--threshold", sp_threshold, "Moving-average return threshold")->required();
  speedup->add_option("--baseline-budget", sp_budget, "Baseline step budget for censored runs");

  // eval
  auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint");
  std::string ev_net, ev_cfg;
  Overrides evo;
  eval->add_option("--net", ev_net, "Checkpoint")->required();
  eval->add_option("--config", ev_cfg, "Base config file");
  evo.bind(eval, "--task", "task", "FULL or STG<k>");
  evo.bind(eval, "--episodes", "episodes", "Evaluation episodes");
  evo.bind(eval, "--selection", "selection", "greedy|sample");
  evo.bind(eval, "--preset", "geometry.preset", "Geometry preset (default|desk)");
  evo.add_set_option(eval);

  CLI11_PARSE(app, argc, argv);

  try {
    if (inspect->parsed()) {
      bim_config* raw = nullptr;
      check(inspect_cfg.empty() ? bim_config_create(&raw) : bim_config_load(inspect_cfg.c_str(), &raw));
      ConfigPtr cfg(raw);
      if (inspect_cfg.empty()) check(bim_config_set(cfg.get(), "preset", inspect_preset.c_str()));
      bim_maze* m = nullptr;
      check(bim_maze_create(cfg.get(), inspect_task.c_str(), &m));
      MazePtr maze(m);
      check(bim_maze_reset(maze.get(), inspect_seed));
      std::mt19937_64 rng(inspect_seed);
      for (int i = 0; i < inspect_steps; ++i) {
        bim_step_info info{};
        check(bim_maze_step(maze.get(), static_cast<int>(rng() % 5), &info));
        if (info.terminal) break;
      }
      check(bim_maze_write_geometry_csv(maze.get(), inspect_csv.c_str()));
      check(bim_maze_write_png(maze.get(), inspect_size, inspect_png.c_str()));
      bim_state s{};
      check(bim_maze_state(maze.get(), &s));
      std::printf("walls %d\nstep %lld ring %d pos (%.6f, %.6f) vel (%.6f, %.6f) tilt (%.6f, %.6f)\n",
                  bim_maze_wall_count(maze.get()), static_cast<long long>(s.step_count), s.ring,
                  s.x, s.y, s.vx, s.vy, s.tilt_x, s.tilt_y);
      std::printf("wrote %s and %s\n", inspect_csv.c_str(), inspect_png.c_str());
    } else if (generate->parsed()) {
      auto cfg = make_config(gen_cfg, gen.collect());
      check(bim_expert_generate(cfg.get(), gen_out.c_str(), print_line, nullptr));
    } else if (gradcheck->parsed()) {
      double worst = 0.0;
      check(bim_nn_gradcheck(gc_seeds, print_line, nullptr, &worst));
      const bool ok = worst <= gc_tol;
      std::printf("max relative error %.3e (tolerance %.1e): %s\n", worst, gc_tol,
                  ok ? "PASS" : "FAIL");
      return ok ? 0 : 1;
    } else if (pretrain->parsed() || value->parsed()) {
      auto& a = pretrain->parsed() ? pre : val;
      auto cfg = make_config(a.config, a.ov.collect());
      check(bim_imitate_pretrain(cfg.get(), a.data.c_str(), value->parsed() ? 1 : 0, a.out.c_str(),
                                 a.metrics.empty() ? nullptr : a.metrics.c_str(), print_line,
                                 nullptr));
    } else if (dagger->parsed()) {
      auto cfg = make_config(dag.config, dag.ov.collect());
      check(bim_dagger_run(cfg.get(), dag.data.c_str(), dag.out.c_str(),
                           dag.metrics.empty() ? nullptr : dag.metrics.c_str(), print_line,
                           nullptr));
    } else if (train->parsed()) {
      auto sets = rlo.collect();
      if (!rl_budget.empty()) sets["budget"] = budget_text(rl_budget);
      auto cfg = make_config(rl_cfg, sets);
      check(bim_rl_train(cfg.get(), rl_out.c_str(), print_line, nullptr));
    } else if (plan_run->parsed()) {
      check(bim_plan_run(plan_path.c_str(), print_line, nullptr));
    } else if (speedup->parsed()) {
      std::vector<char> buf(4096);
      double ratio = 0.0;
      check(bim_speedup(sp_base.c_str(), sp_treat.c_str(), sp_threshold,
                        static_cast<std::int64_t>(sp_budget), buf.data(), buf.size(), &ratio));
      std::printf("%s\n", buf.data());
    } else if (eval->parsed()) {
      auto cfg = make_config(ev_cfg, evo.collect());
      double ret = 0, solved = 0, len = 0;
      check(bim_evaluate(ev_net.c_str(), cfg.get(), &ret, &solved, &len));
      std::printf("mean_return %.6g solved_fraction %.6g mean_length %.6g\n", ret, solved, len);
    }
  } catch (const Failure& f) {
    return f.code;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
