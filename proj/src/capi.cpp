#include "bimgame/bimgame.h"

#include <algorithm>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <new>
#include <sstream>
#include <string>

#include "bimgame/agent.hpp"
#include "bimgame/config.hpp"
#include "bimgame/error.hpp"
#include "bimgame/expert.hpp"
#include "bimgame/gradcheck.hpp"
#include "bimgame/harness.hpp"
#include "bimgame/imitation.hpp"
#include "bimgame/image_io.hpp"
#include "bimgame/maze.hpp"
#include "bimgame/network.hpp"
#include "bimgame/rl.hpp"

using namespace bimgame;

struct bim_config {
  KeyValueConfig kv;
};

struct bim_maze {
  maze::MazeGeometry geometry;
  maze::TaskSpec task;
  maze::BoardState state;
};

namespace {

thread_local std::string g_last_error;

bim_status status_of(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::Config: return BIM_ERR_CONFIG;
    case ErrorKind::Domain: return BIM_ERR_DOMAIN;
    case ErrorKind::IntegrationFault: return BIM_ERR_INTEGRATION;
    case ErrorKind::Shape: return BIM_ERR_SHAPE;
    case ErrorKind::NumericFault: return BIM_ERR_NUMERIC;
    case ErrorKind::Dataset: return BIM_ERR_DATASET;
    case ErrorKind::StaleArtifact: return BIM_ERR_STALE_ARTIFACT;
    case ErrorKind::Precondition: return BIM_ERR_PRECONDITION;
    case ErrorKind::Io: return BIM_ERR_IO;
  }
  return BIM_ERR_INTERNAL;
}

bim_status fail(bim_status s, const std::string& message) {
  g_last_error = message;
  return s;
}

struct InvalidArgument : std::runtime_error {
  using std::runtime_error::runtime_error;
};

void require(bool ok, const char* what) {
  if (!ok) throw InvalidArgument(what);
}

// Runs `body`, translating exceptions into status codes.
template <class F>
bim_status call(F&& body) {
  try {
    body();
    g_last_error.clear();
    return BIM_OK;
  } catch (const InvalidArgument& e) {
    return fail(BIM_ERR_INVALID_ARGUMENT, e.what());
  } catch (const Error& e) {
    return fail(status_of(e.kind()), e.what());
  } catch (const std::bad_alloc&) {
    return fail(BIM_ERR_INTERNAL, "out of memory");
  } catch (const std::exception& e) {
    return fail(BIM_ERR_INTERNAL, e.what());
  } catch (...) {
    return fail(BIM_ERR_INTERNAL, "unknown failure");
  }
}

const KeyValueConfig& kv_of(const bim_config* cfg) {
  static const KeyValueConfig empty;
  return cfg ? cfg->kv : empty;
}

void emit(bim_log_fn log, void* user, const std::string& line) {
  if (log) log(line.c_str(), user);
}

void copy_out(const std::string& text, char* buf, size_t buflen) {
  if (!buf || buflen == 0) return;
  const size_t n = std::min(text.size(), buflen - 1);
  std::memcpy(buf, text.data(), n);
  buf[n] = '\0';
}

maze::GeometryConfig geometry_of(const KeyValueConfig& kv) {
  return maze::GeometryConfig::from_config(kv.subset("geometry."));
}

void ensure_parent(const std::string& path) {
  const auto parent = std::filesystem::path(path).parent_path();
  if (!parent.empty()) std::filesystem::create_directories(parent);
}

}  // namespace

extern "C" {

const char* bim_version(void) { return "1.0.0"; }

const char* bim_status_name(bim_status status) {
  switch (status) {
    case BIM_OK: return "ok";
    case BIM_ERR_CONFIG: return "config error";
    case BIM_ERR_DOMAIN: return "domain error";
    case BIM_ERR_INTEGRATION: return "integration fault";
    case BIM_ERR_SHAPE: return "shape error";
    case BIM_ERR_NUMERIC: return "numeric fault";
    case BIM_ERR_DATASET: return "dataset error";
    case BIM_ERR_STALE_ARTIFACT: return "stale artifact";
    case BIM_ERR_PRECONDITION: return "precondition failed";
    case BIM_ERR_IO: return "i/o error";
    case BIM_ERR_INVALID_ARGUMENT: return "invalid argument";
    case BIM_ERR_INTERNAL: return "internal error";
  }
  return "unknown status";
}

const char* bim_last_error(void) { return g_last_error.c_str(); }

bim_status bim_config_create(bim_config** out) {
  return call([&] {
    require(out != nullptr, "out is null");
    *out = new bim_config{};
  });
}

bim_status bim_config_load(const char* path, bim_config** out) {
  return call([&] {
    require(path && out, "path and out must be non-null");
    *out = new bim_config{KeyValueConfig::load(path)};
  });
}

bim_status bim_config_parse(const char* text, bim_config** out) {
  return call([&] {
    require(text && out, "text and out must be non-null");
    *out = new bim_config{KeyValueConfig::parse(text)};
  });
}

bim_status bim_config_set(bim_config* cfg, const char* key, const char* value) {
  return call([&] {
    require(cfg && key && value, "cfg, key and value must be non-null");
    require(*key != '\0', "key is empty");
    cfg->kv.set(key, value);
  });
}

bim_status bim_config_get(const bim_config* cfg, const char* key, char* buf, size_t buflen,
                          int* found) {
  return call([&] {
    require(cfg && key && found, "cfg, key and found must be non-null");
    *found = cfg->kv.has(key) ? 1 : 0;
    copy_out(*found ? cfg->kv.values().at(key) : std::string(), buf, buflen);
  });
}

bim_status bim_config_save(const bim_config* cfg, const char* path) {
  return call([&] {
    require(cfg && path, "cfg and path must be non-null");
    std::ofstream out(path);
    if (!out) throw IoError(std::string("cannot open '") + path + "' for writing");
    out << cfg->kv.to_string();
    if (!out) throw IoError(std::string("write failed for '") + path + "'");
  });
}

void bim_config_free(bim_config* cfg) { delete cfg; }

bim_status bim_maze_create(const bim_config* geometry, const char* task, bim_maze** out) {
  return call([&] {
    require(out != nullptr, "out is null");
    const auto geo = maze::MazeGeometry::build(
        geometry ? maze::GeometryConfig::from_config(geometry->kv) : maze::GeometryConfig::defaults());
    const auto spec = maze::TaskSpec::parse(task ? task : "FULL");
    *out = new bim_maze{geo, spec, maze::reset(geo, spec, 0)};
  });
}

bim_status bim_maze_reset(bim_maze* m, uint64_t seed) {
  return call([&] {
    require(m != nullptr, "maze is null");
    m->state = maze::reset(m->geometry, m->task, seed);
  });
}

bim_status bim_maze_step(bim_maze* m, int action, bim_step_info* info) {
  return call([&] {
    require(m != nullptr, "maze is null");
    require(action >= 0 && action < maze::kNumActions, "action must be in [0, 5)");
    const auto r = maze::step(m->geometry, m->state, maze::action_from_index(action), m->task);
    m->state = r.state;
    if (info) {
      *info = bim_step_info{r.reward, r.events.terminal ? 1 : 0, r.events.wall_contacts, 0, 0};
      for (const auto& c : r.events.gate_crossings) {
        if (c.direction == maze::Direction::Inward) {
          ++info->inward_crossings;
        } else {
          ++info->outward_crossings;
        }
      }
    }
  });
}

bim_status bim_maze_state(const bim_maze* m, bim_state* out) {
  return call([&] {
    require(m && out, "maze and out must be non-null");
    const auto& s = m->state;
    *out = bim_state{s.ball_pos.x, s.ball_pos.y, s.ball_vel.x,  s.ball_vel.y,
                     s.tilt.x,     s.tilt.y,     s.step_count, maze::ring_index(m->geometry, s)};
  });
}

int bim_maze_wall_count(const bim_maze* m) { return m ? m->geometry.wall_count() : 0; }

bim_status bim_maze_penetration(const bim_maze* m, double* out) {
  return call([&] {
    require(m && out, "maze and out must be non-null");
    *out = m->geometry.penetration(m->state.ball_pos);
  });
}

bim_status bim_maze_write_geometry_csv(const bim_maze* m, const char* path) {
  return call([&] {
    require(m && path, "maze and path must be non-null");
    maze::write_geometry_csv(m->geometry, path);
  });
}

bim_status bim_maze_write_png(const bim_maze* m, int size, const char* path) {
  return call([&] {
    require(m && path, "maze and path must be non-null");
    require(size >= 8 && size <= 4096, "size must be in [8, 4096]");
    const maze::Renderer renderer(m->geometry, size, size);
    const auto obs = renderer.render(m->state);
    write_png_gray(path, obs.width, obs.height, obs.image);
  });
}

void bim_maze_free(bim_maze* m) { delete m; }

bim_status bim_expert_generate(const bim_config* cfg, const char* out_path, bim_log_fn log,
                               void* user) {
  return call([&] {
    require(out_path != nullptr, "out_path is null");
    const auto& kv = kv_of(cfg);
    const auto geometry = maze::MazeGeometry::build(geometry_of(kv));
    const auto task = maze::TaskSpec::parse(kv.get_string("task", "FULL"));
    const auto shooting = expert::ShootingConfig::from_config(kv.subset("expert."));
    expert::DatasetOptions opts;
    opts.trajectories = static_cast<int>(kv.get_int("n", opts.trajectories));
    opts.test_fraction = kv.get_double("test_fraction", opts.test_fraction);
    opts.max_steps = static_cast<int>(kv.get_int("max_steps", opts.max_steps));
    opts.keep_unsolved = kv.get_bool("keep_unsolved", opts.keep_unsolved);
    opts.workers = static_cast<int>(kv.get_int("workers", opts.workers));
    if (opts.trajectories <= 0) throw ConfigError("n must be positive");
    if (opts.workers <= 0) throw ConfigError("workers must be positive");

    const expert::ShootingExpert ex(geometry, task, shooting);
    emit(log, user, "generating " + std::to_string(opts.trajectories) + " " + task.name() +
                        " trajectories (K=" + std::to_string(shooting.candidates) +
                        ", H=" + std::to_string(shooting.horizon) + ")");
    const auto data = expert::build_dataset(ex, opts);
    ensure_parent(out_path);
    expert::save_dataset(data, out_path);
    const auto bin = kv.get_int("histogram_bin", 25);
    if (bin <= 0) throw ConfigError("histogram_bin must be positive");
    const std::string hist = std::string(out_path) + ".hist.csv";
    expert::write_histogram_csv(expert::length_histogram(data, bin), hist);
    std::ostringstream msg;
    msg << "kept " << data.trajectories.size() << " trajectories, solved "
        << data.solved_count() << ", steps " << data.total_steps() << ", train "
        << data.train.size() << ", test " << data.test.size() << "; histogram " << hist;
    emit(log, user, msg.str());
  });
}

bim_status bim_nn_gradcheck(int seeds, bim_log_fn log, void* user, double* max_rel_error) {
  return call([&] {
    require(seeds > 0, "seeds must be positive");
    double worst = 0.0;
    for (const auto& r : gradcheck::run_suite(seeds)) {
      std::ostringstream line;
      line << r.check << " seed " << r.seed << " params " << r.parameters
           << " max_rel_error " << format_double(r.max_rel_error) << " at " << r.worst_index;
      emit(log, user, line.str());
      worst = std::max(worst, r.max_rel_error);
    }
    if (max_rel_error) *max_rel_error = worst;
  });
}

bim_status bim_imitate_pretrain(const bim_config* cfg, const char* data_path, int value_only,
                                const char* out_path, const char* metrics_csv, bim_log_fn log,
                                void* user) {
  return call([&] {
    require(data_path && out_path, "data_path and out_path must be non-null");
    const auto pc = imitation::PretrainConfig::from_config(kv_of(cfg));
    const auto data = expert::load_dataset(data_path);
    const auto on_epoch = [&](const imitation::EpochMetrics& m) {
      std::ostringstream line;
      line << "epoch " << m.epoch << " train_loss " << format_double(m.train_loss)
           << " train_acc " << format_double(m.train_accuracy) << " test_acc "
           << format_double(m.test_accuracy) << " test_value_mse "
           << format_double(m.test_value_mse);
      emit(log, user, line.str());
    };
    const auto r = value_only ? imitation::train_value_only(data, pc, on_epoch)
                              : imitation::pretrain(data, pc, on_epoch);
    ensure_parent(out_path);
    nn::save_params(r.best, out_path);
    if (metrics_csv) {
      ensure_parent(metrics_csv);
      imitation::write_metrics_csv(r.curve, metrics_csv);
    }
    emit(log, user, "best epoch " + std::to_string(r.best_epoch) + " saved to " + out_path);
  });
}

bim_status bim_dagger_run(const bim_config* cfg, const char* data_path, const char* out_path,
                          const char* metrics_csv, bim_log_fn log, void* user) {
  return call([&] {
    require(data_path && out_path, "data_path and out_path must be non-null");
    const auto dc = imitation::DaggerConfig::from_config(kv_of(cfg));
    const auto data = expert::load_dataset(data_path);
    const expert::ShootingExpert ex(maze::MazeGeometry::build(data.geometry), data.task,
                                    data.shooting);
    const auto r = imitation::dagger(ex, dc, [&](const imitation::DaggerIteration& it) {
      std::ostringstream line;
      line << "iteration " << it.iteration << " beta " << format_double(it.beta) << " queries "
           << it.expert_queries << " train_acc " << format_double(it.train_accuracy)
           << " eval_return " << format_double(it.eval_return) << " solved "
           << format_double(it.eval_solved);
      emit(log, user, line.str());
    });
    ensure_parent(out_path);
    nn::save_params(r.params, out_path);
    if (metrics_csv) {
      ensure_parent(metrics_csv);
      imitation::write_dagger_csv(r.iterations, metrics_csv);
    }
  });
}

bim_status bim_rl_train(const bim_config* cfg, const char* out_dir, bim_log_fn log, void* user) {
  return call([&] {
    require(out_dir != nullptr, "out_dir is null");
    const auto& kv = kv_of(cfg);
    const auto geo_cfg = geometry_of(kv);
    const auto geometry = maze::MazeGeometry::build(geo_cfg);
    const auto task = maze::TaskSpec::parse(kv.get_string("task", "FULL"));
    auto ac = rl::A3CConfig::from_config(kv);
    if (ac.init != "random" && kv.subset("arch.").values().empty()) {
      ac.arch = nn::load_params(ac.init).arch;
    }

    const std::filesystem::path dir(out_dir);
    std::filesystem::create_directories(dir);
    {
      KeyValueConfig manifest;
      manifest.set("task", task.name());
      const KeyValueConfig geo_kv = geo_cfg.to_config();
      for (const auto& [k, v] : geo_kv.values()) manifest.set("geometry." + k, v);
      const KeyValueConfig ac_kv = ac.to_config();
      for (const auto& [k, v] : ac_kv.values()) manifest.set(k, v);
      for (int w = 0; w < ac.workers; ++w) {
        manifest.set("worker" + std::to_string(w) + ".seed",
                     std::to_string(expert::mix_seed(ac.seed, static_cast<std::uint64_t>(w))));
      }
      std::ofstream out(dir / "manifest.txt");
      out << manifest.to_string();
      if (!out) throw IoError("cannot write " + (dir / "manifest.txt").string());
    }

    std::int64_t next_report = 0;
    const std::int64_t every = std::max<std::int64_t>(1, static_cast<std::int64_t>(ac.budget) / 50);
    rl::TrainHooks hooks;
    hooks.on_episode = [&](const rl::EpisodeLog& e) {
      if (e.step < next_report) return;
      next_report = e.step + every;
      std::ostringstream line;
      line << "step " << e.step << " worker " << e.worker << " return "
           << format_double(e.episode_return) << " ma100 " << format_double(e.ma100)
           << " length " << e.length;
      emit(log, user, line.str());
    };
    hooks.on_eval = [&](const rl::EvalPoint& p) {
      emit(log, user, "eval at " + std::to_string(p.step) + ": return " +
                          format_double(p.mean_return) + " solved " +
                          format_double(p.solved_fraction));
    };
    const auto r = rl::train(geometry, task, ac, hooks);
    rl::write_curve_csv(r.curve, (dir / "curve.csv").string());
    rl::write_eval_csv(r.evals, (dir / "eval.csv").string());
    nn::save_params(r.params, (dir / "final.net").string());
    emit(log, user, "done: " + std::to_string(r.total_steps) + " steps, " +
                        std::to_string(r.curve.size()) + " episodes in " +
                        format_double(r.wallclock_s) + " s");
  });
}

bim_status bim_plan_run(const char* plan_path, bim_log_fn log, void* user) {
  return call([&] {
    require(plan_path != nullptr, "plan_path is null");
    const auto plan = harness::ExperimentPlan::from_config(KeyValueConfig::load(plan_path));
    const auto summary =
        harness::run_plan(plan, [&](const std::string& line) { emit(log, user, line); });
    for (const auto& s : summary.stages) {
      emit(log, user, s.name + (s.skipped ? " skipped" : " done") + " (" + s.hash + ")");
    }
    emit(log, user, summary.report);
  });
}

bim_status bim_speedup(const char* baseline_csv, const char* treatment_csv, double threshold,
                       int64_t baseline_budget, char* buf, size_t buflen, double* ratio) {
  return call([&] {
    require(baseline_csv && treatment_csv, "curve paths must be non-null");
    const auto r = harness::speedup_report(rl::read_curve_csv(baseline_csv),
                                           rl::read_curve_csv(treatment_csv), threshold,
                                           baseline_budget);
    copy_out(r.text(), buf, buflen);
    if (ratio) *ratio = r.both_reached ? r.ratio : (r.censored ? r.lower_bound : 0.0);
  });
}

bim_status bim_evaluate(const char* checkpoint, const bim_config* cfg, double* mean_return,
                        double* solved_fraction, double* mean_length) {
  return call([&] {
    require(checkpoint != nullptr, "checkpoint is null");
    const auto& kv = kv_of(cfg);
    const auto geometry = maze::MazeGeometry::build(geometry_of(kv));
    const auto task = maze::TaskSpec::parse(kv.get_string("task", "FULL"));
    const auto episodes = static_cast<int>(kv.get_int("episodes", 20));
    if (episodes <= 0) throw ConfigError("episodes must be positive");
    const std::string sel = kv.get_string("selection", "greedy");
    if (sel != "greedy" && sel != "sample") throw ConfigError("selection must be greedy|sample");
    const auto ev = agent::evaluate(
        nn::load_params(checkpoint), geometry, task, episodes,
        sel == "greedy" ? agent::ActionSelection::Greedy : agent::ActionSelection::Sample,
        static_cast<int>(kv.get_int("max_steps", 0)));
    if (mean_return) *mean_return = ev.mean_return;
    if (solved_fraction) *solved_fraction = ev.solved_fraction;
    if (mean_length) *mean_length = ev.mean_length;
  });
}

}  // extern "C"
