#include "bimgame/harness.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <unistd.h>

#include "bimgame/error.hpp"
#include "bimgame/plot.hpp"

namespace bimgame::harness {

namespace fs = std::filesystem;

namespace {

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const auto b = item.find_first_not_of(" \t");
    const auto e = item.find_last_not_of(" \t");
    if (b != std::string::npos) out.push_back(item.substr(b, e - b + 1));
  }
  return out;
}

void put_prefixed(KeyValueConfig& kv, const std::string& prefix, const KeyValueConfig& sub) {
  for (const auto& [k, v] : sub.values()) kv.set(prefix + k, v);
}

KeyValueConfig data_config(const expert::DatasetOptions& d) {
  KeyValueConfig kv;
  kv.set("trajectories", std::to_string(d.trajectories));
  kv.set("test_fraction", format_double(d.test_fraction));
  kv.set("max_steps", std::to_string(d.max_steps));
  kv.set("keep_unsolved", d.keep_unsolved ? "true" : "false");
  return kv;
}

}  // namespace

Variant parse_variant(const std::string& name) {
  if (name == "a3c") return {name, false, false};
  if (name == "pre_a3c") return {name, true, false};
  if (name == "a3c_shape") return {name, false, true};
  if (name == "pre_a3c_shape") return {name, true, true};
  throw ConfigError("unknown variant '" + name + "' (a3c, pre_a3c, a3c_shape, pre_a3c_shape)");
}

ExperimentPlan ExperimentPlan::from_config(const KeyValueConfig& kv) {
  ExperimentPlan p;
  p.output_dir = kv.get_string("output", p.output_dir);
  p.task = maze::TaskSpec::parse(kv.get_string("task", "FULL"));
  KeyValueConfig geo = kv.subset("geometry.");
  if (!geo.has("preset")) geo.set("preset", "desk");
  p.geometry = maze::GeometryConfig::from_config(geo);
  p.shooting = expert::ShootingConfig::from_config(kv.subset("expert."));
  const auto data = kv.subset("data.");
  p.data.trajectories = static_cast<int>(data.get_int("trajectories", p.data.trajectories));
  p.data.test_fraction = data.get_double("test_fraction", p.data.test_fraction);
  p.data.max_steps = static_cast<int>(data.get_int("max_steps", p.data.max_steps));
  p.data.keep_unsolved = data.get_bool("keep_unsolved", p.data.keep_unsolved);
  p.data.workers = static_cast<int>(data.get_int("workers", p.data.workers));

  KeyValueConfig arch = kv.subset("arch.");
  if (!arch.has("preset")) arch.set("preset", "desk");
  p.arch = nn::Architecture::from_config(arch);

  const KeyValueConfig pre = kv.subset("pretrain.");
  p.pretrain = imitation::PretrainConfig::from_config(pre);
  p.pretrain.arch = p.arch;
  KeyValueConfig val = pre;
  val.merge(kv.subset("value."));
  p.value = imitation::PretrainConfig::from_config(val);
  p.value.arch = p.arch;
  p.value.policy_loss_weight = 0.0;

  p.a3c = rl::A3CConfig::from_config(kv.subset("rl."));
  p.a3c.arch = p.arch;
  if (p.a3c.gamma != p.value.gamma)
    throw ConfigError("rl.gamma and the value network's gamma must match for shaping");

  p.variants.clear();
  for (const auto& v : split_list(kv.get_string("variants", "a3c,pre_a3c,a3c_shape,pre_a3c_shape")))
    p.variants.push_back(parse_variant(v));
  p.seeds.clear();
  for (const auto& s : split_list(kv.get_string("seeds", "0,1,2")))
    p.seeds.push_back(std::stoull(s));
  if (p.seeds.empty()) throw ConfigError("seeds must not be empty");

  const KeyValueConfig dag = kv.subset("dagger.");
  p.dagger_enabled = dag.get_bool("enabled", true);
  KeyValueConfig dag_cfg = dag;
  const std::string budget = dag.get_string("query_budget", "match");
  p.dagger_match_queries = budget == "match";
  if (p.dagger_match_queries) dag_cfg.set("query_budget", "0");
  KeyValueConfig dag_train = pre;
  dag_train.merge(dag.subset("train."));
  for (const auto& [k, v] : dag_train.values()) dag_cfg.set("train." + k, v);
  p.dagger = imitation::DaggerConfig::from_config(dag_cfg);
  p.dagger.train.arch = p.arch;

  p.histogram_bin = static_cast<int>(kv.get_int("histogram_bin", p.histogram_bin));
  p.threshold_fraction = kv.get_double("threshold_fraction", p.threshold_fraction);
  return p;
}

KeyValueConfig ExperimentPlan::to_config() const {
  KeyValueConfig kv;
  kv.set("output", output_dir);
  kv.set("task", task.name());
  put_prefixed(kv, "geometry.", geometry.to_config());
  put_prefixed(kv, "expert.", shooting.to_config());
  put_prefixed(kv, "data.", data_config(data));
  put_prefixed(kv, "arch.", arch.to_config());
  put_prefixed(kv, "pretrain.", pretrain.to_config());
  put_prefixed(kv, "value.", value.to_config());
  put_prefixed(kv, "rl.", a3c.to_config());
  std::string vs, ss;
  for (const auto& v : variants) vs += (vs.empty() ? "" : ",") + v.name;
  for (auto s : seeds) ss += (ss.empty() ? "" : ",") + std::to_string(s);
  kv.set("variants", vs);
  kv.set("seeds", ss);
  kv.set("dagger.enabled", dagger_enabled ? "true" : "false");
  put_prefixed(kv, "dagger.", dagger.to_config());
  if (dagger_match_queries) kv.set("dagger.query_budget", "match");
  kv.set("histogram_bin", std::to_string(histogram_bin));
  kv.set("threshold_fraction", format_double(threshold_fraction));
  return kv;
}

Crossing first_crossing(const std::vector<rl::EpisodeLog>& curve, double threshold,
                        std::size_t window) {
  Crossing c;
  double sum = 0.0;
  for (std::size_t i = 0; i < curve.size(); ++i) {
    sum += curve[i].episode_return;
    if (i >= window) sum -= curve[i - window].episode_return;
    if (i + 1 >= window && sum / static_cast<double>(window) >= threshold) {
      c.reached = true;
      c.step = curve[i].step;
      c.episode = i;
      return c;
    }
  }
  return c;
}

SpeedupReport speedup_report(const std::vector<rl::EpisodeLog>& baseline,
                             const std::vector<rl::EpisodeLog>& treatment, double threshold,
                             std::int64_t baseline_budget, std::size_t window) {
  SpeedupReport r;
  r.baseline = first_crossing(baseline, threshold, window);
  r.treatment = first_crossing(treatment, threshold, window);
  if (r.baseline.reached && r.treatment.reached) {
    r.both_reached = true;
    r.ratio = static_cast<double>(r.baseline.step) / static_cast<double>(r.treatment.step);
  } else if (r.treatment.reached) {
    r.censored = true;
    const std::int64_t budget =
        baseline_budget > 0 ? baseline_budget : (baseline.empty() ? 0 : baseline.back().step);
    r.lower_bound = static_cast<double>(budget) / static_cast<double>(r.treatment.step);
  }
  return r;
}

std::string SpeedupReport::text() const {
  char buf[256];
  if (both_reached) {
    std::snprintf(buf, sizeof buf, "ratio %.4g (baseline %lld steps, treatment %lld steps)", ratio,
                  static_cast<long long>(baseline.step), static_cast<long long>(treatment.step));
  } else if (censored) {
    std::snprintf(buf, sizeof buf,
                  "not reached by baseline; ratio >= %.4g (treatment %lld steps)", lower_bound,
                  static_cast<long long>(treatment.step));
  } else if (baseline.reached) {
    std::snprintf(buf, sizeof buf, "not reached by treatment (baseline %lld steps)",
                  static_cast<long long>(baseline.step));
  } else {
    std::snprintf(buf, sizeof buf, "not reached");
  }
  return buf;
}

namespace {

class RunLock {
 public:
  explicit RunLock(const fs::path& dir) : path_(dir / ".lock") {
    std::FILE* f = std::fopen(path_.c_str(), "wx");
    if (!f)
      throw PreconditionError("run directory " + dir.string() +
                              " is locked by another run (remove " + path_.string() +
                              " if no run is active)");
    std::fprintf(f, "%ld\n", static_cast<long>(::getpid()));
    std::fclose(f);
  }
  ~RunLock() {
    std::error_code ec;
    fs::remove(path_, ec);
  }
  RunLock(const RunLock&) = delete;
  RunLock& operator=(const RunLock&) = delete;

 private:
  fs::path path_;
};

struct StageRecord {
  std::string hash;
  std::vector<std::string> outputs;
};

class Runner {
 public:
  Runner(const ExperimentPlan& plan, const Logger& log) : plan_(plan), log_(log), dir_(plan.output_dir) {}

  RunSummary run();

 private:
  std::string note(const std::string& msg) {
    if (log_) log_(msg);
    return msg;
  }
  fs::path record_path(const std::string& stage) const { return dir_ / "stages" / (stage + ".stage"); }
  std::optional<StageRecord> read_record(const std::string& stage) const;
  void write_record(const std::string& stage, const StageRecord& rec) const;

  // Runs `body` unless an up-to-date record exists. Returns the stage hash.
  std::string stage(const std::string& name, const std::string& config,
                    const std::vector<std::string>& outputs, const std::function<void()>& body);

  void write_manifest() const;
  void write_schema() const;

  const ExperimentPlan& plan_;
  Logger log_;
  fs::path dir_;
  RunSummary summary_;
  std::map<std::string, StageRecord> records_;
};

std::optional<StageRecord> Runner::read_record(const std::string& stage) const {
  std::ifstream f(record_path(stage));
  if (!f) return std::nullopt;
  StageRecord r;
  std::string line;
  while (std::getline(f, line)) {
    if (line.rfind("hash ", 0) == 0) r.hash = line.substr(5);
    if (line.rfind("output ", 0) == 0) r.outputs.push_back(line.substr(7));
  }
  return r;
}

void Runner::write_record(const std::string& stage, const StageRecord& rec) const {
  std::ofstream f(record_path(stage));
  if (!f) throw IoError("cannot write stage record " + record_path(stage).string());
  f << "hash " << rec.hash << '\n';
  for (const auto& o : rec.outputs) f << "output " << o << '\n';
}

std::string Runner::stage(const std::string& name, const std::string& config,
                          const std::vector<std::string>& outputs,
                          const std::function<void()>& body) {
  const std::string hash = content_hash(name + "\n" + config);
  StageRecord rec{hash, outputs};
  if (const auto old = read_record(name)) {
    if (old->hash != hash)
      throw StaleArtifactError("stage " + name + ": recorded config hash " + old->hash +
                               " but the plan now gives " + hash + "; remove " +
                               record_path(name).string() + " and its outputs to rerun");
    const bool complete = std::all_of(outputs.begin(), outputs.end(),
                                      [&](const std::string& o) { return fs::exists(dir_ / o); });
    if (complete) {
      note("skip " + name + " (" + hash + ")");
      summary_.stages.push_back({name, hash, true});
      records_[name] = rec;
      return hash;
    }
  }
  note("run  " + name + " (" + hash + ")");
  body();
  write_record(name, rec);
  summary_.stages.push_back({name, hash, false});
  records_[name] = rec;
  return hash;
}

void Runner::write_manifest() const {
  std::ofstream f(dir_ / "manifest.txt");
  if (!f) throw IoError("cannot write manifest");
  f << "# artifact<TAB>stage<TAB>config hash\n";
  for (const auto& [stage, rec] : records_)
    for (const auto& o : rec.outputs) f << o << '\t' << stage << '\t' << rec.hash << '\n';
  f << "stages/\t-\t-\nplan.cfg\t-\t" << content_hash(plan_.to_config().to_string()) << '\n';
  f << "SCHEMA.md\t-\t-\nmanifest.txt\t-\t-\n";
  f << "# seeds: expert " << plan_.shooting.rng_seed << "; dataset episodes 0.."
    << plan_.data.trajectories - 1 << "; pretrain " << plan_.pretrain.seed << "; value "
    << plan_.value.seed << "; dagger " << plan_.dagger.seed << "; rl";
  for (auto s : plan_.seeds) f << ' ' << s;
  f << '\n';
}

void Runner::write_schema() const {
  std::ofstream f(dir_ / "SCHEMA.md");
  f << "# Run directory schema\n\n"
       "`manifest.txt` lists every artifact with the stage that produced it and that stage's "
       "config hash. `plan.cfg` is the resolved plan. `stages/*.stage` hold the per-stage "
       "hash and output list used for resuming.\n\n"
       "## curves/length_histogram.csv\n"
       "Expert solve lengths. `bin_start,bin_end,count`: count of solved trajectories with "
       "bin_start <= length < bin_end.\n\n"
       "## curves/pretrain.csv, curves/vhat.csv\n"
       "`epoch,train_loss,test_accuracy,train_accuracy,test_value_mse`. Epoch 0 is before any "
       "update. train_loss is per step (cross-entropy plus weighted value error).\n\n"
       "## curves/<variant>_s<seed>.csv\n"
       "One row per finished training episode. `step` global environment steps when it ended; "
       "`episode_return` task return (never shaped); `ma100` mean of the last 100 returns; "
       "`wallclock_s`; `worker`; `seed` episode seed; `length`; `solved`; `shaping_residual` "
       "discounted shaped return minus (discounted task return + end potential - start "
       "potential), 0 without shaping.\n\n"
       "## curves/<variant>_s<seed>_eval.csv\n"
       "`step,mean_return,solved_fraction` from greedy evaluation episodes on held-out seeds.\n\n"
       "## curves/dagger.csv\n"
       "`iteration,beta,aggregate_steps,expert_queries,train_accuracy,eval_return,eval_solved`.\n\n"
       "## report.txt\n"
       "Target threshold and per-seed speed-up of each variant against `a3c`.\n\n"
       "## plots/*.png\n"
       "`<task>_curves.png` plots ma100 against step for every variant and seed, and DAgger "
       "eval_return against expert_queries, straight from the CSVs. `length_histogram.png` "
       "plots the histogram CSV.\n";
}

RunSummary Runner::run() {
  fs::create_directories(dir_ / "stages");
  for (const char* sub : {"data", "ckpt", "curves", "plots"}) fs::create_directories(dir_ / sub);
  RunLock lock(dir_);
  {
    std::ofstream f(dir_ / "plan.cfg");
    f << plan_.to_config().to_string();
  }
  const std::string task = plan_.task.name();
  const auto geometry = maze::MazeGeometry::build(plan_.geometry);

  // Expert data.
  const std::string data_file = "data/" + task + ".traj";
  const std::string data_hash = stage(
      "data",
      plan_.geometry.to_config().to_string() + task + plan_.shooting.to_config().to_string() +
          data_config(plan_.data).to_string(),
      {data_file, "curves/length_histogram.csv", "plots/length_histogram.png"}, [&] {
        const expert::ShootingExpert ex(geometry, plan_.task, plan_.shooting);
        const auto d = expert::build_dataset(ex, plan_.data);
        note("  " + std::to_string(d.solved_count()) + "/" + std::to_string(plan_.data.trajectories) +
             " solved");
        expert::save_dataset(d, (dir_ / data_file).string());
        const auto bins = expert::length_histogram(d, plan_.histogram_bin);
        expert::write_histogram_csv(bins, (dir_ / "curves/length_histogram.csv").string());
        std::vector<plot::Bar> bars;
        for (const auto& b : bins)
          bars.push_back({static_cast<double>(b.lo), static_cast<double>(b.hi),
                          static_cast<double>(b.count)});
        plot::write_bar_chart((dir_ / "plots/length_histogram.png").string(),
                              {task + " expert solve lengths", "steps to solve", "count"}, bars);
      });
  std::optional<expert::Dataset> dataset;
  auto load_data = [&]() -> const expert::Dataset& {
    if (!dataset) dataset = expert::load_dataset((dir_ / data_file).string());
    return *dataset;
  };

  auto epoch_logger = [&](const std::string& tag) {
    return [this, tag](const imitation::EpochMetrics& m) {
      char buf[160];
      std::snprintf(buf, sizeof buf, "  %s epoch %d loss %.4f train_acc %.4f test_acc %.4f vmse %.4f",
                    tag.c_str(), m.epoch, m.train_loss, m.train_accuracy, m.test_accuracy,
                    m.test_value_mse);
      note(buf);
    };
  };

  const std::string pre_hash = stage(
      "pretrain", data_hash + plan_.pretrain.to_config().to_string(),
      {"ckpt/pi_s.net", "curves/pretrain.csv"}, [&] {
        const auto r = imitation::pretrain(load_data(), plan_.pretrain, epoch_logger("pretrain"));
        nn::save_params(r.best, (dir_ / "ckpt/pi_s.net").string());
        imitation::write_metrics_csv(r.curve, (dir_ / "curves/pretrain.csv").string());
        note("  best epoch " + std::to_string(r.best_epoch));
      });
  const std::string vhat_hash = stage(
      "vhat", data_hash + plan_.value.to_config().to_string(),
      {"ckpt/vhat.net", "curves/vhat.csv"}, [&] {
        const auto r = imitation::train_value_only(load_data(), plan_.value, epoch_logger("vhat"));
        nn::save_params(r.best, (dir_ / "ckpt/vhat.net").string());
        imitation::write_metrics_csv(r.curve, (dir_ / "curves/vhat.csv").string());
      });

  std::string curve_hashes;
  for (const auto& v : plan_.variants) {
    for (auto seed : plan_.seeds) {
      const std::string id = v.name + "_s" + std::to_string(seed);
      rl::A3CConfig cfg = plan_.a3c;
      cfg.seed = seed;
      cfg.init = v.pretrained ? (dir_ / "ckpt/pi_s.net").string() : "random";
      cfg.shaping = v.shaping ? (dir_ / "ckpt/vhat.net").string() : "off";
      KeyValueConfig echo = cfg.to_config();
      echo.set("init", v.pretrained ? "pretrain:" + pre_hash : "random");
      echo.set("shaping", v.shaping ? "vhat:" + vhat_hash : "off");
      const std::vector<std::string> outs{"curves/" + id + ".csv", "curves/" + id + "_eval.csv",
                                          "ckpt/" + id + ".net"};
      curve_hashes += stage("rl_" + id, task + plan_.geometry.to_config().to_string() + echo.to_string(),
                            outs, [&] {
                              std::int64_t next_note = 0;
                              rl::TrainHooks hooks;
                              hooks.on_episode = [&](const rl::EpisodeLog& e) {
                                if (e.step < next_note) return;
                                next_note = e.step + std::max<std::int64_t>(cfg.budget / 20, 1);
                                char buf[160];
                                std::snprintf(buf, sizeof buf, "  %s step %lld ma100 %.3f (%.0fs)",
                                              id.c_str(), static_cast<long long>(e.step), e.ma100,
                                              e.wallclock_s);
                                note(buf);
                              };
                              const auto r = rl::train(geometry, plan_.task, cfg, hooks);
                              rl::write_curve_csv(r.curve, (dir_ / outs[0]).string());
                              rl::write_eval_csv(r.evals, (dir_ / outs[1]).string());
                              nn::save_params(r.params, (dir_ / outs[2]).string());
                            });
    }
  }

  std::string dagger_hash;
  if (plan_.dagger_enabled) {
    imitation::DaggerConfig dcfg = plan_.dagger;
    std::string upstream;
    if (plan_.dagger_match_queries) {
      dcfg.query_budget = load_data().total_steps();
      upstream = data_hash;
    }
    dagger_hash = stage(
        "dagger",
        upstream + task + plan_.geometry.to_config().to_string() +
            plan_.shooting.to_config().to_string() + dcfg.to_config().to_string(),
        {"curves/dagger.csv", "ckpt/dagger.net"}, [&] {
          const expert::ShootingExpert ex(geometry, plan_.task, plan_.shooting);
          const auto r = imitation::dagger(ex, dcfg, [&](const imitation::DaggerIteration& it) {
            char buf[160];
            std::snprintf(buf, sizeof buf, "  dagger iter %d queries %zu eval_return %.3f solved %.2f",
                          it.iteration, it.expert_queries, it.eval_return, it.eval_solved);
            note(buf);
          });
          imitation::write_dagger_csv(r.iterations, (dir_ / "curves/dagger.csv").string());
          nn::save_params(r.params, (dir_ / "ckpt/dagger.net").string());
        });
  }

  const std::string plot_file = "plots/" + task + "_curves.png";
  stage("report", data_hash + curve_hashes + dagger_hash + format_double(plan_.threshold_fraction),
        {"report.txt", plot_file}, [&] {
          const auto& d = load_data();
          double expert_return = 0.0;
          for (const auto& t : d.trajectories)
            for (const auto& s : t.steps) expert_return += s.reward;
          expert_return /= static_cast<double>(d.trajectories.size());
          const double threshold = plan_.threshold_fraction * expert_return;
          std::ostringstream rep;
          rep << "task " << task << "\nexpert mean return " << format_double(expert_return)
              << "\nthreshold (ma100) " << format_double(threshold) << '\n';
          std::vector<plot::Series> series;
          std::map<std::string, std::vector<rl::EpisodeLog>> curves;
          std::size_t color = 0;
          for (const auto& v : plan_.variants) {
            for (auto seed : plan_.seeds) {
              const std::string id = v.name + "_s" + std::to_string(seed);
              curves[id] = rl::read_curve_csv((dir_ / ("curves/" + id + ".csv")).string());
              plot::Series s;
              s.label = seed == plan_.seeds.front() ? v.name : "";
              s.color = plot::palette(color);
              for (const auto& e : curves[id]) {
                s.x.push_back(static_cast<double>(e.step));
                s.y.push_back(e.ma100);
              }
              series.push_back(std::move(s));
            }
            ++color;
          }
          for (const auto& v : plan_.variants) {
            if (v.name == "a3c") continue;
            if (std::none_of(plan_.variants.begin(), plan_.variants.end(),
                             [](const Variant& x) { return x.name == "a3c"; }))
              break;
            for (auto seed : plan_.seeds) {
              const std::string s = std::to_string(seed);
              const auto sp = speedup_report(curves["a3c_s" + s], curves[v.name + "_s" + s],
                                             threshold, plan_.a3c.budget);
              rep << "speedup " << v.name << " vs a3c seed " << s << ": " << sp.text() << '\n';
            }
          }
          if (plan_.dagger_enabled) {
            std::ifstream f(dir_ / "curves/dagger.csv");
            std::string line;
            std::getline(f, line);
            plot::Series s;
            s.label = "dagger";
            s.color = plot::palette(color);
            s.points = true;
            while (std::getline(f, line)) {
              std::vector<std::string> cells = split_list(line);
              if (cells.size() < 6) continue;
              s.x.push_back(std::stod(cells[3]));
              s.y.push_back(std::stod(cells[5]));
            }
            rep << "dagger final eval return "
                << (s.y.empty() ? std::string("n/a") : format_double(s.y.back())) << '\n';
            series.push_back(std::move(s));
          }
          plot::write_line_chart((dir_ / plot_file).string(),
                                 {task + " learning curves", "environment steps",
                                  "return (ma100; dagger: greedy eval)"},
                                 series);
          std::ofstream out(dir_ / "report.txt");
          out << rep.str();
          summary_.report = rep.str();
        });
  if (summary_.report.empty()) {
    std::ifstream f(dir_ / "report.txt");
    std::stringstream ss;
    ss << f.rdbuf();
    summary_.report = ss.str();
  }
  write_manifest();
  write_schema();
  return summary_;
}

}  // namespace

RunSummary run_plan(const ExperimentPlan& plan, const Logger& log) {
  Runner r(plan, log);
  return r.run();
}

}  // namespace bimgame::harness
