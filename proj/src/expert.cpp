#include "bimgame/expert.hpp"

#include <algorithm>
#include <cstring>
#include <fstream>
#include <limits>
#include <map>
#include <thread>

#include "bimgame/error.hpp"

namespace bimgame::expert {

using maze::Action;
using maze::BoardState;

std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) {
  // splitmix64 finalizer over a combined word
  std::uint64_t z = a * 0x9E3779B97F4A7C15ULL + b + 0x632BE59BD9B4E019ULL;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

ShootingConfig ShootingConfig::from_config(const KeyValueConfig& kv) {
  ShootingConfig c;
  c.candidates = static_cast<int>(kv.get_int("K", c.candidates));
  c.horizon = static_cast<int>(kv.get_int("H", c.horizon));
  const std::string mode = kv.get_string("reward_mode", "radial");
  if (mode == "radial") {
    c.reward_mode = RewardMode::Radial;
  } else if (mode == "geodesic") {
    c.reward_mode = RewardMode::Geodesic;
  } else {
    throw ConfigError("reward_mode must be radial or geodesic");
  }
  const std::string sign = kv.get_string("progress_sign", "toward_center");
  if (sign == "toward_center") {
    c.progress_sign = ProgressSign::TowardCenter;
  } else if (sign == "as_written") {
    c.progress_sign = ProgressSign::AsWritten;
  } else {
    throw ConfigError("progress_sign must be toward_center or as_written");
  }
  c.rng_seed = static_cast<std::uint64_t>(kv.get_int("seed", 0));
  c.exhaustive = kv.get_bool("exhaustive", false);
  if (c.candidates < 1 || c.horizon < 1) throw ConfigError("K and H must be >= 1");
  return c;
}

KeyValueConfig ShootingConfig::to_config() const {
  KeyValueConfig kv;
  kv.set("K", std::to_string(candidates));
  kv.set("H", std::to_string(horizon));
  kv.set("reward_mode", reward_mode == RewardMode::Radial ? "radial" : "geodesic");
  kv.set("progress_sign",
         progress_sign == ProgressSign::TowardCenter ? "toward_center" : "as_written");
  kv.set("seed", std::to_string(rng_seed));
  kv.set("exhaustive", exhaustive ? "true" : "false");
  return kv;
}

double progress_reward(const BoardState& prev, const BoardState& next, ProgressSign sign) {
  const double d0 = maze::radial_distance(prev);
  const double d1 = maze::radial_distance(next);
  return sign == ProgressSign::TowardCenter ? d0 - d1 : d1 - d0;
}

ShootingExpert::ShootingExpert(const maze::MazeGeometry& geometry, const maze::TaskSpec& task,
                               ShootingConfig cfg)
    : geometry_(geometry), task_(task), cfg_(cfg) {
  if (cfg_.candidates < 1 || cfg_.horizon < 1) throw ConfigError("K and H must be >= 1");
  if (cfg_.exhaustive && cfg_.horizon > 8)
    throw ConfigError("exhaustive shooting limited to H <= 8");
  if (cfg_.reward_mode == RewardMode::Geodesic) geodesic_.emplace(geometry_);
}

double ShootingExpert::distance(const BoardState& s) const {
  return geodesic_ ? geodesic_->distance(s.ball_pos) : maze::radial_distance(s);
}

double ShootingExpert::progress_reward(const BoardState& prev, const BoardState& next) const {
  const double d0 = distance(prev);
  const double d1 = distance(next);
  return cfg_.progress_sign == ProgressSign::TowardCenter ? d0 - d1 : d1 - d0;
}

double ShootingExpert::score(const BoardState& start, const std::vector<Action>& seq) const {
  BoardState s = start;
  double total = 0.0;
  for (Action a : seq) {
    const maze::StepResult r = maze::step(geometry_, s, a, task_);
    total += progress_reward(s, r.state);
    s = r.state;
    if (r.events.terminal) break;
  }
  return total;
}

ShootingExpert::Choice ShootingExpert::choose(const BoardState& state,
                                              std::mt19937_64& rng) const {
  const int H = cfg_.horizon;
  std::size_t n = static_cast<std::size_t>(cfg_.candidates);
  if (cfg_.exhaustive) {
    n = 1;
    for (int i = 0; i < H; ++i) n *= maze::kNumActions;
  }
  std::vector<Action> seq(static_cast<std::size_t>(H));
  Choice best;
  best.predicted_return = -std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < n; ++k) {
    if (cfg_.exhaustive) {
      std::size_t code = k;
      for (int i = H - 1; i >= 0; --i) {
        seq[static_cast<std::size_t>(i)] = maze::action_from_index(static_cast<int>(code % 5));
        code /= 5;
      }
    } else {
      for (auto& a : seq) a = maze::action_from_index(static_cast<int>(rng() % 5));
    }
    const double value = score(state, seq);
    if (value > best.predicted_return || k == 0) {
      best.action = seq.front();
      best.predicted_return = value;
      best.candidate = static_cast<int>(k);
    }
  }
  return best;
}

ShootingExpert::Choice ShootingExpert::choose(const BoardState& state,
                                              std::uint64_t query_id) const {
  std::mt19937_64 rng(mix_seed(cfg_.rng_seed, query_id));
  return choose(state, rng);
}

Trajectory generate_trajectory(const ShootingExpert& expert, std::uint64_t episode_seed,
                               int max_steps) {
  if (max_steps < 1) throw PreconditionError("max_steps must be >= 1");
  const auto& geometry = expert.geometry();
  const auto& task = expert.task();
  Trajectory traj;
  traj.episode_seed = episode_seed;
  BoardState s = maze::reset(geometry, task, episode_seed);
  const std::uint64_t episode_key = mix_seed(episode_seed, 0x5eed);
  for (int t = 0; t < max_steps; ++t) {
    const auto choice = expert.choose(s, mix_seed(episode_key, static_cast<std::uint64_t>(t)));
    const maze::StepResult r = maze::step(geometry, s, choice.action, task);
    traj.steps.push_back({s, choice.action, r.reward});
    s = r.state;
    if (r.events.terminal) {
      traj.terminal = true;
      break;
    }
  }
  traj.final_state = s;
  traj.solved = traj.terminal;
  return traj;
}

bool replay_matches(const maze::MazeGeometry& geometry, const maze::TaskSpec& task,
                    const Trajectory& traj) {
  BoardState s = maze::reset(geometry, task, traj.episode_seed);
  for (const TrajectoryStep& st : traj.steps) {
    if (!(s == st.state)) return false;
    const maze::StepResult r = maze::step(geometry, s, st.action, task);
    if (r.reward != st.reward) return false;
    s = r.state;
  }
  return s == traj.final_state;
}

std::size_t Dataset::total_steps() const {
  std::size_t n = 0;
  for (const auto& t : trajectories) n += t.size();
  return n;
}

std::size_t Dataset::solved_count() const {
  return static_cast<std::size_t>(
      std::count_if(trajectories.begin(), trajectories.end(), [](const auto& t) { return t.solved; }));
}

Dataset build_dataset(const ShootingExpert& expert, const DatasetOptions& opts) {
  if (opts.trajectories < 2) throw PreconditionError("need at least 2 trajectories");
  if (!(opts.test_fraction >= 0 && opts.test_fraction < 1))
    throw ConfigError("test_fraction must be in [0, 1)");

  const auto n = static_cast<std::size_t>(opts.trajectories);
  std::vector<Trajectory> all(n);
  const int workers = std::max(1, std::min(opts.workers, opts.trajectories));
  if (workers == 1) {
    for (std::size_t i = 0; i < n; ++i) all[i] = generate_trajectory(expert, i, opts.max_steps);
  } else {
    // Seeds are strided across workers; results land in seed order.
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w) {
      pool.emplace_back([&, w] {
        for (std::size_t i = static_cast<std::size_t>(w); i < n; i += workers)
          all[i] = generate_trajectory(expert, i, opts.max_steps);
      });
    }
    for (auto& t : pool) t.join();
  }

  Dataset data;
  data.geometry = expert.geometry().config();
  data.task = expert.task();
  data.shooting = expert.config();
  for (auto& t : all)
    if (t.solved || opts.keep_unsolved) data.trajectories.push_back(std::move(t));
  if (data.trajectories.size() < 2)
    throw DatasetError("fewer than 2 usable trajectories (" +
                       std::to_string(data.trajectories.size()) + ")");

  const std::size_t kept = data.trajectories.size();
  std::vector<std::size_t> order(kept);
  for (std::size_t i = 0; i < kept; ++i) order[i] = i;
  std::mt19937_64 rng(mix_seed(expert.config().rng_seed, 0x5b117));
  for (std::size_t i = kept - 1; i > 0; --i) std::swap(order[i], order[rng() % (i + 1)]);
  auto n_test = static_cast<std::size_t>(std::lround(opts.test_fraction * static_cast<double>(kept)));
  n_test = std::min(n_test, kept - 1);
  if (opts.test_fraction > 0 && n_test == 0) n_test = 1;
  data.test.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_test));
  data.train.assign(order.begin() + static_cast<std::ptrdiff_t>(n_test), order.end());
  std::sort(data.test.begin(), data.test.end());
  std::sort(data.train.begin(), data.train.end());
  return data;
}

// ---------------------------------------------------------------------------
// Trajectory file: little-endian, version 1.
//
//   "BIMTRAJ\0" u32 version
//   str geometry_config  str geometry_hash  str task  str shooting_config
//   u32 n_trajectories  u32 n_test  u32[n_test] test indices
//   per trajectory:
//     u64 episode_seed  u8 terminal  u8 solved  u32 n_steps
//     n_steps x { i64 step_count  f64[6] pos,vel,tilt  u8 action  f64 reward }
//     final state { i64 step_count  f64[6] }
//
// str = u32 length + bytes.

namespace {

constexpr char kMagic[8] = {'B', 'I', 'M', 'T', 'R', 'A', 'J', '\0'};
constexpr std::uint32_t kVersion = 1;

class Writer {
 public:
  explicit Writer(const std::string& path) : out_(path, std::ios::binary) {
    if (!out_) throw IoError("cannot open '" + path + "' for writing");
  }
  template <typename T>
  void put(T v) {
    out_.write(reinterpret_cast<const char*>(&v), sizeof v);
  }
  void str(const std::string& s) {
    put(static_cast<std::uint32_t>(s.size()));
    out_.write(s.data(), static_cast<std::streamsize>(s.size()));
  }
  void state(const BoardState& s) {
    put(s.step_count);
    for (double v : {s.ball_pos.x, s.ball_pos.y, s.ball_vel.x, s.ball_vel.y, s.tilt.x, s.tilt.y})
      put(v);
  }
  void finish(const std::string& path) {
    out_.flush();
    if (!out_) throw IoError("write failed for '" + path + "'");
  }

 private:
  std::ofstream out_;
};

class Reader {
 public:
  explicit Reader(const std::string& path) : in_(path, std::ios::binary), path_(path) {
    if (!in_) throw IoError("cannot open '" + path + "'");
  }
  template <typename T>
  T get() {
    T v{};
    in_.read(reinterpret_cast<char*>(&v), sizeof v);
    if (!in_) throw DatasetError("truncated trajectory file '" + path_ + "'");
    return v;
  }
  std::string str() {
    const auto n = get<std::uint32_t>();
    if (n > (1u << 24)) throw DatasetError("corrupt string length in '" + path_ + "'");
    std::string s(n, '\0');
    in_.read(s.data(), n);
    if (!in_) throw DatasetError("truncated trajectory file '" + path_ + "'");
    return s;
  }
  BoardState state() {
    BoardState s;
    s.step_count = get<std::int64_t>();
    s.ball_pos.x = get<double>();
    s.ball_pos.y = get<double>();
    s.ball_vel.x = get<double>();
    s.ball_vel.y = get<double>();
    s.tilt.x = get<double>();
    s.tilt.y = get<double>();
    return s;
  }
  void read_bytes(char* dst, std::size_t n) {
    in_.read(dst, static_cast<std::streamsize>(n));
    if (!in_) throw DatasetError("truncated trajectory file '" + path_ + "'");
  }

 private:
  std::ifstream in_;
  std::string path_;
};

}  // namespace

void save_dataset(const Dataset& data, const std::string& path) {
  Writer w(path);
  for (char c : kMagic) w.put(c);
  w.put(kVersion);
  const auto geometry = maze::MazeGeometry::build(data.geometry);
  w.str(data.geometry.to_config().to_string());
  w.str(geometry.hash());
  w.str(data.task.name());
  w.str(data.shooting.to_config().to_string());
  w.put(static_cast<std::uint32_t>(data.trajectories.size()));
  w.put(static_cast<std::uint32_t>(data.test.size()));
  for (std::size_t i : data.test) w.put(static_cast<std::uint32_t>(i));
  for (const Trajectory& t : data.trajectories) {
    w.put(t.episode_seed);
    w.put(static_cast<std::uint8_t>(t.terminal));
    w.put(static_cast<std::uint8_t>(t.solved));
    w.put(static_cast<std::uint32_t>(t.steps.size()));
    for (const TrajectoryStep& st : t.steps) {
      w.state(st.state);
      w.put(static_cast<std::uint8_t>(maze::action_index(st.action)));
      w.put(st.reward);
    }
    w.state(t.final_state);
  }
  w.finish(path);
}

Dataset load_dataset(const std::string& path) {
  Reader r(path);
  char magic[8];
  r.read_bytes(magic, sizeof magic);
  if (std::memcmp(magic, kMagic, sizeof magic) != 0)
    throw DatasetError("'" + path + "' is not a trajectory file");
  const auto version = r.get<std::uint32_t>();
  if (version != kVersion)
    throw DatasetError("unsupported trajectory file version " + std::to_string(version));
  Dataset data;
  data.geometry = maze::GeometryConfig::from_config(KeyValueConfig::parse(r.str()));
  const std::string stored_hash = r.str();
  if (maze::MazeGeometry::build(data.geometry).hash() != stored_hash)
    throw DatasetError("geometry hash mismatch in '" + path + "'");
  data.task = maze::TaskSpec::parse(r.str());
  data.shooting = ShootingConfig::from_config(KeyValueConfig::parse(r.str()));
  const auto n = r.get<std::uint32_t>();
  const auto n_test = r.get<std::uint32_t>();
  if (n_test > n) throw DatasetError("corrupt split in '" + path + "'");
  std::vector<char> is_test(n, 0);
  for (std::uint32_t i = 0; i < n_test; ++i) {
    const auto idx = r.get<std::uint32_t>();
    if (idx >= n) throw DatasetError("corrupt split index in '" + path + "'");
    is_test[idx] = 1;
    data.test.push_back(idx);
  }
  for (std::uint32_t i = 0; i < n; ++i)
    if (!is_test[i]) data.train.push_back(i);
  data.trajectories.resize(n);
  for (Trajectory& t : data.trajectories) {
    t.episode_seed = r.get<std::uint64_t>();
    t.terminal = r.get<std::uint8_t>() != 0;
    t.solved = r.get<std::uint8_t>() != 0;
    const auto steps = r.get<std::uint32_t>();
    t.steps.resize(steps);
    for (TrajectoryStep& st : t.steps) {
      st.state = r.state();
      const auto a = r.get<std::uint8_t>();
      if (a >= maze::kNumActions) throw DatasetError("bad action id in '" + path + "'");
      st.action = maze::action_from_index(a);
      st.reward = r.get<double>();
    }
    t.final_state = r.state();
  }
  return data;
}

std::vector<HistogramBin> length_histogram(const Dataset& data, std::int64_t bin_width,
                                           bool include_unsolved) {
  if (bin_width < 1) throw ConfigError("bin width must be >= 1");
  if (data.trajectories.empty()) throw DatasetError("empty dataset");
  std::map<std::int64_t, std::size_t> counts;
  for (const Trajectory& t : data.trajectories) {
    if (!t.solved && !include_unsolved) continue;
    const auto len = static_cast<std::int64_t>(t.size());
    ++counts[len / bin_width];
  }
  std::vector<HistogramBin> bins;
  for (const auto& [bin, count] : counts)
    bins.push_back({bin * bin_width, (bin + 1) * bin_width, count});
  return bins;
}

void write_histogram_csv(const std::vector<HistogramBin>& bins, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  out << "bin_start,bin_end,count\n";
  for (const auto& b : bins) out << b.lo << ',' << b.hi << ',' << b.count << '\n';
}

}  // namespace bimgame::expert
