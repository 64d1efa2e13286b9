#include "bimgame/maze.hpp"

#include <algorithm>
#include <cstdio>
#include <limits>
#include <queue>
#include <random>
#include <sstream>

#include "bimgame/error.hpp"

namespace bimgame::maze {
namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;
constexpr double kContactSlack = 1e-9;
constexpr double kResolveSlack = 1e-12;

double wrap_angle(double a) {
  if (a > std::numbers::pi) a -= kTwoPi;
  if (a <= -std::numbers::pi) a += kTwoPi;
  return a;
}

double normalize_angle(double a) {
  a = std::fmod(a, kTwoPi);
  if (a < 0) a += kTwoPi;
  return a;
}

std::string fmt(double v) { return format_double(v); }

std::string wall_name(std::size_t i) { return "wall " + std::to_string(i + 1); }

}  // namespace

GeometryConfig GeometryConfig::rings(double board_radius, double ball_radius, double goal_radius,
                                     const std::vector<double>& radii, int gates_per_wall,
                                     double half_width, double offset_per_wall) {
  GeometryConfig cfg;
  cfg.board_radius = board_radius;
  cfg.ball_radius = ball_radius;
  cfg.center_goal_radius = goal_radius;
  for (std::size_t i = 0; i < radii.size(); ++i) {
    WallRing w;
    w.radius = radii[i];
    for (int g = 0; g < gates_per_wall; ++g) {
      const double c = static_cast<double>(i) * offset_per_wall + g * kTwoPi / gates_per_wall;
      w.gates.push_back({normalize_angle(c), half_width});
    }
    cfg.walls.push_back(std::move(w));
  }
  return cfg;
}

GeometryConfig GeometryConfig::defaults() {
  return rings(0.10, 0.005, 0.015, {0.085, 0.07, 0.055, 0.04, 0.025}, 2, 36 * kDegree,
               90 * kDegree);
}

GeometryConfig GeometryConfig::desk() {
  return rings(0.07, 0.005, 0.015, {0.055, 0.04, 0.025}, 2, 36 * kDegree, 90 * kDegree);
}

GeometryConfig GeometryConfig::from_config(const KeyValueConfig& kv) {
  const std::string preset = kv.get_string("preset", "default");
  GeometryConfig cfg;
  if (preset == "default") {
    cfg = defaults();
  } else if (preset == "desk") {
    cfg = desk();
  } else {
    throw ConfigError("unknown geometry preset '" + preset + "'");
  }
  cfg.board_radius = kv.get_double("board_radius", cfg.board_radius);
  cfg.ball_radius = kv.get_double("ball_radius", cfg.ball_radius);
  cfg.center_goal_radius = kv.get_double("center_goal_radius", cfg.center_goal_radius);

  if (kv.has("wall_radii") || kv.has("gates_per_wall") || kv.has("gate_half_width_deg") ||
      kv.has("gate_offset_deg")) {
    std::vector<double> radii;
    for (const auto& w : cfg.walls) radii.push_back(w.radius);
    radii = kv.get_doubles("wall_radii", radii);
    const int gates = static_cast<int>(kv.get_int("gates_per_wall", 2));
    const double half = kv.get_double("gate_half_width_deg", 36.0) * kDegree;
    const double offset = kv.get_double("gate_offset_deg", 90.0) * kDegree;
    cfg.walls = rings(cfg.board_radius, cfg.ball_radius, cfg.center_goal_radius, radii, gates,
                      half, offset)
                    .walls;
  }
  for (std::size_t i = 0; i < cfg.walls.size(); ++i) {
    const std::string key = "wall" + std::to_string(i + 1) + ".gates";
    if (!kv.has(key)) continue;
    std::vector<Gate> gates;
    std::istringstream in(kv.get_string(key, ""));
    std::string item;
    while (std::getline(in, item, ';')) {
      const auto colon = item.find(':');
      if (colon == std::string::npos)
        throw ConfigError(wall_name(i) + ": gate entry '" + item + "' is not center:half");
      try {
        gates.push_back({normalize_angle(std::stod(item.substr(0, colon)) * kDegree),
                         std::stod(item.substr(colon + 1)) * kDegree});
      } catch (const std::invalid_argument&) {
        throw ConfigError(wall_name(i) + ": bad gate entry '" + item + "'");
      }
    }
    cfg.walls[i].gates = std::move(gates);
  }

  PhysicsParams& ph = cfg.physics;
  ph.gravity = kv.get_double("physics.gravity", ph.gravity);
  ph.rolling_friction = kv.get_double("physics.rolling_friction", ph.rolling_friction);
  ph.stick_speed = kv.get_double("physics.stick_speed", ph.stick_speed);
  ph.stick_accel = kv.get_double("physics.stick_accel", ph.stick_accel);
  ph.restitution = kv.get_double("physics.restitution", ph.restitution);
  ph.tangential_damping = kv.get_double("physics.tangential_damping", ph.tangential_damping);
  ph.contact_speed = kv.get_double("physics.contact_speed", ph.contact_speed);
  ph.dt = kv.get_double("physics.dt", ph.dt);
  ph.substeps = static_cast<int>(kv.get_int("physics.substeps", ph.substeps));
  if (kv.has("physics.tilt_max_deg"))
    ph.tilt_max = kv.get_double("physics.tilt_max_deg", 5.0) * kDegree;
  if (kv.has("physics.tilt_step_deg"))
    ph.tilt_step = kv.get_double("physics.tilt_step_deg", 1.0) * kDegree;
  return cfg;
}

KeyValueConfig GeometryConfig::to_config() const {
  KeyValueConfig kv;
  kv.set("board_radius", fmt(board_radius));
  kv.set("ball_radius", fmt(ball_radius));
  kv.set("center_goal_radius", fmt(center_goal_radius));
  std::string radii;
  for (std::size_t i = 0; i < walls.size(); ++i) {
    radii += (i ? "," : "") + fmt(walls[i].radius);
    std::string gates;
    for (std::size_t g = 0; g < walls[i].gates.size(); ++g)
      gates += (g ? ";" : "") + fmt(walls[i].gates[g].center / kDegree) + ":" +
               fmt(walls[i].gates[g].half_width / kDegree);
    kv.set("wall" + std::to_string(i + 1) + ".gates", gates);
  }
  kv.set("wall_radii", radii);
  kv.set("physics.gravity", fmt(physics.gravity));
  kv.set("physics.rolling_friction", fmt(physics.rolling_friction));
  kv.set("physics.stick_speed", fmt(physics.stick_speed));
  kv.set("physics.stick_accel", fmt(physics.stick_accel));
  kv.set("physics.restitution", fmt(physics.restitution));
  kv.set("physics.tangential_damping", fmt(physics.tangential_damping));
  kv.set("physics.contact_speed", fmt(physics.contact_speed));
  kv.set("physics.dt", fmt(physics.dt));
  kv.set("physics.substeps", std::to_string(physics.substeps));
  kv.set("physics.tilt_max_deg", fmt(physics.tilt_max / kDegree));
  kv.set("physics.tilt_step_deg", fmt(physics.tilt_step / kDegree));
  return kv;
}

MazeGeometry MazeGeometry::build(const GeometryConfig& cfg) {
  if (!(cfg.board_radius > 0) || !(cfg.ball_radius > 0) || !(cfg.center_goal_radius >= 0))
    throw ConfigError("board, ball and goal radii must be positive");
  if (cfg.walls.empty()) throw ConfigError("geometry needs at least one wall");
  const double r = cfg.ball_radius;
  for (std::size_t i = 0; i < cfg.walls.size(); ++i) {
    const WallRing& w = cfg.walls[i];
    if (!(w.radius > 0)) throw ConfigError(wall_name(i) + ": radius must be positive");
    if (i > 0 && !(w.radius < cfg.walls[i - 1].radius))
      throw ConfigError(wall_name(i) + ": radii not decreasing");
    if (i > 0 && !(cfg.walls[i - 1].radius - w.radius > 2 * r))
      throw ConfigError(wall_name(i) + ": band to previous wall narrower than the ball");
    if (!(w.radius > cfg.center_goal_radius + r))
      throw ConfigError(wall_name(i) + ": radius not outside center_goal_radius + ball_radius");
    if (i == 0 && !(w.radius + r < cfg.board_radius - r))
      throw ConfigError(wall_name(i) + ": outermost band narrower than the ball");
    if (w.gates.empty()) throw ConfigError(wall_name(i) + ": needs at least one gate");
    const double min_half = std::asin(r / w.radius);
    for (std::size_t g = 0; g < w.gates.size(); ++g) {
      const Gate& a = w.gates[g];
      if (!(a.half_width > 0)) throw ConfigError(wall_name(i) + ": gate half width must be > 0");
      if (!(a.half_width > min_half))
        throw ConfigError(wall_name(i) + ": gate narrower than the ball");
      if (!std::isfinite(a.center)) throw ConfigError(wall_name(i) + ": gate center not finite");
      for (std::size_t h = 0; h < g; ++h) {
        const Gate& b = w.gates[h];
        if (std::abs(wrap_angle(a.center - b.center)) < a.half_width + b.half_width)
          throw ConfigError(wall_name(i) + ": overlapping gates");
      }
    }
  }
  const PhysicsParams& ph = cfg.physics;
  if (!(ph.dt > 0) || ph.substeps < 1) throw ConfigError("physics: dt and substeps must be positive");
  if (!(ph.tilt_step > 0) || !(ph.tilt_max >= ph.tilt_step))
    throw ConfigError("physics: need 0 < tilt_step <= tilt_max");

  MazeGeometry geom;
  geom.cfg_ = cfg;
  for (const WallRing& w : cfg.walls) {
    std::vector<std::array<Vec2, 2>> ends;
    for (const Gate& g : w.gates) {
      const double a0 = g.center - g.half_width;
      const double a1 = g.center + g.half_width;
      ends.push_back({Vec2{w.radius * std::cos(a0), w.radius * std::sin(a0)},
                      Vec2{w.radius * std::cos(a1), w.radius * std::sin(a1)}});
    }
    geom.gate_ends_.push_back(std::move(ends));
  }
  return geom;
}

std::size_t MazeGeometry::gate_count() const {
  std::size_t n = 0;
  for (const auto& w : cfg_.walls) n += w.gates.size();
  return n;
}

bool MazeGeometry::in_gate(int wall, double angle) const {
  for (const Gate& g : cfg_.walls[static_cast<std::size_t>(wall)].gates)
    if (std::abs(wrap_angle(angle - g.center)) < g.half_width) return true;
  return false;
}

double MazeGeometry::distance_to_wall(int wall, Vec2 p, Vec2* closest) const {
  const double radius = cfg_.walls[static_cast<std::size_t>(wall)].radius;
  const double rho = p.norm();
  const double theta = std::atan2(p.y, p.x);
  if (!in_gate(wall, theta)) {
    if (closest) {
      *closest = rho > 0 ? (radius / rho) * p : Vec2{radius, 0.0};
    }
    return std::abs(rho - radius);
  }
  double best = std::numeric_limits<double>::infinity();
  for (const auto& ends : gate_ends_[static_cast<std::size_t>(wall)]) {
    for (const Vec2& e : ends) {
      const double d = (p - e).norm();
      if (d < best) {
        best = d;
        if (closest) *closest = e;
      }
    }
  }
  return best;
}

double MazeGeometry::penetration(Vec2 p) const {
  const double r = cfg_.ball_radius;
  double pen = p.norm() + r - cfg_.board_radius;
  for (int w = 0; w < wall_count(); ++w) pen = std::max(pen, r - distance_to_wall(w, p));
  return pen;
}

int MazeGeometry::ring_index(Vec2 p) const {
  const double rho = p.norm();
  int ring = 1;
  for (const WallRing& w : cfg_.walls)
    if (rho < w.radius) ++ring;
  return ring;
}

std::string MazeGeometry::hash() const { return content_hash(cfg_.to_config().to_string()); }

void write_geometry_csv(const MazeGeometry& geometry, const std::string& path) {
  std::FILE* f = std::fopen(path.c_str(), "w");
  if (!f) throw IoError("cannot open '" + path + "' for writing");
  std::fprintf(f, "kind,wall,radius,gate,center_deg,half_width_deg\n");
  std::fprintf(f, "board,0,%.17g,-1,0,0\n", geometry.board_radius());
  std::fprintf(f, "goal,0,%.17g,-1,0,0\n", geometry.center_goal_radius());
  for (int w = 0; w < geometry.wall_count(); ++w) {
    const auto& ring = geometry.walls()[static_cast<std::size_t>(w)];
    for (std::size_t g = 0; g < ring.gates.size(); ++g) {
      std::fprintf(f, "gate,%d,%.17g,%zu,%.17g,%.17g\n", w + 1, ring.radius, g,
                   ring.gates[g].center / kDegree, ring.gates[g].half_width / kDegree);
    }
  }
  if (std::fclose(f) != 0) throw IoError("write failed for '" + path + "'");
}

Action mirror_action(Action a) {
  switch (a) {
    case Action::TiltYPlus:
      return Action::TiltYMinus;
    case Action::TiltYMinus:
      return Action::TiltYPlus;
    default:
      return a;
  }
}

TaskSpec TaskSpec::parse(const std::string& name) {
  if (name == "FULL") return full();
  if (name.size() > 3 && name.compare(0, 3, "STG") == 0) {
    try {
      const int k = std::stoi(name.substr(3));
      if (k >= 1) return steps_to_go(k);
    } catch (const std::exception&) {
    }
  }
  throw ConfigError("unknown task '" + name + "' (expected FULL or STG<k>)");
}

std::string TaskSpec::name() const {
  return kind == TaskKind::Full ? "FULL" : "STG" + std::to_string(level);
}

BoardState reset(const MazeGeometry& geometry, const TaskSpec& /*task*/, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  const double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
  const double angle = u * kTwoPi;
  const double radius = 0.5 * (geometry.walls().front().radius + geometry.board_radius());
  BoardState s;
  s.ball_pos = {radius * std::cos(angle), radius * std::sin(angle)};
  return s;
}

double task_reward(const TaskSpec& task, const StepEvents& events) {
  double reward = 0.0;
  for (const GateCrossing& c : events.gate_crossings) {
    if (task.kind == TaskKind::Full) {
      reward += c.direction == Direction::Inward ? 1.0 : -1.0;
    } else if (c.wall == task.level && c.direction == Direction::Inward) {
      reward += 1.0;
    }
  }
  return reward;
}

bool is_terminal(const MazeGeometry& geometry, const TaskSpec& task, const BoardState& state,
                 const StepEvents& events) {
  if (task.kind == TaskKind::Full) return state.ball_pos.norm() < geometry.center_goal_radius();
  for (const GateCrossing& c : events.gate_crossings)
    if (c.wall == task.level && c.direction == Direction::Inward) return true;
  return false;
}

namespace {

struct Contact {
  double clearance;
  Vec2 normal;  // from the surface toward the ball center
};

// Surface 0 is the board rim, surface w + 1 is wall w (outermost first).
Contact surface_contact(const MazeGeometry& g, int surface, Vec2 p) {
  const double rho = p.norm();
  if (surface == 0) {
    return Contact{g.board_radius() - rho, rho > 0 ? (-1.0 / rho) * p : Vec2{-1.0, 0.0}};
  }
  const int w = surface - 1;
  // Distance to an arc is never below the radial gap; far walls need no angle.
  const double radial = std::abs(rho - g.walls()[static_cast<std::size_t>(w)].radius);
  if (radial > 2 * g.ball_radius()) return Contact{radial, Vec2{}};
  Vec2 q;
  const double d = g.distance_to_wall(w, p, &q);
  if (d > 0) return Contact{d, (1.0 / d) * (p - q)};
  // Exactly on the wall line: push back toward the band the center came from.
  const double sgn = rho >= g.walls()[static_cast<std::size_t>(w)].radius ? 1.0 : -1.0;
  return Contact{d, rho > 0 ? (sgn / rho) * p : Vec2{sgn, 0.0}};
}

bool crossing_terminal(const TaskSpec& task, const GateCrossing& c) {
  return task.kind == TaskKind::StepsToGo && c.wall == task.level &&
         c.direction == Direction::Inward;
}

bool finite(const BoardState& s) {
  return std::isfinite(s.ball_pos.x) && std::isfinite(s.ball_pos.y) &&
         std::isfinite(s.ball_vel.x) && std::isfinite(s.ball_vel.y) && std::isfinite(s.tilt.x) &&
         std::isfinite(s.tilt.y);
}

double apply_tilt(double tilt, int delta, const PhysicsParams& ph) {
  const long max_steps = std::lround(ph.tilt_max / ph.tilt_step);
  const long cur = std::lround(tilt / ph.tilt_step);
  return static_cast<double>(std::clamp(cur + delta, -max_steps, max_steps)) * ph.tilt_step;
}

}  // namespace

StepResult step(const MazeGeometry& geometry, const BoardState& state, Action action,
                const TaskSpec& task) {
  if (!finite(state)) throw IntegrationFault("non-finite board state before step");
  const PhysicsParams& ph = geometry.physics();
  const double r = geometry.ball_radius();

  StepResult out;
  BoardState s = state;
  switch (action) {
    case Action::TiltXPlus:
      s.tilt.x = apply_tilt(s.tilt.x, +1, ph);
      break;
    case Action::TiltXMinus:
      s.tilt.x = apply_tilt(s.tilt.x, -1, ph);
      break;
    case Action::TiltYPlus:
      s.tilt.y = apply_tilt(s.tilt.y, +1, ph);
      break;
    case Action::TiltYMinus:
      s.tilt.y = apply_tilt(s.tilt.y, -1, ph);
      break;
    case Action::Noop:
      break;
  }

  const Vec2 accel{ph.gravity * std::sin(s.tilt.x), ph.gravity * std::sin(s.tilt.y)};
  const double h = ph.dt / ph.substeps;
  const int surfaces = geometry.wall_count() + 1;
  StepEvents& ev = out.events;
  bool done = false;

  for (int sub = 0; sub < ph.substeps && !done; ++sub) {
    // Static friction: a slow ball sticks unless the drive left after wall
    // reactions exceeds the breakaway threshold.
    Vec2 drive = accel;
    for (int k = 0; k < surfaces; ++k) {
      const Contact c = surface_contact(geometry, k, s.ball_pos);
      if (c.clearance <= r + kContactSlack) {
        const double an = drive.dot(c.normal);
        if (an < 0) drive = drive - an * c.normal;
      }
    }
    if (s.ball_vel.norm() < ph.stick_speed && drive.norm() < ph.stick_accel) {
      s.ball_vel = {};
      continue;
    }

    s.ball_vel = s.ball_vel + h * (accel - ph.rolling_friction * s.ball_vel);

    // Split the move so no part travels more than half a ball radius; a thin
    // wall can then never be jumped.
    const double travel = s.ball_vel.norm() * h;
    const int parts = std::max(1, static_cast<int>(std::ceil(travel / (0.5 * r))));
    const double hp = h / parts;
    for (int part = 0; part < parts && !done; ++part) {
      const Vec2 prev = s.ball_pos;
      s.ball_pos = s.ball_pos + hp * s.ball_vel;

      for (int pass = 0; pass < 4; ++pass) {
        bool moved = false;
        for (int k = 0; k < surfaces; ++k) {
          const Contact c = surface_contact(geometry, k, s.ball_pos);
          const double pen = r - c.clearance;
          if (pen <= (pass == 0 ? 0.0 : kResolveSlack)) continue;
          s.ball_pos = s.ball_pos + pen * c.normal;
          moved = true;
          const double vn = s.ball_vel.dot(c.normal);
          if (vn >= 0) continue;
          if (-vn > ph.contact_speed) {
            const Vec2 vt = s.ball_vel - vn * c.normal;
            s.ball_vel = (-ph.restitution * vn) * c.normal + (1.0 - ph.tangential_damping) * vt;
            ++ev.wall_contacts;
          } else {
            s.ball_vel = s.ball_vel - vn * c.normal;
          }
        }
        if (!moved) break;
      }

      const double rho0 = prev.norm();
      const double rho1 = s.ball_pos.norm();
      for (int w = 0; w < geometry.wall_count(); ++w) {
        const double radius = geometry.walls()[static_cast<std::size_t>(w)].radius;
        const bool was_inside = rho0 < radius;
        const bool is_inside = rho1 < radius;
        if (was_inside == is_inside) continue;
        GateCrossing c{w + 1, is_inside ? Direction::Inward : Direction::Outward};
        ev.gate_crossings.push_back(c);
        if (crossing_terminal(task, c)) done = true;
      }
      if (task.kind == TaskKind::Full && rho1 < geometry.center_goal_radius()) done = true;
    }
  }

  if (!finite(s)) throw IntegrationFault("non-finite board state after step");
  s.step_count = state.step_count + 1;
  ev.terminal = done;
  out.reward = task_reward(task, ev);
  out.state = s;
  return out;
}

GeometryConfig mirror(const GeometryConfig& cfg) {
  GeometryConfig m = cfg;
  for (WallRing& w : m.walls)
    for (Gate& g : w.gates) g.center = -g.center;
  return m;
}

BoardState mirror(const BoardState& s) {
  BoardState m = s;
  m.ball_pos.y = -m.ball_pos.y;
  m.ball_vel.y = -m.ball_vel.y;
  m.tilt.y = -m.tilt.y;
  return m;
}

std::array<double, 6> state_vector(const MazeGeometry& geometry, const BoardState& s) {
  const double pos_scale = geometry.board_radius() - geometry.ball_radius();
  const double tilt_scale = geometry.physics().tilt_max;
  auto clip = [](double v) { return std::clamp(v, -1.0, 1.0); };
  return {clip(s.ball_pos.x / pos_scale), clip(s.ball_pos.y / pos_scale), clip(s.ball_vel.x),
          clip(s.ball_vel.y),             clip(s.tilt.x / tilt_scale),     clip(s.tilt.y / tilt_scale)};
}

// ---------------------------------------------------------------------------
// Rendering

Renderer::Renderer(const MazeGeometry& geometry, int height, int width)
    : board_radius_(geometry.board_radius()),
      ball_radius_(geometry.ball_radius()),
      height_(height),
      width_(width),
      background_(static_cast<std::size_t>(height) * width, 0.0) {
  if (height < 1 || width < 1) throw ConfigError("render size must be positive");
  const double half_line = 0.75 * std::max(2 * board_radius_ / width, 2 * board_radius_ / height);
  for (int i = 0; i < height_; ++i) {
    for (int j = 0; j < width_; ++j) {
      const Vec2 c = pixel_center(i, j);
      const double rho = c.norm();
      const double theta = std::atan2(c.y, c.x);
      for (int w = 0; w < geometry.wall_count(); ++w) {
        const double radius = geometry.walls()[static_cast<std::size_t>(w)].radius;
        if (std::abs(rho - radius) <= half_line && !geometry.in_gate(w, theta))
          background_[static_cast<std::size_t>(i) * width_ + j] = 0.5;
      }
    }
  }
}

Vec2 Renderer::pixel_center(int row, int col) const {
  const double sx = 2 * board_radius_ / width_;
  const double sy = 2 * board_radius_ / height_;
  return {-board_radius_ + (col + 0.5) * sx, board_radius_ - (row + 0.5) * sy};
}

std::array<int, 4> Renderer::ball_box(Vec2 p) const {
  const double sx = 2 * board_radius_ / width_;
  const double sy = 2 * board_radius_ / height_;
  const int c0 = static_cast<int>(std::floor((p.x - ball_radius_ + board_radius_) / sx)) - 1;
  const int c1 = static_cast<int>(std::floor((p.x + ball_radius_ + board_radius_) / sx)) + 2;
  const int r0 = static_cast<int>(std::floor((board_radius_ - p.y - ball_radius_) / sy)) - 1;
  const int r1 = static_cast<int>(std::floor((board_radius_ - p.y + ball_radius_) / sy)) + 2;
  return {std::clamp(r0, 0, height_), std::clamp(r1, 0, height_), std::clamp(c0, 0, width_),
          std::clamp(c1, 0, width_)};
}

void Renderer::render_into(const BoardState& state, double* out) const {
  std::copy(background_.begin(), background_.end(), out);
  const Vec2 p = state.ball_pos;
  const auto box = ball_box(p);
  const double sx = 2 * board_radius_ / width_;
  const double sy = 2 * board_radius_ / height_;
  const int hit_col = static_cast<int>(std::floor((p.x + board_radius_) / sx));
  const int hit_row = static_cast<int>(std::floor((board_radius_ - p.y) / sy));
  for (int i = box[0]; i < box[1]; ++i) {
    for (int j = box[2]; j < box[3]; ++j) {
      const bool inside = (pixel_center(i, j) - p).norm() <= ball_radius_;
      if (inside || (i == hit_row && j == hit_col))
        out[static_cast<std::size_t>(i) * width_ + j] = 1.0;
    }
  }
}

Observation Renderer::render(const BoardState& state) const {
  Observation obs;
  obs.height = height_;
  obs.width = width_;
  obs.image.resize(background_.size());
  render_into(state, obs.image.data());
  return obs;
}

// ---------------------------------------------------------------------------
// Geodesic distance

GeodesicField::GeodesicField(const MazeGeometry& geometry, int grid)
    : geometry_(geometry), grid_(grid) {
  if (grid < 3) throw ConfigError("geodesic grid must have at least 3 nodes per side");
  origin_ = -geometry.board_radius();
  cell_ = 2 * geometry.board_radius() / (grid - 1);
  const double inf = std::numeric_limits<double>::infinity();
  const std::size_t n = static_cast<std::size_t>(grid) * grid;
  dist_.assign(n, inf);
  std::vector<char> free(n, 0);
  // Nodes within 1.5 cells of a legal ball center count as free, so every
  // legal position has free neighbours.
  const double slack = 1.5 * cell_;

  using Item = std::pair<double, std::size_t>;
  std::priority_queue<Item, std::vector<Item>, std::greater<>> queue;
  for (int i = 0; i < grid; ++i) {
    for (int j = 0; j < grid; ++j) {
      const Vec2 p{origin_ + j * cell_, origin_ + i * cell_};
      const std::size_t k = static_cast<std::size_t>(i) * grid + j;
      if (geometry.penetration(p) > slack) continue;
      free[k] = 1;
      if (p.norm() <= geometry.center_goal_radius()) {
        dist_[k] = 0.0;
        queue.push({0.0, k});
      }
    }
  }
  const double diag = cell_ * std::numbers::sqrt2;
  while (!queue.empty()) {
    const auto [d, k] = queue.top();
    queue.pop();
    if (d > dist_[k]) continue;
    const int i = static_cast<int>(k / grid);
    const int j = static_cast<int>(k % grid);
    for (int di = -1; di <= 1; ++di) {
      for (int dj = -1; dj <= 1; ++dj) {
        if (!di && !dj) continue;
        const int ni = i + di;
        const int nj = j + dj;
        if (ni < 0 || nj < 0 || ni >= grid || nj >= grid) continue;
        const std::size_t nk = static_cast<std::size_t>(ni) * grid + nj;
        if (!free[nk]) continue;
        const double nd = d + ((di && dj) ? diag : cell_);
        if (nd < dist_[nk]) {
          dist_[nk] = nd;
          queue.push({nd, nk});
        }
      }
    }
  }
}

double GeodesicField::distance(Vec2 p) const {
  if (!std::isfinite(p.x) || !std::isfinite(p.y)) throw DomainError("non-finite position");
  const double pen = geometry_.penetration(p);
  if (pen > kContactSlack) {
    if (p.norm() + geometry_.ball_radius() > geometry_.board_radius())
      throw DomainError("position outside the playable area");
    throw DomainError("position inside a wall");
  }
  if (p.norm() <= geometry_.center_goal_radius()) return 0.0;
  const int j0 = static_cast<int>(std::floor((p.x - origin_) / cell_));
  const int i0 = static_cast<int>(std::floor((p.y - origin_) / cell_));
  double best = std::numeric_limits<double>::infinity();
  for (int i = i0 - 1; i <= i0 + 2; ++i) {
    for (int j = j0 - 1; j <= j0 + 2; ++j) {
      if (i < 0 || j < 0 || i >= grid_ || j >= grid_) continue;
      const double v = node_value(i, j);
      if (!std::isfinite(v)) continue;
      const Vec2 node{origin_ + j * cell_, origin_ + i * cell_};
      best = std::min(best, v + (p - node).norm());
    }
  }
  if (!std::isfinite(best)) throw DomainError("position not connected to the center region");
  return best;
}

}  // namespace bimgame::maze
