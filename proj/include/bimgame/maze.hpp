#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <string>
#include <vector>

#include "bimgame/config.hpp"

// Tilting circular maze: concentric thin ring walls with gate openings, a
// single ball, and the task reward rules built on top of gate crossings.
namespace bimgame::maze {

inline constexpr double kDegree = std::numbers::pi / 180.0;

struct Vec2 {
  double x = 0.0;
  double y = 0.0;

  friend Vec2 operator+(Vec2 a, Vec2 b) { return {a.x + b.x, a.y + b.y}; }
  friend Vec2 operator-(Vec2 a, Vec2 b) { return {a.x - b.x, a.y - b.y}; }
  friend Vec2 operator*(double s, Vec2 a) { return {s * a.x, s * a.y}; }
  friend bool operator==(const Vec2&, const Vec2&) = default;
  double dot(Vec2 o) const { return x * o.x + y * o.y; }
  double norm() const { return std::hypot(x, y); }
};

struct Gate {
  double center = 0.0;      // rad, taken modulo 2pi
  double half_width = 0.0;  // rad
};

struct WallRing {
  double radius = 0.0;
  std::vector<Gate> gates;
};

struct PhysicsParams {
  double gravity = 9.81;
  double rolling_friction = 0.3;   // viscous, 1/s
  double stick_speed = 1e-4;       // m/s
  double stick_accel = 0.05;       // m/s^2
  double restitution = 0.3;
  double tangential_damping = 0.2;
  // Normal approach speeds below this are treated as resting contact: the
  // normal component is removed without bounce or tangential damping.
  double contact_speed = 0.01;
  double dt = 0.05;
  int substeps = 10;
  double tilt_max = 5.0 * kDegree;
  double tilt_step = 1.0 * kDegree;
};

struct GeometryConfig {
  double board_radius = 0.10;
  double ball_radius = 0.005;
  double center_goal_radius = 0.015;
  std::vector<WallRing> walls;
  PhysicsParams physics;

  // Five walls, two gates each, gate centers rotated 90 degrees per wall.
  static GeometryConfig defaults();
  // Reduced three-wall board used for desk-scale learning runs.
  static GeometryConfig desk();
  // Evenly spaced walls with `gates_per_wall` gates of the given half width.
  static GeometryConfig rings(double board_radius, double ball_radius, double goal_radius,
                              const std::vector<double>& radii, int gates_per_wall,
                              double half_width, double offset_per_wall);

  // Keys: preset (default|desk), board_radius, ball_radius, center_goal_radius,
  // wall_radii (comma list), gates_per_wall, gate_half_width_deg,
  // gate_offset_deg, wall<i>.gates (center:half pairs in degrees, ';'
  // separated) and physics.* constants.
  static GeometryConfig from_config(const KeyValueConfig& cfg);
  KeyValueConfig to_config() const;
};

class MazeGeometry {
 public:
  // Validates and freezes a configuration. Throws ConfigError naming the
  // offending wall.
  static MazeGeometry build(const GeometryConfig& cfg);

  double board_radius() const { return cfg_.board_radius; }
  double ball_radius() const { return cfg_.ball_radius; }
  double center_goal_radius() const { return cfg_.center_goal_radius; }
  const std::vector<WallRing>& walls() const { return cfg_.walls; }
  int wall_count() const { return static_cast<int>(cfg_.walls.size()); }
  const PhysicsParams& physics() const { return cfg_.physics; }
  const GeometryConfig& config() const { return cfg_; }
  std::size_t gate_count() const;

  // True when `angle` lies strictly inside one of wall `wall`'s gate windows.
  bool in_gate(int wall, double angle) const;
  // Distance from `p` to the material of wall `wall` (an arc set).
  double distance_to_wall(int wall, Vec2 p, Vec2* closest = nullptr) const;
  // Largest overlap of a ball centered at `p` with any wall or the board rim;
  // non-positive for legal positions.
  double penetration(Vec2 p) const;

  // 1 = outermost band, n_walls + 1 = center region.
  int ring_index(Vec2 p) const;

  std::string hash() const;

 private:
  GeometryConfig cfg_;
  // Per wall, per gate: the two arc endpoints bounding the opening.
  std::vector<std::vector<std::array<Vec2, 2>>> gate_ends_;
};

enum class Action : std::uint8_t { TiltXPlus = 0, TiltXMinus, TiltYPlus, TiltYMinus, Noop };
inline constexpr int kNumActions = 5;

inline Action action_from_index(int i) { return static_cast<Action>(i); }
inline int action_index(Action a) { return static_cast<int>(a); }
// Image of an action under reflection across the x axis (y -> -y).
Action mirror_action(Action a);

struct BoardState {
  Vec2 ball_pos;
  Vec2 ball_vel;
  Vec2 tilt;  // rad; acceleration along each board axis is g*sin(tilt)
  std::int64_t step_count = 0;

  friend bool operator==(const BoardState&, const BoardState&) = default;
};

enum class TaskKind { Full, StepsToGo };

struct TaskSpec {
  TaskKind kind = TaskKind::Full;
  int level = 0;  // k for STG-k: terminal on crossing wall k inward

  static TaskSpec full() { return {TaskKind::Full, 0}; }
  static TaskSpec steps_to_go(int k) { return {TaskKind::StepsToGo, k}; }
  // "FULL", "STG1", "STG2", ...
  static TaskSpec parse(const std::string& name);
  std::string name() const;
};

enum class Direction { Inward, Outward };

struct GateCrossing {
  int wall = 0;  // 1-based, 1 = outermost
  Direction direction = Direction::Inward;
};

struct StepEvents {
  std::vector<GateCrossing> gate_crossings;
  int wall_contacts = 0;
  bool terminal = false;
};

struct StepResult {
  BoardState state;
  double reward = 0.0;
  StepEvents events;
};

BoardState reset(const MazeGeometry& geometry, const TaskSpec& task, std::uint64_t seed);

// Advances one control interval. Throws IntegrationFault on non-finite state.
StepResult step(const MazeGeometry& geometry, const BoardState& state, Action action,
                const TaskSpec& task);

double task_reward(const TaskSpec& task, const StepEvents& events);
bool is_terminal(const MazeGeometry& geometry, const TaskSpec& task, const BoardState& state,
                 const StepEvents& events);

inline double radial_distance(const BoardState& state) { return state.ball_pos.norm(); }
inline int ring_index(const MazeGeometry& geometry, const BoardState& state) {
  return geometry.ring_index(state.ball_pos);
}

// Mirror images across the x axis. Gate centers are negated, not re-wrapped,
// so every angle in the mirrored board is the exact negative of the original.
GeometryConfig mirror(const GeometryConfig& cfg);
BoardState mirror(const BoardState& s);

// One row per gate window (wall, radius, gate, center_deg, half_width_deg) plus
// a `board` row with the rim and goal radii.
void write_geometry_csv(const MazeGeometry& geometry, const std::string& path);

// Normalized (pos, vel, tilt) in [-1, 1]; velocity scaled by 1 m/s and clipped.
std::array<double, 6> state_vector(const MazeGeometry& geometry, const BoardState& s);

struct Observation {
  int height = 0;
  int width = 0;
  std::vector<double> image;  // row-major, row 0 at +y
};

// Top-down raster: background 0, walls 0.5 (open at gates), ball 1.0.
class Renderer {
 public:
  Renderer(const MazeGeometry& geometry, int height = 64, int width = 64);

  Observation render(const BoardState& state) const;
  void render_into(const BoardState& state, double* out) const;

  int height() const { return height_; }
  int width() const { return width_; }
  // Pixel index range [r0, r1) x [c0, c1) that the ball disc may touch.
  std::array<int, 4> ball_box(Vec2 p) const;

 private:
  Vec2 pixel_center(int row, int col) const;

  double board_radius_;
  double ball_radius_;
  int height_;
  int width_;
  std::vector<double> background_;
};

// Shortest collision-free path length to the center region, from a
// multi-source Dijkstra over an 8-connected occupancy grid.
class GeodesicField {
 public:
  explicit GeodesicField(const MazeGeometry& geometry, int grid = 201);

  // Throws DomainError when `p` is outside the playable area.
  double distance(Vec2 p) const;
  int grid() const { return grid_; }

 private:
  double node_value(int i, int j) const { return dist_[static_cast<std::size_t>(i) * grid_ + j]; }

  MazeGeometry geometry_;
  int grid_;
  double cell_;
  double origin_;
  std::vector<double> dist_;  // +inf for blocked nodes
};

}  // namespace bimgame::maze
