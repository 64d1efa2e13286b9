#include <cmath>
#include <random>
#include <set>

#include "bimgame/error.hpp"
#include "bimgame/maze.hpp"
#include "doctest.h"

using namespace bimgame;
using namespace bimgame::maze;

namespace {

MazeGeometry default_geometry() { return MazeGeometry::build(GeometryConfig::defaults()); }

BoardState at(double x, double y, double vx = 0, double vy = 0) {
  BoardState s;
  s.ball_pos = {x, y};
  s.ball_vel = {vx, vy};
  return s;
}

Action random_action(std::mt19937_64& rng) { return action_from_index(static_cast<int>(rng() % 5)); }

}  // namespace

TEST_CASE("default geometry has five walls and ten gates") {
  const auto g = default_geometry();
  CHECK(g.wall_count() == 5);
  CHECK(g.gate_count() == 10);
  const auto d = MazeGeometry::build(GeometryConfig::desk());
  CHECK(d.wall_count() == 3);
}

TEST_CASE("geometry validation names the offending wall") {
  auto cfg = GeometryConfig::rings(0.1, 0.005, 0.015, {0.04, 0.06}, 2, 0.5, 0.0);
  try {
    MazeGeometry::build(cfg);
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("radii not decreasing") != std::string::npos);
    CHECK(std::string(e.what()).find("wall 2") != std::string::npos);
  }

  auto overlap = GeometryConfig::defaults();
  overlap.walls[2].gates = {{0.0, 0.6}, {1.0, 0.6}};
  CHECK_THROWS_WITH_AS(MazeGeometry::build(overlap), doctest::Contains("wall 3: overlapping"),
                       ConfigError);

  auto narrow = GeometryConfig::defaults();
  narrow.walls[4].gates = {{0.0, 0.05}};
  CHECK_THROWS_AS(MazeGeometry::build(narrow), ConfigError);

  auto gateless = GeometryConfig::defaults();
  gateless.walls[0].gates.clear();
  CHECK_THROWS_AS(MazeGeometry::build(gateless), ConfigError);
}

TEST_CASE("geometry config round trips through key-value text") {
  const auto cfg = GeometryConfig::desk();
  const auto back = GeometryConfig::from_config(KeyValueConfig::parse(cfg.to_config().to_string()));
  CHECK(MazeGeometry::build(back).hash() == MazeGeometry::build(cfg).hash());

  const auto kv = KeyValueConfig::parse("preset = default\nwall_radii = 0.08, 0.05\ngates_per_wall = 3\n");
  const auto g = MazeGeometry::build(GeometryConfig::from_config(kv));
  CHECK(g.wall_count() == 2);
  CHECK(g.gate_count() == 6);
}

TEST_CASE("reset is seeded and starts in the outermost ring") {
  const auto g = default_geometry();
  const auto task = TaskSpec::full();
  CHECK(reset(g, task, 7) == reset(g, task, 7));
  std::set<double> angles;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    const auto s = reset(g, task, seed);
    const double rho = radial_distance(s);
    CHECK(rho > g.walls()[0].radius);
    CHECK(rho < g.board_radius() - g.ball_radius());
    CHECK(ring_index(g, s) == 1);
    CHECK(s.ball_vel == Vec2{});
    CHECK(s.tilt == Vec2{});
    CHECK(s.step_count == 0);
    CHECK(g.penetration(s.ball_pos) <= 0);
    angles.insert(std::atan2(s.ball_pos.y, s.ball_pos.x));
  }
  CHECK(angles.size() >= 50);
}

TEST_CASE("ball at rest on a level board stays put") {
  const auto g = default_geometry();
  const auto s = reset(g, TaskSpec::full(), 3);
  const auto r = step(g, s, Action::Noop, TaskSpec::full());
  CHECK(r.state.ball_pos == s.ball_pos);
  CHECK(r.reward == 0.0);
  CHECK(r.events.gate_crossings.empty());
  CHECK(r.events.wall_contacts == 0);
  CHECK_FALSE(r.events.terminal);
  CHECK(r.state.step_count == 1);
}

TEST_CASE("actions change tilt by exactly one degree and saturate") {
  const auto g = default_geometry();
  BoardState s = reset(g, TaskSpec::full(), 0);
  for (int i = 1; i <= 8; ++i) {
    s = step(g, s, Action::TiltXPlus, TaskSpec::full()).state;
    CHECK(s.tilt.x == doctest::Approx(std::min(i, 5) * kDegree).epsilon(1e-15));
  }
  for (int i = 0; i < 12; ++i) s = step(g, s, Action::TiltXMinus, TaskSpec::full()).state;
  CHECK(s.tilt.x == doctest::Approx(-5 * kDegree).epsilon(1e-15));
  s = step(g, s, Action::TiltYMinus, TaskSpec::full()).state;
  CHECK(s.tilt.y == doctest::Approx(-kDegree).epsilon(1e-15));
  CHECK(s.tilt.x == doctest::Approx(-5 * kDegree).epsilon(1e-15));
}

TEST_CASE("crossing a wall-1 gate inward yields +1 under FULL") {
  const auto g = default_geometry();
  // Wall 1 has a gate centered at angle 0; aim straight at it.
  const double r1 = g.walls()[0].radius;
  BoardState s = at(r1 + 0.004, 0.0, -0.3, 0.0);
  const auto r = step(g, s, Action::Noop, TaskSpec::full());
  REQUIRE(r.events.gate_crossings.size() == 1);
  CHECK(r.events.gate_crossings[0].wall == 1);
  CHECK(r.events.gate_crossings[0].direction == Direction::Inward);
  CHECK(r.reward == 1.0);
  CHECK(ring_index(g, r.state) == ring_index(g, s) + 1);

  // Coming back out costs -1.
  BoardState back = at(r1 - 0.004, 0.0, 0.3, 0.0);
  const auto rb = step(g, back, Action::Noop, TaskSpec::full());
  CHECK(rb.reward == -1.0);
  CHECK(ring_index(g, rb.state) == ring_index(g, back) - 1);
}

TEST_CASE("STG tasks reward only the designated crossing") {
  const auto g = default_geometry();
  const double r1 = g.walls()[0].radius;
  const BoardState s = at(r1 + 0.004, 0.0, -0.3, 0.0);
  const auto r1_stg1 = step(g, s, Action::Noop, TaskSpec::steps_to_go(1));
  CHECK(r1_stg1.reward == 1.0);
  CHECK(r1_stg1.events.terminal);
  const auto r1_stg2 = step(g, s, Action::Noop, TaskSpec::steps_to_go(2));
  CHECK(r1_stg2.reward == 0.0);
  CHECK_FALSE(r1_stg2.events.terminal);
  CHECK(TaskSpec::parse("STG2").level == 2);
  CHECK(TaskSpec::parse("FULL").kind == TaskKind::Full);
  CHECK_THROWS_AS(TaskSpec::parse("STG0"), ConfigError);
}

TEST_CASE("ball driven into a solid wall never penetrates it") {
  // One substep per control step so every integration substep is observed.
  auto cfg = GeometryConfig::defaults();
  cfg.physics.dt = 0.005;
  cfg.physics.substeps = 1;
  const auto g = MazeGeometry::build(cfg);
  // Angle 90 degrees is solid on wall 1 (its gates are at 0 and 180).
  const double mid = 0.5 * (g.walls()[0].radius + g.board_radius());
  BoardState s = at(0.0, mid);
  for (int i = 0; i < 5; ++i) s = step(g, s, Action::TiltYMinus, TaskSpec::full()).state;
  double worst = -1.0;
  for (int i = 0; i < 1000; ++i) {
    s = step(g, s, i % 50 == 0 ? Action::TiltYPlus : Action::TiltYMinus, TaskSpec::full()).state;
    worst = std::max(worst, g.penetration(s.ball_pos));
  }
  CHECK(worst <= 1e-9);
  // It must have been pressed against wall 1 for most of the run.
  CHECK(g.distance_to_wall(0, s.ball_pos) == doctest::Approx(g.ball_radius()).epsilon(1e-6));
}

TEST_CASE("random rollouts stay contained and replay bit-exactly") {
  const auto g = default_geometry();
  const auto task = TaskSpec::full();
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    std::mt19937_64 rng(seed);
    std::vector<Action> actions;
    for (int i = 0; i < 400; ++i) actions.push_back(random_action(rng));
    std::vector<BoardState> first, second;
    BoardState s = reset(g, task, seed);
    for (Action a : actions) {
      s = step(g, s, a, task).state;
      CHECK(g.penetration(s.ball_pos) <= 1e-9);
      first.push_back(s);
    }
    s = reset(g, task, seed);
    for (Action a : actions) second.push_back(s = step(g, s, a, task).state);
    CHECK(first == second);
  }
}

TEST_CASE("non-finite state raises an integration fault") {
  const auto g = default_geometry();
  BoardState s = reset(g, TaskSpec::full(), 0);
  s.ball_vel.x = std::nan("");
  CHECK_THROWS_AS(step(g, s, Action::Noop, TaskSpec::full()), IntegrationFault);
}

TEST_CASE("level-board friction never increases speed") {
  const auto g = default_geometry();
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> ang(0, 2 * M_PI), vel(-0.3, 0.3);
  for (int trial = 0; trial < 200; ++trial) {
    BoardState s = reset(g, TaskSpec::full(), rng());
    s.ball_vel = {vel(rng), vel(rng)};
    for (int i = 0; i < 20; ++i) {
      const auto r = step(g, s, Action::Noop, TaskSpec::full());
      CHECK(r.state.ball_vel.norm() <= s.ball_vel.norm());
      s = r.state;
    }
  }
}

TEST_CASE("mirroring across the x axis mirrors the trajectory exactly") {
  const auto cfg = GeometryConfig::defaults();
  const auto g = MazeGeometry::build(cfg);
  const auto gm = MazeGeometry::build(mirror(cfg));
  const auto task = TaskSpec::full();
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    std::mt19937_64 rng(seed + 100);
    BoardState s = reset(g, task, seed);
    BoardState m = mirror(s);
    for (int i = 0; i < 300; ++i) {
      const Action a = random_action(rng);
      const auto rs = step(g, s, a, task);
      const auto rm = step(gm, m, mirror_action(a), task);
      REQUIRE(rm.state == mirror(rs.state));
      CHECK(rm.reward == rs.reward);
      s = rs.state;
      m = rm.state;
    }
  }
}

TEST_CASE("FULL rewards telescope to the ring index change") {
  const auto g = default_geometry();
  const auto task = TaskSpec::full();
  std::mt19937_64 rng(5);
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    BoardState s = reset(g, task, seed);
    const int start = ring_index(g, s);
    double total = 0;
    for (int i = 0; i < 500; ++i) {
      const auto r = step(g, s, random_action(rng), task);
      total += r.reward;
      s = r.state;
      if (r.events.terminal) break;
    }
    CHECK(total == ring_index(g, s) - start);
  }
}

TEST_CASE("radial distance and ring index") {
  const auto g = default_geometry();
  CHECK(radial_distance(at(0, 0)) == 0.0);
  CHECK(radial_distance(at(0.03, 0.04)) == doctest::Approx(0.05).epsilon(1e-15));
  CHECK(g.ring_index({0, 0}) == g.wall_count() + 1);
  CHECK(g.ring_index({0.09, 0}) == 1);
  CHECK(g.ring_index({0.08, 0}) == 2);
}

TEST_CASE("geodesic distance") {
  const auto g = default_geometry();
  const GeodesicField field(g);
  CHECK(field.distance({0, 0}) == 0.0);

  SUBCASE("dominates the straight-line lower bound") {
    std::mt19937_64 rng(1);
    std::uniform_real_distribution<double> coord(-0.1, 0.1);
    int sampled = 0;
    while (sampled < 500) {
      const Vec2 p{coord(rng), coord(rng)};
      if (g.penetration(p) > 0) continue;
      ++sampled;
      CHECK(field.distance(p) >= p.norm() - g.center_goal_radius() - 1e-12);
    }
  }

  SUBCASE("gate side is closer than the far side of the same ring") {
    // Ring 2 lies between walls 1 and 2; wall 2 has gates at 90 and 270 degrees.
    const double rho = 0.5 * (g.walls()[0].radius + g.walls()[1].radius);
    const double near = field.distance({0.0, rho});
    const double far_ = field.distance({rho * std::cos(0.0), rho * std::sin(0.0)});
    CHECK(near < far_);
    // Brute-force oracle: the near point reaches the gate radially, the far
    // point must first travel a quarter turn along the ring.
    CHECK(far_ - near > 0.5 * rho * (M_PI / 2 - 36 * kDegree));
  }

  SUBCASE("positions inside walls are rejected") {
    CHECK_THROWS_AS(field.distance({0.0, g.walls()[0].radius}), DomainError);
    CHECK_THROWS_AS(field.distance({0.2, 0.0}), DomainError);
  }
}

TEST_CASE("renderer") {
  const auto g = default_geometry();
  const Renderer renderer(g, 64, 64);
  const auto s = reset(g, TaskSpec::full(), 4);
  const auto a = renderer.render(s);
  CHECK(a.image == renderer.render(s).image);
  CHECK(a.image.size() == 64u * 64u);
  for (double v : a.image) CHECK((v == 0.0 || v == 0.5 || v == 1.0));

  // Ball disc pixels are exactly 1.
  const double px = 2 * g.board_radius() / 64;
  double sum = 0;
  int n = 0;
  for (int i = 0; i < 64; ++i)
    for (int j = 0; j < 64; ++j) {
      const Vec2 c{-g.board_radius() + (j + 0.5) * px, g.board_radius() - (i + 0.5) * px};
      if ((c - s.ball_pos).norm() <= g.ball_radius()) {
        sum += a.image[static_cast<std::size_t>(i) * 64 + j];
        ++n;
      }
    }
  REQUIRE(n > 0);
  CHECK(sum / n == 1.0);

  // Moving the ball only changes pixels inside the two ball boxes.
  BoardState moved = s;
  moved.ball_pos = reset(g, TaskSpec::full(), 40).ball_pos;
  moved.tilt = {0.05, -0.03};
  const auto b = renderer.render(moved);
  const auto box_a = renderer.ball_box(s.ball_pos);
  const auto box_b = renderer.ball_box(moved.ball_pos);
  auto inside = [](const std::array<int, 4>& box, int i, int j) {
    return i >= box[0] && i < box[1] && j >= box[2] && j < box[3];
  };
  int diffs = 0;
  for (int i = 0; i < 64; ++i)
    for (int j = 0; j < 64; ++j) {
      const auto k = static_cast<std::size_t>(i) * 64 + j;
      if (a.image[k] != b.image[k]) {
        ++diffs;
        CHECK((inside(box_a, i, j) || inside(box_b, i, j)));
      }
    }
  CHECK(diffs > 0);
}

TEST_CASE("state vector is normalized") {
  const auto g = default_geometry();
  BoardState s = reset(g, TaskSpec::full(), 2);
  s.tilt = {5 * kDegree, -2 * kDegree};
  s.ball_vel = {3.0, -0.5};
  const auto v = state_vector(g, s);
  for (double x : v) CHECK(std::abs(x) <= 1.0);
  CHECK(v[4] == doctest::Approx(1.0));
  CHECK(v[2] == 1.0);
}
