#include <doctest.h>

#include <cmath>

#include "minidrive/sensing.hpp"
#include "minidrive/track.hpp"

using namespace minidrive;

namespace {
SensorConfig quiet_config() {
  SensorConfig c;
  c.noise_sigma = 0.0;
  return c;
}
}  // namespace

TEST_CASE("perpendicular rays on a straight corridor return the half width") {
  const Track t = make_stadium_track(8.0, 1.5, 0.375);
  const WallGeometry walls(t);
  // Middle of a long straight; 180 degree fan puts rays exactly at +-90.
  SensorConfig c = quiet_config();
  c.fov = 3.14159265358979323846;
  c.ray_count = 5;
  const Vec2 pos = t.point_at(4.0);
  const double heading = t.heading_at(4.0);
  const auto rays = capture(walls, pos, heading, c, nullptr);
  REQUIRE(rays.size() == 5);
  CHECK(std::fabs(rays.front() - 0.375) / 0.375 < 0.02);  // -90 deg
  CHECK(std::fabs(rays.back() - 0.375) / 0.375 < 0.02);   // +90 deg
}

TEST_CASE("rays with no wall in range return max_range exactly") {
  const Track t = make_stadium_track(9.0, 1.5, 0.375);
  const WallGeometry walls(t);
  SensorConfig c = quiet_config();
  const Vec2 pos = t.point_at(1.0);
  const double heading = t.heading_at(1.0);
  const auto rays = capture(walls, pos, heading, c, nullptr);
  // The forward ray looks down an 9 m corridor: nothing within 3 m.
  CHECK(rays[static_cast<std::size_t>(c.ray_count / 2)] == c.max_range);
}

TEST_CASE("capture is deterministic in the rng seed and pose-only") {
  const Track t = generate_default_track(0);
  const WallGeometry walls(t);
  SensorConfig c;
  c.noise_sigma = 0.02;
  const Vec2 pos = t.point_at(2.5);
  const double heading = t.heading_at(2.5);

  Rng r1(42), r2(42), r3(43);
  const auto a = capture(walls, pos, heading, c, &r1);
  const auto b = capture(walls, pos, heading, c, &r2);
  const auto d = capture(walls, pos, heading, c, &r3);
  CHECK(a == b);
  CHECK(a != d);

  // Same pose at different speeds: identical frames by construction (the
  // API takes no speed at all). Exercise through SensorRig with blur off.
  SensorRig rig_a(t, quiet_config());
  SensorRig rig_b(t, quiet_config());
  const Frame& fa = rig_a.capture_now(pos, heading, 0.7, 0.0, nullptr);
  const Frame& fb = rig_b.capture_now(pos, heading, 2.0, 0.0, nullptr);
  CHECK(fa.rays == fb.rays);
}

TEST_CASE("ray readings are continuous in pose away from grazing incidence") {
  const Track t = generate_default_track(0);
  const WallGeometry walls(t);
  SensorConfig c = quiet_config();
  const double eps = 1e-4;
  int checked = 0;
  for (double s = 0.3; s < t.total_length(); s += 1.7) {
    const Vec2 pos = t.point_at(s);
    const double heading = t.heading_at(s);
    const auto base = capture(walls, pos, heading, c, nullptr);
    const auto dx = capture(walls, pos + Vec2{eps, 0.0}, heading, c, nullptr);
    for (int i = 0; i < c.ray_count; ++i) {
      const double angle = heading - 0.5 * c.fov + c.fov * i / (c.ray_count - 1);
      const RayHit hit = walls.raycast(pos, unit_from_angle(angle), c.max_range);
      if (!hit.hit_wall) continue;
      // Skip grazing rays: incidence under ~2 degrees.
      const double incidence =
          std::fabs(unit_from_angle(angle).cross(hit.wall_dir));
      if (incidence < 0.035) continue;
      CHECK(std::fabs(dx[static_cast<std::size_t>(i)] - base[static_cast<std::size_t>(i)]) < 1e-2);
      ++checked;
    }
  }
  CHECK(checked > 100);
}

TEST_CASE("grid raycaster agrees with brute force through the public query") {
  const Track t = generate_default_track(5);
  const WallGeometry walls(t);
  Rng rng(7);
  for (int i = 0; i < 300; ++i) {
    const double s = rng.uniform(0.0, t.total_length());
    const Vec2 pos = t.point_at(s) + unit_from_angle(t.heading_at(s)).perp() *
                                         rng.uniform(-0.3, 0.3);
    const double angle = rng.uniform(-3.14159, 3.14159);
    const RayHit hit = walls.raycast(pos, unit_from_angle(angle), 3.0);
    // Brute force: test against every wall segment via a fresh geometry
    // with a huge cell (single-bucket grid would defeat the purpose, so
    // walk the public API of a locally built reference).
    RayHit ref;
    ref.distance = 3.0;
    const Vec2 dir = unit_from_angle(angle);
    // Rebuild the wall segments the same way WallGeometry does.
    const auto& pts = t.centerline();
    const std::size_t n = pts.size() - 1;
    for (int side = -1; side <= 1; side += 2) {
      for (std::size_t k = 0; k < n; ++k) {
        const auto normal_at = [&](std::size_t idx) {
          const Vec2 prev = pts[(idx + n - 1) % n];
          const Vec2 next = pts[(idx + 1) % n];
          return ((next - prev).normalized()).perp();
        };
        const Vec2 a = pts[k] + normal_at(k) * (side * t.half_width());
        const Vec2 b = pts[(k + 1) % n] + normal_at((k + 1) % n) * (side * t.half_width());
        const auto hit_t = ray_segment_intersection(pos, dir, a, b);
        if (hit_t && *hit_t < ref.distance) {
          ref.distance = *hit_t;
          ref.hit_wall = true;
        }
      }
    }
    CHECK(hit.distance == doctest::Approx(ref.distance).epsilon(1e-9));
  }
}

TEST_CASE("stack_frames windows the newest frames with 20 Hz spacing") {
  SensorConfig c;
  c.stack_size = 3;
  std::deque<Frame> buf;
  for (int i = 1; i <= 5; ++i) {
    buf.push_back(Frame{{double(i)}, i * 0.05});
  }
  const auto obs = stack_frames(buf, c);
  REQUIRE(obs.has_value());
  REQUIRE(obs->frames.size() == 3);
  CHECK(obs->frames[0][0] == 3.0);
  CHECK(obs->frames[1][0] == 4.0);
  CHECK(obs->frames[2][0] == 5.0);
  CHECK(obs->capture_times[1] - obs->capture_times[0] == doctest::Approx(0.05));
  CHECK(obs->capture_times[2] - obs->capture_times[1] == doctest::Approx(0.05));

  // stack_size 1 is just the newest frame.
  SensorConfig c1;
  c1.stack_size = 1;
  const auto one = stack_frames(buf, c1);
  REQUIRE(one.has_value());
  CHECK(one->frames.size() == 1);
  CHECK(one->frames[0][0] == 5.0);

  // Not ready: too few frames.
  std::deque<Frame> small{Frame{{1.0}, 0.0}, Frame{{2.0}, 0.05}};
  CHECK_FALSE(stack_frames(small, c).has_value());

  // Gap in the buffer: not a valid stack.
  std::deque<Frame> gap{Frame{{1.0}, 0.0}, Frame{{2.0}, 0.05}, Frame{{3.0}, 0.20}};
  CHECK_FALSE(stack_frames(gap, c).has_value());

  // Flatten is oldest-first concatenation.
  CHECK(obs->flatten() == std::vector<double>{3.0, 4.0, 5.0});
}

TEST_CASE("rasterizer marks wall hits in the occupancy grid") {
  SensorConfig c = quiet_config();
  std::vector<double> rays(static_cast<std::size_t>(c.ray_count), 1.0);
  const auto grid = rasterize_frame(rays, c);
  REQUIRE(grid.size() == 32u * 16u);
  int marked = 0;
  for (const auto v : grid) marked += v;
  CHECK(marked > 0);

  // All rays at max range: nothing to draw.
  std::vector<double> clear_rays(static_cast<std::size_t>(c.ray_count), c.max_range);
  const auto empty = rasterize_frame(clear_rays, c);
  int none = 0;
  for (const auto v : empty) none += v;
  CHECK(none == 0);
}

TEST_CASE("motion blur mixes toward the previous frame when enabled") {
  const Track t = generate_default_track(0);
  SensorConfig c = quiet_config();
  c.motion_blur = true;
  c.blur_per_speed = 0.3;
  SensorRig rig(t, c);
  const Vec2 p1 = t.point_at(1.0);
  const Vec2 p2 = t.point_at(1.3);
  rig.capture_now(p1, t.heading_at(1.0), 2.0, 0.0, nullptr);
  const Frame blurred = rig.capture_now(p2, t.heading_at(1.3), 2.0, 0.05, nullptr);

  SensorRig rig_off(t, quiet_config());
  rig_off.capture_now(p1, t.heading_at(1.0), 2.0, 0.0, nullptr);
  const Frame crisp = rig_off.capture_now(p2, t.heading_at(1.3), 2.0, 0.05, nullptr);
  CHECK(blurred.rays != crisp.rays);
}
