#include <doctest.h>

#include <cmath>
#include <cstring>

#include "minidrive/rng.hpp"
#include "minidrive/track.hpp"
#include "minidrive/vehicle.hpp"

using namespace minidrive;

TEST_CASE("default track matches the course parameters") {
  const Track t = generate_default_track(0);
  CHECK(t.total_length() >= 16.9);
  CHECK(t.total_length() <= 17.1);
  CHECK(t.half_width() == doctest::Approx(0.375));

  int lefts = 0, rights = 0;
  for (const auto& seg : t.turn_segments()) {
    (seg.dir == TurnDir::left ? lefts : rights)++;
  }
  CHECK(lefts == 5);
  CHECK(rights == 1);

  // Vertex spacing stays under 5 cm.
  const auto& pts = t.centerline();
  for (std::size_t i = 1; i < pts.size(); ++i) {
    CHECK((pts[i] - pts[i - 1]).norm() <= 0.05 + 1e-9);
  }

  // Arc table strictly increasing, closed polyline.
  const auto& table = t.arc_length_table();
  for (std::size_t i = 1; i < table.size(); ++i) CHECK(table[i] > table[i - 1]);
  CHECK((pts.front() - pts.back()).norm() <= 1e-9);
}

TEST_CASE("generation is deterministic and turn counts hold across seeds") {
  const Track a = generate_default_track(0);
  const Track b = generate_default_track(0);
  REQUIRE(a.centerline().size() == b.centerline().size());
  CHECK(std::memcmp(a.centerline().data(), b.centerline().data(),
                    a.centerline().size() * sizeof(Vec2)) == 0);
  CHECK(a.to_text() == b.to_text());

  for (std::uint64_t seed : {1ull, 2ull, 3ull, 4ull, 5ull, 6ull, 7ull}) {
    const Track t = generate_default_track(seed);
    int lefts = 0, rights = 0;
    for (const auto& seg : t.turn_segments()) {
      (seg.dir == TurnDir::left ? lefts : rights)++;
    }
    CHECK(lefts == 5);
    CHECK(rights == 1);
    CHECK(std::fabs(t.total_length() - 17.0) <= 0.1);
  }
}

TEST_CASE("turn radii respect the drivable margin") {
  const Track t = generate_default_track(0);
  const double r_min = min_turning_radius(VehicleParams{});
  // Sample curvature inside each turn segment, away from the blend points.
  for (const auto& seg : t.turn_segments()) {
    const double mid = 0.5 * (seg.start_s + seg.end_s);
    const double kappa = std::fabs(t.curvature_at(mid));
    CHECK(kappa <= 1.0 / (1.15 * r_min) + 1e-6);
    CHECK(kappa >= 0.5);  // labeled as a turn
  }
}

TEST_CASE("locate: on-curve, offset, and vertex cases") {
  const Track t = generate_default_track(0);

  // Point exactly on the centerline.
  const Vec2 on = t.point_at(3.21);
  CHECK(std::fabs(t.locate(on).lateral_offset) <= 1e-9);

  // Start vertex.
  const TrackQueryResult q0 = t.locate(t.centerline().front());
  CHECK(q0.s == doctest::Approx(0.0).epsilon(1e-6));

  // 0.2 m left of the centerline on a straight: find a straight stretch by
  // low curvature, then offset along the left normal.
  double s_straight = -1.0;
  for (double s = 0.0; s < t.total_length(); s += 0.1) {
    if (std::fabs(t.curvature_at(s)) < 1e-3 && std::fabs(t.curvature_at(s + 0.3)) < 1e-3 &&
        std::fabs(t.curvature_at(s - 0.3)) < 1e-3) {
      s_straight = s;
      break;
    }
  }
  REQUIRE(s_straight >= 0.0);
  const Vec2 base = t.point_at(s_straight);
  const Vec2 normal = unit_from_angle(t.heading_at(s_straight)).perp();
  const TrackQueryResult q = t.locate(base + normal * 0.2);
  CHECK(q.lateral_offset == doctest::Approx(0.2).epsilon(1e-6));
}

TEST_CASE("locate offset magnitude equals polyline distance (property)") {
  const Track t = generate_default_track(1);
  Rng rng(99);
  for (int i = 0; i < 200; ++i) {
    const double s = rng.uniform(0.0, t.total_length());
    const double off = rng.uniform(-1.0, 1.0);
    const Vec2 p = t.point_at(s) + unit_from_angle(t.heading_at(s)).perp() * off +
                   Vec2{rng.uniform(-0.3, 0.3), rng.uniform(-0.3, 0.3)};
    // Brute-force distance to every segment.
    double best = 1e300;
    const auto& pts = t.centerline();
    for (std::size_t k = 0; k + 1 < pts.size(); ++k) {
      best = std::fmin(best, point_segment_distance(p, pts[k], pts[k + 1]));
    }
    CHECK(std::fabs(t.locate(p).lateral_offset) == doctest::Approx(best).epsilon(1e-6));
  }
}

TEST_CASE("cursor locator agrees with the global query along a path") {
  const Track t = generate_default_track(2);
  TrackLocator cursor(t);
  for (double s = 0.0; s < 2.0 * t.total_length(); s += 0.07) {
    const Vec2 p = t.point_at(s) + unit_from_angle(t.heading_at(s)).perp() *
                                       (0.2 * std::sin(s * 1.7));
    const TrackQueryResult a = cursor.locate(p);
    const TrackQueryResult b = t.locate(p);
    CHECK(a.s == doctest::Approx(b.s).epsilon(1e-9));
    CHECK(a.lateral_offset == doctest::Approx(b.lateral_offset).epsilon(1e-9));
  }
}

TEST_CASE("collides: threshold and wall side classification") {
  const Track t = generate_default_track(0);
  const double hw = t.half_width();

  // Find a left turn segment.
  const TurnSegment* left = nullptr;
  for (const auto& seg : t.turn_segments()) {
    if (seg.dir == TurnDir::left) {
      left = &seg;
      break;
    }
  }
  REQUIRE(left != nullptr);
  const double s = 0.5 * (left->start_s + left->end_s);
  const Vec2 base = t.point_at(s);
  const Vec2 normal = unit_from_angle(t.heading_at(s)).perp();

  CHECK_FALSE(t.collides(base).hit);  // offset 0

  const CollisionInfo in_hit = t.collides(base + normal * (hw + 0.01));
  CHECK(in_hit.hit);
  CHECK(in_hit.wall == WallSide::inside);  // left of centerline in a left turn

  const CollisionInfo out_hit = t.collides(base + normal * -(hw + 0.01));
  CHECK(out_hit.hit);
  CHECK(out_hit.wall == WallSide::outside);

  // Monotone in |offset|: anything farther out on the same normal also hits.
  CHECK(t.collides(base + normal * (hw + 0.2)).hit);
  // Margin folds the body half-width into the test.
  CHECK(t.collides(base + normal * (hw - 0.05), 0.1).hit);
  CHECK_FALSE(t.collides(base + normal * (hw - 0.05), 0.0).hit);
}

TEST_CASE("lap_progress: wraparound arithmetic") {
  std::vector<Vec2> sq;
  const Track t = make_stadium_track(5.0, 1.0, 0.375);
  const double total = t.total_length();

  // Scaled analogues of the 17 m cases.
  const auto near_end = total - 0.1;
  auto r = t.lap_progress(near_end, 0.2);
  CHECK(r.first == doctest::Approx(0.3));
  CHECK(r.second);

  r = t.lap_progress(5.0, 5.0);
  CHECK(r.first == doctest::Approx(0.0));
  CHECK_FALSE(r.second);

  r = t.lap_progress(5.0, 4.8);
  CHECK(r.first == doctest::Approx(-0.2));
  CHECK_FALSE(r.second);

  // Backward across the start line is not a lap.
  r = t.lap_progress(0.1, total - 0.2);
  CHECK(r.first == doctest::Approx(-0.3));
  CHECK_FALSE(r.second);
}

TEST_CASE("lap_progress sums to laps x length over a simulated loop (property)") {
  const Track t = generate_default_track(3);
  double acc = 0.0;
  double prev = 0.0;
  int laps = 0;
  for (double s = 0.0; s <= 3.0 * t.total_length(); s += 0.05) {
    const double w = t.wrap_s(s);
    const auto [d, lap] = t.lap_progress(prev, w);
    acc += d;
    laps += lap ? 1 : 0;
    prev = w;
  }
  CHECK(laps == 3);
  CHECK(acc == doctest::Approx(3.0 * t.total_length()).epsilon(1e-3));
}

TEST_CASE("trackfmt round trip and content hash") {
  const Track a = generate_default_track(4);
  const std::string text = a.to_text();
  const Track b = Track::from_text(text);
  REQUIRE(a.centerline().size() == b.centerline().size());
  for (std::size_t i = 0; i < a.centerline().size(); ++i) {
    CHECK((a.centerline()[i] - b.centerline()[i]).norm() <= 1e-7);
  }
  CHECK(a.half_width() == doctest::Approx(b.half_width()));
  CHECK(a.content_hash() == b.content_hash());
  CHECK(a.turn_segments().size() == b.turn_segments().size());

  CHECK_THROWS(Track::from_text("not a track"));
  CHECK_THROWS(Track::from_text("trackfmt v1\nwidth 0.75\n0 0\n1 nonsense\n"));
}

TEST_CASE("from_parts validates geometry") {
  // Not closed.
  CHECK_THROWS(Track::from_parts({{0, 0}, {1, 0}, {1, 1}, {0, 2}}, 0.375, {}));
  // Self-intersecting bow tie.
  CHECK_THROWS(Track::from_parts({{0, 0}, {1, 1}, {1, 0}, {0, 1}, {0, 0}}, 0.375, {}));
  // Bad half width.
  CHECK_THROWS(Track::from_parts({{0, 0}, {1, 0}, {1, 1}, {0, 1}, {0, 0}}, 0.0, {}));
  // Overlapping explicit turns.
  CHECK_THROWS(Track::from_parts({{0, 0}, {1, 0}, {1, 1}, {0, 1}, {0, 0}}, 0.3,
                                 {{0.0, 2.0, TurnDir::left}, {1.0, 3.0, TurnDir::left}}));
}
