#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "minidrive/geometry.hpp"

namespace minidrive {

enum class TurnDir { left, right };

struct TurnSegment {
  double start_s = 0.0;
  double end_s = 0.0;
  TurnDir dir = TurnDir::left;
};

struct TrackQueryResult {
  double s = 0.0;               // arc-length coordinate, [0, total_length)
  double lateral_offset = 0.0;  // signed meters, positive = left of centerline
  double heading = 0.0;         // centerline heading at s
};

enum class WallSide { none, inside, outside };

struct CollisionInfo {
  bool hit = false;
  WallSide wall = WallSide::none;     // relative to the nearest turn
  bool offset_left = false;           // raw side of the centerline
  TurnDir nearest_turn_dir = TurnDir::left;
  double distance_to_turn = 0.0;      // wrapped arc distance to the nearest turn segment, 0 if inside one
};

struct TrackGenParams {
  double target_length = 17.0;
  double half_width = 0.375;
  int left_turns = 5;
  int right_turns = 1;
  // Floor for centerline turn radii. Default is the stock vehicle's minimum
  // turning radius (0.26 / tan 0.45) times a 1.15 drivable margin.
  double min_turn_radius = 0.62;
  double max_turn_radius = 0.72;
  double min_straight = 0.30;
  double vertex_spacing = 0.04;       // <= 5 cm
  double curvature_threshold = 0.5;   // 1/m, labels a segment as a turn
  double min_clearance = 0.90;        // between non-adjacent sections
  int max_attempts = 400;
};

// Closed 2D test track: centerline polyline (first vertex repeated at the
// end), constant half-width walls, arc-length lookup, and turn labels.
// Immutable after construction; safe to share across threads.
class Track {
 public:
  Track() = default;  // empty; fill via from_parts/from_text/generate
  static Track from_parts(std::vector<Vec2> closed_centerline, double half_width,
                          std::vector<TurnSegment> turns);

  const std::vector<Vec2>& centerline() const { return pts_; }
  double half_width() const { return half_width_; }
  double total_length() const { return arc_table_.back(); }
  const std::vector<double>& arc_length_table() const { return arc_table_; }
  const std::vector<TurnSegment>& turn_segments() const { return turns_; }

  TrackQueryResult locate(Vec2 p) const;
  // hit iff |lateral_offset| >= half_width - margin; margin folds the
  // vehicle's half-width into the test.
  CollisionInfo collides(Vec2 p, double margin = 0.0) const;
  CollisionInfo classify(const TrackQueryResult& q, double margin = 0.0) const;

  // Forward progress from prev_s to new_s with wraparound; second member is
  // true when the start line was crossed in the forward direction.
  std::pair<double, bool> lap_progress(double prev_s, double new_s) const;

  Vec2 point_at(double s) const;
  double heading_at(double s) const;
  // Signed discrete curvature (left positive), Menger circle over +-h.
  double curvature_at(double s, double h = 0.10) const;

  double wrap_s(double s) const;

  // `trackfmt v1` text form: header, width line, one "x y" per line with 9
  // significant digits; the closing vertex is implicit.
  std::string to_text() const;
  static Track from_text(std::string_view text);
  std::uint64_t content_hash() const;

  // Internal: nearest centerline segment index for p, searching all segments.
  std::size_t nearest_segment(Vec2 p, double* t_out = nullptr) const;
  std::size_t segment_count() const { return pts_.size() - 1; }

 private:
  std::vector<Vec2> pts_;        // closed: front() == back()
  std::vector<double> arc_table_;
  std::vector<TurnSegment> turns_;
  double half_width_ = 0.0;
};

// Stateful nearest-point queries with temporal coherence: reuses the last
// matched segment and searches a window around it, falling back to a global
// search when the point moved far. One locator per simulation loop.
class TrackLocator {
 public:
  explicit TrackLocator(const Track& track) : track_(&track) {}
  TrackQueryResult locate(Vec2 p);
  void reset() { have_hint_ = false; }

 private:
  const Track* track_;
  std::size_t hint_ = 0;
  bool have_hint_ = false;
};

// Random closed track in the style of the reference course: target length,
// five left turns plus one right, driven counterclockwise. Deterministic in
// the seed. Throws if no valid geometry is found within bounded retries.
Track generate_default_track(std::uint64_t seed, const TrackGenParams& params = {});

// Two straights joined by half-circle ends; handy for tests and benchmarks.
Track make_stadium_track(double straight_len, double corner_radius, double half_width,
                         double vertex_spacing = 0.04);

}  // namespace minidrive
