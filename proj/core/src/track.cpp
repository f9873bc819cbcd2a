#include "minidrive/track.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <limits>
#include <sstream>
#include <stdexcept>

#include "minidrive/hash.hpp"
#include "minidrive/rng.hpp"

namespace minidrive {

namespace {

constexpr double kPi = 3.14159265358979323846;
constexpr double kTwoPi = 2.0 * kPi;

double deg2rad(double d) { return d * kPi / 180.0; }

// Signed per-vertex curvature of a closed polyline: turning angle at the
// vertex divided by the mean length of the two incident segments.
std::vector<double> vertex_curvature(const std::vector<Vec2>& pts) {
  const std::size_t n = pts.size() - 1;  // unique vertices
  std::vector<double> kappa(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    const Vec2 prev = pts[(i + n - 1) % n];
    const Vec2 cur = pts[i];
    const Vec2 next = pts[(i + 1) % n];
    const Vec2 e0 = cur - prev;
    const Vec2 e1 = next - cur;
    const double l0 = e0.norm();
    const double l1 = e1.norm();
    if (l0 < 1e-12 || l1 < 1e-12) continue;
    const double turn = wrap_angle(std::atan2(e1.y, e1.x) - std::atan2(e0.y, e0.x));
    kappa[i] = turn / (0.5 * (l0 + l1));
  }
  return kappa;
}

// Groups vertices whose |curvature| exceeds the threshold into maximal
// same-direction runs, dropping sub-15cm slivers.
std::vector<TurnSegment> label_turns(const std::vector<Vec2>& pts,
                                     const std::vector<double>& arc_table,
                                     double threshold) {
  const std::size_t n = pts.size() - 1;
  const std::vector<double> kappa = vertex_curvature(pts);
  std::vector<int> sign(n, 0);
  for (std::size_t i = 0; i < n; ++i) {
    if (kappa[i] >= threshold) sign[i] = 1;
    else if (kappa[i] <= -threshold) sign[i] = -1;
  }
  // Find runs on the circular index space; start from a straight vertex so
  // runs never split across the seam.
  std::size_t start = 0;
  while (start < n && sign[start] != 0) ++start;
  if (start == n) {
    // Everything is turning (e.g. a circle); single segment.
    return {TurnSegment{0.0, arc_table.back(), kappa[0] > 0 ? TurnDir::left : TurnDir::right}};
  }
  std::vector<TurnSegment> turns;
  const double total = arc_table.back();
  std::size_t i = 0;
  while (i < n) {
    const std::size_t idx = (start + i) % n;
    if (sign[idx] == 0) { ++i; continue; }
    const int dir = sign[idx];
    std::size_t j = i;
    while (j < n && sign[(start + j) % n] == dir) ++j;
    const std::size_t first = (start + i) % n;
    const std::size_t last = (start + j - 1) % n;
    const double s0 = arc_table[first];
    const double s1 = arc_table[last + 1];  // last + 1 <= n
    const TurnDir d = dir > 0 ? TurnDir::left : TurnDir::right;
    double span = s1 - s0;
    if (span < 0) span += total;
    if (span >= 0.15) {
      if (s1 >= s0) {
        turns.push_back(TurnSegment{s0, s1, d});
      } else {
        // Run wraps the seam; split so segments stay within [0, total).
        turns.push_back(TurnSegment{s0, total, d});
        if (s1 > 1e-9) turns.push_back(TurnSegment{0.0, s1, d});
      }
    }
    i = j;
  }
  std::sort(turns.begin(), turns.end(),
            [](const TurnSegment& x, const TurnSegment& y) { return x.start_s < y.start_s; });
  return turns;
}

double wrap_dist(double a, double b, double total) {
  double d = std::fabs(a - b);
  return std::fmin(d, total - d);
}

// Solves M s = rhs for the minimum-norm deviation from p, where M is 3 x m.
// Returns false if the 3x3 normal system is singular.
bool solve_constrained(const std::array<std::vector<double>, 3>& M,
                       const std::array<double, 3>& rhs, const std::vector<double>& p,
                       std::vector<double>& s_out) {
  const std::size_t m = p.size();
  // G = M M^T (3x3), r = rhs - M p.
  double G[3][3];
  double r[3];
  for (int a = 0; a < 3; ++a) {
    r[a] = rhs[a];
    for (std::size_t i = 0; i < m; ++i) r[a] -= M[a][i] * p[i];
    for (int b = 0; b < 3; ++b) {
      double acc = 0.0;
      for (std::size_t i = 0; i < m; ++i) acc += M[a][i] * M[b][i];
      G[a][b] = acc;
    }
  }
  // Gaussian elimination with partial pivoting on the 3x3 system.
  int piv[3] = {0, 1, 2};
  double lam[3] = {r[0], r[1], r[2]};
  for (int c = 0; c < 3; ++c) {
    int best = c;
    for (int row = c + 1; row < 3; ++row)
      if (std::fabs(G[piv[row]][c]) > std::fabs(G[piv[best]][c])) best = row;
    std::swap(piv[c], piv[best]);
    const double d = G[piv[c]][c];
    if (std::fabs(d) < 1e-12) return false;
    for (int row = c + 1; row < 3; ++row) {
      const double f = G[piv[row]][c] / d;
      for (int col = c; col < 3; ++col) G[piv[row]][col] -= f * G[piv[c]][col];
      lam[piv[row]] -= f * lam[piv[c]];
    }
  }
  double x[3];
  for (int c = 2; c >= 0; --c) {
    double acc = lam[piv[c]];
    for (int col = c + 1; col < 3; ++col) acc -= G[piv[c]][col] * x[col];
    x[c] = acc / G[piv[c]][c];
  }
  s_out.assign(m, 0.0);
  for (std::size_t i = 0; i < m; ++i) {
    s_out[i] = p[i];
    for (int a = 0; a < 3; ++a) s_out[i] += M[a][i] * x[a];
  }
  return true;
}

struct PolylineBuilder {
  std::vector<Vec2> pts;
  Vec2 pos{0.0, 0.0};
  double heading = 0.0;
  double spacing = 0.04;

  void start() { pts.push_back(pos); }

  void straight(double len) {
    const int n = std::max(1, static_cast<int>(std::ceil(len / spacing)));
    const Vec2 dir = unit_from_angle(heading);
    const Vec2 base = pos;
    for (int k = 1; k <= n; ++k) {
      pos = base + dir * (len * k / n);
      pts.push_back(pos);
    }
  }

  void arc(double radius, double angle) {
    // angle > 0 turns left.
    const double side = angle > 0 ? 1.0 : -1.0;
    const Vec2 center = pos + unit_from_angle(heading).perp() * (radius * side);
    const double phi0 = std::atan2(pos.y - center.y, pos.x - center.x);
    const double alen = radius * std::fabs(angle);
    const int n = std::max(2, static_cast<int>(std::ceil(alen / spacing)));
    for (int k = 1; k <= n; ++k) {
      const double phi = phi0 + angle * k / n;
      pos = center + Vec2{std::cos(phi), std::sin(phi)} * radius;
      pts.push_back(pos);
    }
    heading = wrap_angle(heading + angle);
  }
};

}  // namespace

Track Track::from_parts(std::vector<Vec2> closed_centerline, double half_width,
                        std::vector<TurnSegment> turns) {
  if (closed_centerline.size() < 4) throw std::invalid_argument("track: too few vertices");
  if (!(half_width > 0.0)) throw std::invalid_argument("track: half_width must be positive");
  const Vec2 gap = closed_centerline.front() - closed_centerline.back();
  if (gap.norm() > 1e-9) throw std::invalid_argument("track: polyline is not closed");
  closed_centerline.back() = closed_centerline.front();

  Track t;
  t.pts_ = std::move(closed_centerline);
  t.half_width_ = half_width;
  t.arc_table_.resize(t.pts_.size());
  t.arc_table_[0] = 0.0;
  for (std::size_t i = 1; i < t.pts_.size(); ++i) {
    const double len = (t.pts_[i] - t.pts_[i - 1]).norm();
    if (len <= 0.0) throw std::invalid_argument("track: degenerate segment");
    t.arc_table_[i] = t.arc_table_[i - 1] + len;
  }
  if (!(t.arc_table_.back() > 0.0)) throw std::invalid_argument("track: zero length");

  // Self-intersection: non-adjacent segment pairs must not cross.
  const std::size_t ns = t.segment_count();
  for (std::size_t i = 0; i + 1 < ns; ++i) {
    for (std::size_t j = i + 2; j < ns; ++j) {
      if (i == 0 && j == ns - 1) continue;  // adjacent across the seam
      if (segments_intersect(t.pts_[i], t.pts_[i + 1], t.pts_[j], t.pts_[j + 1])) {
        throw std::invalid_argument("track: centerline self-intersects");
      }
    }
  }

  if (turns.empty()) {
    t.turns_ = label_turns(t.pts_, t.arc_table_, TrackGenParams{}.curvature_threshold);
  } else {
    const double total = t.arc_table_.back();
    for (const auto& seg : turns) {
      if (seg.start_s < 0.0 || seg.start_s >= total || seg.end_s <= seg.start_s ||
          seg.end_s > total) {
        throw std::invalid_argument("track: turn segment out of range");
      }
    }
    std::sort(turns.begin(), turns.end(),
              [](const TurnSegment& a, const TurnSegment& b) { return a.start_s < b.start_s; });
    for (std::size_t i = 1; i < turns.size(); ++i) {
      if (turns[i].start_s < turns[i - 1].end_s) {
        throw std::invalid_argument("track: turn segments overlap");
      }
    }
    t.turns_ = std::move(turns);
  }
  return t;
}

std::size_t Track::nearest_segment(Vec2 p, double* t_out) const {
  double best = std::numeric_limits<double>::infinity();
  std::size_t best_i = 0;
  double best_t = 0.0;
  for (std::size_t i = 0; i < segment_count(); ++i) {
    double tt;
    const double d = point_segment_distance(p, pts_[i], pts_[i + 1], &tt);
    if (d < best) {
      best = d;
      best_i = i;
      best_t = tt;
    }
  }
  if (t_out) *t_out = best_t;
  return best_i;
}

namespace {
TrackQueryResult query_from_segment(const Track& tr, const std::vector<Vec2>& pts,
                                    const std::vector<double>& table, std::size_t i, double t,
                                    Vec2 p) {
  const Vec2 a = pts[i];
  const Vec2 b = pts[i + 1];
  const Vec2 dir = (b - a).normalized();
  const Vec2 foot = a + (b - a) * t;
  const double dist = (p - foot).norm();
  const double side = dir.cross(p - foot) >= 0.0 ? 1.0 : -1.0;
  TrackQueryResult q;
  q.s = table[i] + (table[i + 1] - table[i]) * t;
  if (q.s >= tr.total_length()) q.s = 0.0;
  q.lateral_offset = side * dist;
  q.heading = std::atan2(dir.y, dir.x);
  return q;
}
}  // namespace

TrackQueryResult Track::locate(Vec2 p) const {
  double t;
  const std::size_t i = nearest_segment(p, &t);
  return query_from_segment(*this, pts_, arc_table_, i, t, p);
}

TrackQueryResult TrackLocator::locate(Vec2 p) {
  const Track& tr = *track_;
  const std::size_t ns = tr.segment_count();
  // Window of ~1.2 m around the previous match.
  const std::size_t window = 30;
  if (have_hint_ && ns > 2 * window + 1) {
    double best = std::numeric_limits<double>::infinity();
    std::size_t best_i = 0;
    double best_t = 0.0;
    for (std::size_t k = 0; k <= 2 * window; ++k) {
      const std::size_t i = (hint_ + ns - window + k) % ns;
      double tt;
      const double d = point_segment_distance(p, tr.centerline()[i], tr.centerline()[i + 1], &tt);
      if (d < best) {
        best = d;
        best_i = i;
        best_t = tt;
      }
    }
    // Trust the local match only if it is not pinned to the window edge.
    const std::size_t rel = (best_i + ns - (hint_ + ns - window) % ns) % ns;
    if (rel > 1 && rel < 2 * window - 1) {
      hint_ = best_i;
      return query_from_segment(tr, tr.centerline(), tr.arc_length_table(), best_i, best_t, p);
    }
  }
  double t;
  const std::size_t i = tr.nearest_segment(p, &t);
  hint_ = i;
  have_hint_ = true;
  return query_from_segment(tr, tr.centerline(), tr.arc_length_table(), i, t, p);
}

CollisionInfo Track::classify(const TrackQueryResult& q, double margin) const {
  CollisionInfo info;
  info.hit = std::fabs(q.lateral_offset) >= half_width_ - margin;
  info.offset_left = q.lateral_offset > 0.0;
  if (turns_.empty()) {
    info.wall = WallSide::none;
    info.distance_to_turn = std::numeric_limits<double>::infinity();
    return info;
  }
  const double total = total_length();
  double best = std::numeric_limits<double>::infinity();
  const TurnSegment* nearest = nullptr;
  for (const auto& seg : turns_) {
    double d;
    if (q.s >= seg.start_s && q.s <= seg.end_s) {
      d = 0.0;
    } else {
      d = std::fmin(wrap_dist(q.s, seg.start_s, total), wrap_dist(q.s, seg.end_s, total));
    }
    if (d < best) {
      best = d;
      nearest = &seg;
    }
  }
  info.distance_to_turn = best;
  info.nearest_turn_dir = nearest->dir;
  if (info.hit) {
    const bool toward_center = info.offset_left == (nearest->dir == TurnDir::left);
    info.wall = toward_center ? WallSide::inside : WallSide::outside;
  }
  return info;
}

CollisionInfo Track::collides(Vec2 p, double margin) const {
  return classify(locate(p), margin);
}

std::pair<double, bool> Track::lap_progress(double prev_s, double new_s) const {
  const double total = total_length();
  double d = new_s - prev_s;
  if (d > 0.5 * total) d -= total;
  if (d <= -0.5 * total) d += total;
  const bool lap = d > 0.0 && new_s < prev_s;
  return {d, lap};
}

double Track::wrap_s(double s) const {
  const double total = total_length();
  s = std::fmod(s, total);
  if (s < 0.0) s += total;
  return s;
}

Vec2 Track::point_at(double s) const {
  s = wrap_s(s);
  const auto it = std::upper_bound(arc_table_.begin(), arc_table_.end(), s);
  std::size_t i = static_cast<std::size_t>(it - arc_table_.begin());
  i = i == 0 ? 0 : i - 1;
  if (i >= segment_count()) i = segment_count() - 1;
  const double seg_len = arc_table_[i + 1] - arc_table_[i];
  const double t = seg_len > 0.0 ? (s - arc_table_[i]) / seg_len : 0.0;
  return pts_[i] + (pts_[i + 1] - pts_[i]) * t;
}

double Track::heading_at(double s) const {
  s = wrap_s(s);
  const auto it = std::upper_bound(arc_table_.begin(), arc_table_.end(), s);
  std::size_t i = static_cast<std::size_t>(it - arc_table_.begin());
  i = i == 0 ? 0 : i - 1;
  if (i >= segment_count()) i = segment_count() - 1;
  const Vec2 d = pts_[i + 1] - pts_[i];
  return std::atan2(d.y, d.x);
}

double Track::curvature_at(double s, double h) const {
  const Vec2 p1 = point_at(s - h);
  const Vec2 p2 = point_at(s);
  const Vec2 p3 = point_at(s + h);
  const Vec2 a = p2 - p1;
  const Vec2 b = p3 - p2;
  const double denom = a.norm() * b.norm() * (p3 - p1).norm();
  if (denom < 1e-15) return 0.0;
  return 2.0 * a.cross(b) / denom;
}

std::string Track::to_text() const {
  std::string out = "trackfmt v1\n";
  char buf[80];
  std::snprintf(buf, sizeof(buf), "width %.9g\n", 2.0 * half_width_);
  out += buf;
  for (std::size_t i = 0; i + 1 < pts_.size(); ++i) {
    std::snprintf(buf, sizeof(buf), "%.9g %.9g\n", pts_[i].x, pts_[i].y);
    out += buf;
  }
  return out;
}

Track Track::from_text(std::string_view text) {
  std::istringstream in{std::string(text)};
  std::string line;
  if (!std::getline(in, line) || line != "trackfmt v1") {
    throw std::runtime_error("trackfmt: bad header (expected 'trackfmt v1')");
  }
  if (!std::getline(in, line)) throw std::runtime_error("trackfmt: missing width line");
  double width = 0.0;
  if (std::sscanf(line.c_str(), "width %lf", &width) != 1 || !(width > 0.0)) {
    throw std::runtime_error("trackfmt: bad width line");
  }
  std::vector<Vec2> pts;
  int lineno = 2;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    Vec2 p;
    if (std::sscanf(line.c_str(), "%lf %lf", &p.x, &p.y) != 2) {
      throw std::runtime_error("trackfmt: parse error at line " + std::to_string(lineno));
    }
    pts.push_back(p);
  }
  if (pts.size() < 3) throw std::runtime_error("trackfmt: too few vertices");
  pts.push_back(pts.front());  // closed implicitly
  return from_parts(std::move(pts), 0.5 * width, {});
}

std::uint64_t Track::content_hash() const { return fnv1a64(to_text()); }

Track make_stadium_track(double straight_len, double corner_radius, double half_width,
                         double vertex_spacing) {
  PolylineBuilder b;
  b.spacing = vertex_spacing;
  b.start();
  b.straight(straight_len);
  b.arc(corner_radius, kPi);
  b.straight(straight_len);
  b.arc(corner_radius, kPi);
  b.pts.back() = b.pts.front();
  return Track::from_parts(std::move(b.pts), half_width, {});
}

namespace {

struct Candidate {
  std::vector<double> turn_angles;  // signed, left positive
  std::vector<double> radii;
  std::vector<double> straights;
};

bool sample_candidate(Rng& rng, const TrackGenParams& p, Candidate& c) {
  const int n_turns = p.left_turns + p.right_turns;
  if (p.right_turns != 1 || p.left_turns < 2) {
    throw std::invalid_argument("track generator: supports exactly one right turn and >=2 lefts");
  }
  const double right_angle = -deg2rad(rng.uniform(70.0, 100.0));
  std::vector<double> raw(static_cast<std::size_t>(p.left_turns));
  double raw_sum = 0.0;
  for (auto& u : raw) {
    u = rng.uniform(0.8, 1.2);
    raw_sum += u;
  }
  const double left_total = kTwoPi - right_angle;  // lefts must sum to 2pi + |right|
  c.turn_angles.assign(static_cast<std::size_t>(n_turns), 0.0);
  // The right turn follows a left with only a short link between them, so
  // the course always contains one genuine left-right chicane.
  const std::size_t right_pos =
      1 + static_cast<std::size_t>(rng.below(static_cast<std::uint64_t>(n_turns - 1)));
  std::size_t li = 0;
  for (std::size_t i = 0; i < c.turn_angles.size(); ++i) {
    if (i == right_pos) {
      c.turn_angles[i] = right_angle;
    } else {
      c.turn_angles[i] = raw[li++] * left_total / raw_sum;
    }
  }
  c.radii.resize(c.turn_angles.size());
  double arc_total = 0.0;
  for (std::size_t i = 0; i < c.radii.size(); ++i) {
    c.radii[i] = rng.uniform(p.min_turn_radius + 0.02, p.max_turn_radius);
    arc_total += c.radii[i] * std::fabs(c.turn_angles[i]);
  }
  const std::size_t chicane_link = right_pos - 1;  // straight between the left and the right
  const double link_len = p.min_straight;
  const double straights_total = p.target_length - arc_total;
  if (straights_total < p.min_straight * n_turns + 0.2) return false;

  // Heading entering turn i and heading of the straight after it.
  std::vector<double> head_in(c.turn_angles.size());
  std::vector<double> head_out(c.turn_angles.size());
  double h = 0.0;
  for (std::size_t i = 0; i < c.turn_angles.size(); ++i) {
    head_in[i] = h;
    h += c.turn_angles[i];
    head_out[i] = h;
  }

  // Fixed displacement contributed by the arcs (chord form) and the pinned
  // chicane link.
  Vec2 fixed_disp{0.0, 0.0};
  for (std::size_t i = 0; i < c.turn_angles.size(); ++i) {
    const double chord = 2.0 * c.radii[i] * std::sin(0.5 * std::fabs(c.turn_angles[i]));
    fixed_disp += unit_from_angle(head_in[i] + 0.5 * c.turn_angles[i]) * chord;
  }
  fixed_disp += unit_from_angle(head_out[chicane_link]) * link_len;

  // Solve the free straights: closure in x and y plus total length.
  std::vector<std::size_t> free_idx;
  for (std::size_t i = 0; i < c.turn_angles.size(); ++i) {
    if (i != chicane_link) free_idx.push_back(i);
  }
  const std::size_t m = free_idx.size();
  std::array<std::vector<double>, 3> M;
  for (auto& row : M) row.assign(m, 0.0);
  for (std::size_t i = 0; i < m; ++i) {
    M[0][i] = std::cos(head_out[free_idx[i]]);
    M[1][i] = std::sin(head_out[free_idx[i]]);
    M[2][i] = 1.0;
  }
  const std::array<double, 3> rhs = {-fixed_disp.x, -fixed_disp.y, straights_total - link_len};
  std::vector<double> base(m, (straights_total - link_len) / static_cast<double>(m));
  std::vector<double> solved;
  if (!solve_constrained(M, rhs, base, solved)) return false;
  c.straights.assign(c.turn_angles.size(), link_len);
  for (std::size_t i = 0; i < m; ++i) {
    if (!(solved[i] >= p.min_straight)) return false;
    c.straights[free_idx[i]] = solved[i];
  }
  return true;
}

bool clearance_ok(const Track& t, double min_clearance, double min_arc_sep) {
  const auto& pts = t.centerline();
  const auto& table = t.arc_length_table();
  const double total = t.total_length();
  const std::size_t n = pts.size() - 1;
  // Coarse stride keeps this O(n^2/9) with 4 cm of slack folded into the
  // clearance threshold.
  for (std::size_t i = 0; i < n; i += 3) {
    for (std::size_t j = i + 3; j < n; j += 3) {
      if (wrap_dist(table[i], table[j], total) < min_arc_sep) continue;
      if ((pts[i] - pts[j]).norm() < min_clearance) return false;
    }
  }
  return true;
}

}  // namespace

Track generate_default_track(std::uint64_t seed, const TrackGenParams& params) {
  for (int attempt = 0; attempt < params.max_attempts; ++attempt) {
    Rng rng(derive_seed(seed, static_cast<std::uint64_t>(attempt)));
    Candidate c;
    if (!sample_candidate(rng, params, c)) continue;

    PolylineBuilder b;
    b.spacing = params.vertex_spacing;
    b.start();
    // Start mid-way along the final straight so s=0 (the start line) lies on
    // a straight and no turn segment wraps around it.
    const double closing = c.straights.back();
    b.straight(0.5 * closing);
    for (std::size_t i = 0; i < c.turn_angles.size(); ++i) {
      b.arc(c.radii[i], c.turn_angles[i]);
      if (i + 1 < c.turn_angles.size()) {
        b.straight(c.straights[i]);
      } else {
        b.straight(0.5 * closing);
      }
    }
    if ((b.pts.back() - b.pts.front()).norm() > 1e-6) continue;  // closure failed
    b.pts.back() = b.pts.front();

    try {
      Track track = Track::from_parts(std::move(b.pts), params.half_width, {});
      if (std::fabs(track.total_length() - params.target_length) > 0.1) continue;
      if (!clearance_ok(track, params.min_clearance, 1.5)) continue;
      int lefts = 0;
      int rights = 0;
      for (const auto& seg : track.turn_segments()) {
        (seg.dir == TurnDir::left ? lefts : rights)++;
      }
      if (lefts != params.left_turns || rights != params.right_turns) continue;
      return track;
    } catch (const std::invalid_argument&) {
      continue;
    }
  }
  throw std::runtime_error(
      "generate_default_track: no valid geometry within retry budget; generator parameters are "
      "infeasible");
}

}  // namespace minidrive
