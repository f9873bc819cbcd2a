#include "minidrive/sensing.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace minidrive {

WallGeometry::WallGeometry(const Track& track, double cell_size) : cell_(cell_size) {
  const auto& pts = track.centerline();
  const double hw = track.half_width();
  const std::size_t n = pts.size() - 1;  // unique vertices

  // Vertex-wise offset of the centerline; valid because turn radii exceed
  // the half-width by construction.
  std::vector<Vec2> left(n), right(n);
  for (std::size_t i = 0; i < n; ++i) {
    const Vec2 prev = pts[(i + n - 1) % n];
    const Vec2 next = pts[(i + 1) % n];
    Vec2 normal = ((next - prev).normalized()).perp();
    left[i] = pts[i] + normal * hw;
    right[i] = pts[i] - normal * hw;
  }
  seg_a_.reserve(2 * n);
  seg_b_.reserve(2 * n);
  for (std::size_t i = 0; i < n; ++i) {
    seg_a_.push_back(left[i]);
    seg_b_.push_back(left[(i + 1) % n]);
  }
  for (std::size_t i = 0; i < n; ++i) {
    seg_a_.push_back(right[i]);
    seg_b_.push_back(right[(i + 1) % n]);
  }

  double max_x = -std::numeric_limits<double>::infinity();
  double max_y = max_x;
  min_x_ = std::numeric_limits<double>::infinity();
  min_y_ = min_x_;
  for (std::size_t i = 0; i < seg_a_.size(); ++i) {
    for (const Vec2 p : {seg_a_[i], seg_b_[i]}) {
      min_x_ = std::fmin(min_x_, p.x);
      min_y_ = std::fmin(min_y_, p.y);
      max_x = std::fmax(max_x, p.x);
      max_y = std::fmax(max_y, p.y);
    }
  }
  min_x_ -= 0.5;
  min_y_ -= 0.5;
  nx_ = std::max(1, static_cast<int>(std::ceil((max_x + 0.5 - min_x_) / cell_)));
  ny_ = std::max(1, static_cast<int>(std::ceil((max_y + 0.5 - min_y_) / cell_)));
  cells_.assign(static_cast<std::size_t>(nx_) * static_cast<std::size_t>(ny_), {});

  // Conservative rasterization: every cell whose box the segment's bounding
  // box touches gets the segment. Segments are ~4 cm, so this is tight.
  for (std::size_t i = 0; i < seg_a_.size(); ++i) {
    const Vec2 a = seg_a_[i];
    const Vec2 b = seg_b_[i];
    const int x0 = std::clamp(static_cast<int>((std::fmin(a.x, b.x) - min_x_) / cell_), 0, nx_ - 1);
    const int x1 = std::clamp(static_cast<int>((std::fmax(a.x, b.x) - min_x_) / cell_), 0, nx_ - 1);
    const int y0 = std::clamp(static_cast<int>((std::fmin(a.y, b.y) - min_y_) / cell_), 0, ny_ - 1);
    const int y1 = std::clamp(static_cast<int>((std::fmax(a.y, b.y) - min_y_) / cell_), 0, ny_ - 1);
    for (int cy = y0; cy <= y1; ++cy) {
      for (int cx = x0; cx <= x1; ++cx) {
        cells_[static_cast<std::size_t>(cy) * nx_ + cx].push_back(static_cast<std::int32_t>(i));
      }
    }
  }
}

RayHit WallGeometry::raycast_brute(Vec2 origin, Vec2 dir, double max_range) const {
  RayHit hit;
  hit.distance = max_range;
  for (std::size_t i = 0; i < seg_a_.size(); ++i) {
    const auto t = ray_segment_intersection(origin, dir, seg_a_[i], seg_b_[i]);
    if (t && *t < hit.distance) {
      hit.distance = *t;
      hit.hit_wall = true;
      hit.wall_dir = (seg_b_[i] - seg_a_[i]).normalized();
    }
  }
  return hit;
}

RayHit WallGeometry::raycast(Vec2 origin, Vec2 dir, double max_range) const {
  // DDA through the grid; stop as soon as a hit lies inside the traversed span.
  RayHit best;
  best.distance = max_range;

  int cx = static_cast<int>((origin.x - min_x_) / cell_);
  int cy = static_cast<int>((origin.y - min_y_) / cell_);
  const int step_x = dir.x > 0 ? 1 : -1;
  const int step_y = dir.y > 0 ? 1 : -1;
  const double inv_dx = dir.x != 0.0 ? 1.0 / dir.x : std::numeric_limits<double>::infinity();
  const double inv_dy = dir.y != 0.0 ? 1.0 / dir.y : std::numeric_limits<double>::infinity();

  double t_max_x, t_max_y;
  if (dir.x > 0) t_max_x = ((min_x_ + (cx + 1) * cell_) - origin.x) * inv_dx;
  else if (dir.x < 0) t_max_x = ((min_x_ + cx * cell_) - origin.x) * inv_dx;
  else t_max_x = std::numeric_limits<double>::infinity();
  if (dir.y > 0) t_max_y = ((min_y_ + (cy + 1) * cell_) - origin.y) * inv_dy;
  else if (dir.y < 0) t_max_y = ((min_y_ + cy * cell_) - origin.y) * inv_dy;
  else t_max_y = std::numeric_limits<double>::infinity();

  const double t_delta_x = std::fabs(cell_ * inv_dx);
  const double t_delta_y = std::fabs(cell_ * inv_dy);

  double traversed = 0.0;
  while (traversed <= max_range) {
    if (cx < 0 || cy < 0 || cx >= nx_ || cy >= ny_) break;  // left the wall extents
    for (const std::int32_t i : cells_[static_cast<std::size_t>(cy) * nx_ + cx]) {
      const auto t = ray_segment_intersection(origin, dir, seg_a_[i], seg_b_[i]);
      if (t && *t < best.distance) {
        best.distance = *t;
        best.hit_wall = true;
        best.wall_dir = (seg_b_[i] - seg_a_[i]).normalized();
      }
    }
    const double cell_exit = std::fmin(t_max_x, t_max_y);
    if (best.hit_wall && best.distance <= cell_exit) return best;
    traversed = cell_exit;
    if (t_max_x < t_max_y) {
      t_max_x += t_delta_x;
      cx += step_x;
    } else {
      t_max_y += t_delta_y;
      cy += step_y;
    }
  }
  return best;
}

std::vector<double> capture(const WallGeometry& walls, Vec2 pos, double heading,
                            const SensorConfig& config, Rng* noise_rng) {
  if (config.ray_count < 4) throw std::invalid_argument("capture: ray_count must be >= 4");
  std::vector<double> rays(static_cast<std::size_t>(config.ray_count));
  const int n = config.ray_count;
  for (int i = 0; i < n; ++i) {
    const double angle = heading - 0.5 * config.fov + config.fov * i / (n - 1);
    const RayHit hit = walls.raycast(pos, unit_from_angle(angle), config.max_range);
    double d = hit.distance;
    if (noise_rng && config.noise_sigma > 0.0) {
      d += noise_rng->normal(0.0, config.noise_sigma);
    }
    rays[static_cast<std::size_t>(i)] = std::clamp(d, 0.0, config.max_range);
  }
  return rays;
}

std::optional<Observation> stack_frames(const std::deque<Frame>& buffer,
                                        const SensorConfig& config) {
  const std::size_t k = static_cast<std::size_t>(config.stack_size);
  if (buffer.size() < k) return std::nullopt;
  Observation obs;
  obs.frames.reserve(k);
  obs.capture_times.reserve(k);
  const double spacing = 1.0 / config.capture_hz;
  for (std::size_t i = buffer.size() - k; i < buffer.size(); ++i) {
    obs.frames.push_back(buffer[i].rays);
    obs.capture_times.push_back(buffer[i].t);
  }
  for (std::size_t i = 1; i < obs.capture_times.size(); ++i) {
    if (std::fabs(obs.capture_times[i] - obs.capture_times[i - 1] - spacing) > 1e-6) {
      return std::nullopt;  // gap in the buffer
    }
  }
  return obs;
}

const Frame& SensorRig::capture_now(Vec2 pos, double heading, double speed, double t,
                                    Rng* noise_rng) {
  std::vector<double> raw(static_cast<std::size_t>(config_.ray_count));
  {
    SensorConfig no_noise = config_;
    no_noise.noise_sigma = 0.0;
    raw = capture(walls_, pos, heading, no_noise, nullptr);
  }
  if (config_.motion_blur && !raw_prev_.empty()) {
    const double beta = std::fmin(0.8, config_.blur_per_speed * std::fmax(0.0, speed));
    for (std::size_t i = 0; i < raw.size(); ++i) {
      raw[i] = (1.0 - beta) * raw[i] + beta * raw_prev_[i];
    }
  }
  raw_prev_ = raw;

  Frame frame;
  frame.t = t;
  frame.rays = std::move(raw);
  if (noise_rng && config_.noise_sigma > 0.0) {
    for (auto& d : frame.rays) {
      d = std::clamp(d + noise_rng->normal(0.0, config_.noise_sigma), 0.0, config_.max_range);
    }
  }
  buffer_.push_back(std::move(frame));
  const std::size_t keep = static_cast<std::size_t>(std::max(3, config_.stack_size));
  while (buffer_.size() > keep) buffer_.pop_front();
  return buffer_.back();
}

std::vector<std::uint8_t> rasterize_frame(const std::vector<double>& rays,
                                          const SensorConfig& config, int width, int height) {
  std::vector<std::uint8_t> grid(static_cast<std::size_t>(width) * height, 0);
  const int n = static_cast<int>(rays.size());
  for (int i = 0; i < n; ++i) {
    const double angle = -0.5 * config.fov + config.fov * i / (n - 1);
    const double d = rays[static_cast<std::size_t>(i)];
    if (d >= config.max_range) continue;  // no wall in range
    // Vehicle frame: x forward in [0, max_range) -> rows, y left -> columns.
    const double x = d * std::cos(angle);
    const double y = d * std::sin(angle);
    const int row = static_cast<int>(x / config.max_range * height);
    const int col = static_cast<int>((y + config.max_range) / (2.0 * config.max_range) * width);
    if (row >= 0 && row < height && col >= 0 && col < width) {
      grid[static_cast<std::size_t>(row) * width + col] = 1;
    }
  }
  return grid;
}

}  // namespace minidrive
