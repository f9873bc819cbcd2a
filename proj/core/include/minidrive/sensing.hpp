#pragma once

#include <cstdint>
#include <deque>
#include <optional>
#include <vector>

#include "minidrive/geometry.hpp"
#include "minidrive/rng.hpp"
#include "minidrive/track.hpp"

namespace minidrive {

struct SensorConfig {
  int ray_count = 32;
  double fov = 2.792526803190927;  // rad (160 deg)
  double max_range = 3.0;          // m
  double capture_hz = 20.0;
  double noise_sigma = 0.02;       // m
  int stack_size = 1;              // 1 or 3
  bool motion_blur = false;        // exponential frame mixing, ablation only
  double blur_per_speed = 0.15;    // mixing weight per m/s when enabled
};

struct Frame {
  std::vector<double> rays;  // clipped to [0, max_range]
  double t = 0.0;            // capture time
};

// stack_size most recent frames, oldest first, captured 1/capture_hz apart.
struct Observation {
  std::vector<std::vector<double>> frames;
  std::vector<double> capture_times;

  std::vector<double> flatten() const {
    std::vector<double> out;
    for (const auto& f : frames) out.insert(out.end(), f.begin(), f.end());
    return out;
  }
};

struct RayHit {
  double distance = 0.0;
  bool hit_wall = false;
  Vec2 wall_dir{0.0, 0.0};  // direction of the wall segment that was hit
};

// Offset walls of a track (+-half_width) bucketed into a uniform grid for
// fast ray queries. Built once per track; immutable afterwards.
class WallGeometry {
 public:
  explicit WallGeometry(const Track& track, double cell_size = 0.25);

  RayHit raycast(Vec2 origin, Vec2 dir, double max_range) const;
  std::size_t segment_count() const { return seg_a_.size(); }

 private:
  std::vector<Vec2> seg_a_;
  std::vector<Vec2> seg_b_;
  double cell_ = 0.25;
  double min_x_ = 0.0, min_y_ = 0.0;
  int nx_ = 0, ny_ = 0;
  std::vector<std::vector<std::int32_t>> cells_;

  RayHit raycast_brute(Vec2 origin, Vec2 dir, double max_range) const;
};

// Single frame from a pose: ray_count rays fanned across fov, centered on
// heading, rightmost first. Distances depend on pose only, never on speed.
// Gaussian noise is added per ray when rng is non-null.
std::vector<double> capture(const WallGeometry& walls, Vec2 pos, double heading,
                            const SensorConfig& config, Rng* noise_rng);

// Newest `stack_size` frames (oldest first); empty when the buffer has not
// accumulated enough frames at the expected spacing yet.
std::optional<Observation> stack_frames(const std::deque<Frame>& buffer,
                                        const SensorConfig& config);

// 20 Hz capture front-end for simulation loops: keeps the small frame
// history, applies optional speed-proportional blur, then noise.
class SensorRig {
 public:
  SensorRig(const Track& track, const SensorConfig& config)
      : walls_(track), config_(config) {}

  const Frame& capture_now(Vec2 pos, double heading, double speed, double t, Rng* noise_rng);
  std::optional<Observation> latest_stack() const { return stack_frames(buffer_, config_); }
  const Frame* latest_frame() const { return buffer_.empty() ? nullptr : &buffer_.back(); }
  const WallGeometry& walls() const { return walls_; }
  void clear() { buffer_.clear(); raw_prev_.clear(); }

 private:
  WallGeometry walls_;
  SensorConfig config_;
  std::deque<Frame> buffer_;
  std::vector<double> raw_prev_;  // pre-noise frame for blur mixing
};

// 32x16 occupancy grid of the ray endpoints in the vehicle frame;
// visualization helper only.
std::vector<std::uint8_t> rasterize_frame(const std::vector<double>& rays,
                                          const SensorConfig& config, int width = 32,
                                          int height = 16);

}  // namespace minidrive
