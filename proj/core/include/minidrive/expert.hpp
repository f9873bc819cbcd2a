#pragma once

#include <cstdint>
#include <optional>

#include "minidrive/dataset.hpp"
#include "minidrive/expert_params.hpp"
#include "minidrive/sensing.hpp"
#include "minidrive/track.hpp"
#include "minidrive/vehicle.hpp"

namespace minidrive {

// Normalized pure-pursuit steering for the current state, or nothing when
// the vehicle is beyond 2x half_width off the track (collection must stop).
std::optional<double> expert_steer(const Track& track, const TrackQueryResult& at,
                                   const VehicleState& state, const VehicleParams& vehicle,
                                   const ExpertParams& params);

// Convenience overload that locates the vehicle first.
std::optional<double> expert_steer(const Track& track, const VehicleState& state,
                                   const VehicleParams& vehicle, const ExpertParams& params);

struct CollectOptions {
  double duration_s = 60.0;
  double speed_setpoint = 0.70;  // m/s
  double dt = 0.005;
  // The teacher runs through the same on-board pipeline as deployed models,
  // so its commands actuate one compute interval after the frame. Labels
  // stay paired with the frame the command was computed from.
  double compute_delay_s = 0.024;
  std::string created_at;        // empty keeps recordings byte-deterministic
};

// Closed-loop expert run with 20 Hz capture and occasional lateral kicks
// (recovery coverage). Records one Sample per capture tick.
Recording collect_run(const Track& track, const VehicleParams& vehicle,
                      const ExpertParams& expert, const SensorConfig& sensor,
                      const CollectOptions& options, std::uint64_t seed);

}  // namespace minidrive
