#pragma once

#include <deque>

#include "minidrive/geometry.hpp"

namespace minidrive {

// 1:10-scale platform defaults. max_steer is chosen so the center-path
// turning diameter (2 * wheelbase / tan max_steer ~= 1.08 m) stays below the
// 1.40 m outer-wheel envelope of the physical car.
struct VehicleParams {
  double wheelbase = 0.26;           // m
  double max_steer = 0.45;           // rad
  double body_half_width = 0.095;    // m, folded into collision margin
  double actuator_tau = 0.08;        // s, first-order steering lag
  double actuator_pure_delay = 0.02; // s, command transport delay
  // Servo slew limit, rad/s. Bounds how fast steer_actual can move, on top
  // of the first-order lag; this is what forces preemptive commands at
  // speed (steering issued late cannot develop in time).
  double steer_rate_limit = 1.4;
  // Optional speed-proportional actuator load: the effective slew rate is
  // steer_rate_limit / (1 + steer_load_per_speed * speed), modeling servo
  // load that grows when driving faster. Off by default.
  double steer_load_per_speed = 0.0;
  double speed_tau = 0.25;           // s, speed setpoint tracking lag
  // Slowly drifting setpoint offset (throttle/battery wobble analogue);
  // resampled every speed_noise_period seconds by the simulation loops.
  double speed_noise_sigma = 0.03;   // m/s
  double speed_noise_period = 5.0;   // s
};

struct PendingSteerCommand {
  double release_time = 0.0;  // s
  double steer_rad = 0.0;
};

struct VehicleState {
  Vec2 pos{0.0, 0.0};
  double heading = 0.0;        // rad
  double speed = 0.0;          // m/s
  double speed_setpoint = 0.0; // m/s
  double steer_actual = 0.0;   // rad, post-lag
  double steer_commanded = 0.0;
  double t = 0.0;              // s, owned by the single simulation loop
  std::deque<PendingSteerCommand> pending;
};

// Clips the normalized command to [-1, 1], scales by max_steer and enqueues
// it behind the pure actuator delay. Throws on a non-finite command.
void set_steering(VehicleState& state, const VehicleParams& params, double normalized_command);

// Fixed-step update: releases due commands, applies first-order steering and
// speed lags, then integrates the kinematic bicycle. dt must be in (0, 0.02].
void step(VehicleState& state, const VehicleParams& params, double dt);

// wheelbase / tan(max_steer); +infinity as max_steer approaches zero.
double min_turning_radius(const VehicleParams& params);

}  // namespace minidrive
