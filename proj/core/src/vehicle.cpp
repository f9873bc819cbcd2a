#include "minidrive/vehicle.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace minidrive {

void set_steering(VehicleState& state, const VehicleParams& params, double normalized_command) {
  if (!std::isfinite(normalized_command)) {
    throw std::invalid_argument("set_steering: non-finite command");
  }
  const double clipped = std::fmax(-1.0, std::fmin(1.0, normalized_command));
  state.pending.push_back(
      PendingSteerCommand{state.t + params.actuator_pure_delay, clipped * params.max_steer});
}

void step(VehicleState& state, const VehicleParams& params, double dt) {
  if (!(dt > 0.0 && dt <= 0.02)) throw std::invalid_argument("step: dt must be in (0, 0.02]");

  // Release queued commands in FIFO order; a command issued at t becomes the
  // active target once its release time has been reached.
  while (!state.pending.empty() && state.pending.front().release_time <= state.t + 1e-12) {
    state.steer_commanded = state.pending.front().steer_rad;
    state.pending.pop_front();
  }

  const double steer_alpha = std::fmin(dt / params.actuator_tau, 1.0);
  double d_steer = (state.steer_commanded - state.steer_actual) * steer_alpha;
  const double slew =
      params.steer_rate_limit / (1.0 + params.steer_load_per_speed * std::fmax(0.0, state.speed));
  const double max_move = slew * dt;
  d_steer = std::fmax(-max_move, std::fmin(max_move, d_steer));
  state.steer_actual += d_steer;

  const double speed_alpha = std::fmin(dt / params.speed_tau, 1.0);
  state.speed += (state.speed_setpoint - state.speed) * speed_alpha;
  if (state.speed < 0.0) state.speed = 0.0;

  state.heading += state.speed / params.wheelbase * std::tan(state.steer_actual) * dt;
  state.pos.x += state.speed * std::cos(state.heading) * dt;
  state.pos.y += state.speed * std::sin(state.heading) * dt;
  state.t += dt;
}

double min_turning_radius(const VehicleParams& params) {
  const double t = std::tan(params.max_steer);
  if (std::fabs(t) < 1e-12) return std::numeric_limits<double>::infinity();
  return params.wheelbase / t;
}

}  // namespace minidrive
