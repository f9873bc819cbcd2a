#include <doctest.h>

#include <cmath>
#include <cstring>

#include "minidrive/vehicle.hpp"

using namespace minidrive;

namespace {
VehicleParams no_noise_params() {
  VehicleParams p;
  p.speed_noise_sigma = 0.0;
  return p;
}
}  // namespace

TEST_CASE("constant steer traces a circle of radius L/tan(delta)") {
  VehicleParams p = no_noise_params();
  VehicleState s;
  s.speed = 1.0;
  s.speed_setpoint = 1.0;
  s.steer_actual = 0.4;
  s.steer_commanded = 0.4;

  const double radius_expected = p.wheelbase / std::tan(0.4);
  CHECK(radius_expected == doctest::Approx(0.6150).epsilon(2e-4));

  const double period = 2.0 * 3.14159265358979323846 * radius_expected / s.speed;
  const Vec2 start = s.pos;
  const int steps = static_cast<int>(std::llround(period / 0.005));
  Vec2 centroid{0.0, 0.0};
  for (int i = 0; i < steps; ++i) {
    step(s, p, 0.005);
    centroid += s.pos;
  }
  // Path closes within 2*dt*v.
  CHECK((s.pos - start).norm() <= 2.0 * 0.005 * 1.0);

  centroid = centroid * (1.0 / steps);
  // Mean radius about the centroid vs the analytic value: 0.5% gate.
  VehicleState s2;
  s2.speed = 1.0;
  s2.speed_setpoint = 1.0;
  s2.steer_actual = 0.4;
  s2.steer_commanded = 0.4;
  double mean_r = 0.0;
  for (int i = 0; i < steps; ++i) {
    step(s2, p, 0.005);
    mean_r += (s2.pos - centroid).norm();
  }
  mean_r /= steps;
  CHECK(std::fabs(mean_r - radius_expected) / radius_expected < 0.005);
}

TEST_CASE("straight step advances x only") {
  VehicleParams p = no_noise_params();
  VehicleState s;
  s.speed = 1.0;
  s.speed_setpoint = 1.0;
  step(s, p, 0.005);
  CHECK(s.pos.x == doctest::Approx(0.005));
  CHECK(s.pos.y == doctest::Approx(0.0));
  CHECK(s.heading == doctest::Approx(0.0));
}

TEST_CASE("actuator step response follows the first-order closed form") {
  VehicleParams p = no_noise_params();
  // Small step so the slew limit stays out of play and the exponential is
  // exact: initial rate delta/tau = 1.25 rad/s < slew limit.
  const double delta = 0.1;
  VehicleState s;
  set_steering(s, p, delta / p.max_steer);
  // Command releases after the pure delay, then develops for one tau.
  const int delay_steps = static_cast<int>(std::llround(p.actuator_pure_delay / 0.005));
  const int tau_steps = static_cast<int>(std::llround(p.actuator_tau / 0.005));
  for (int i = 0; i < delay_steps; ++i) step(s, p, 0.005);
  for (int i = 0; i < tau_steps; ++i) step(s, p, 0.005);
  const double expected = delta * (1.0 - std::exp(-1.0));
  CHECK(std::fabs(s.steer_actual - expected) / expected < 0.02);
}

TEST_CASE("set_steering clips and validates") {
  VehicleParams p = no_noise_params();
  VehicleState s;
  set_steering(s, p, 1.5);
  CHECK(s.pending.back().steer_rad == doctest::Approx(p.max_steer));
  set_steering(s, p, 0.0);
  CHECK(s.pending.back().steer_rad == doctest::Approx(0.0));
  CHECK_THROWS(set_steering(s, p, std::nan("")));

  // Release time honors the pure delay: command at t=0 becomes active at 0.02.
  VehicleState s2;
  set_steering(s2, p, -1.0);
  CHECK(s2.pending.back().release_time == doctest::Approx(p.actuator_pure_delay));
  while (s2.t < p.actuator_pure_delay - 0.005 / 2) {
    step(s2, p, 0.005);
    CHECK(s2.steer_commanded == doctest::Approx(0.0));
  }
  step(s2, p, 0.005);
  CHECK(s2.steer_commanded == doctest::Approx(-p.max_steer));
}

TEST_CASE("pure-delay queue is FIFO and order preserving") {
  VehicleParams p = no_noise_params();
  p.actuator_pure_delay = 0.03;
  VehicleState s;
  set_steering(s, p, 0.2);
  step(s, p, 0.005);
  set_steering(s, p, -0.6);
  step(s, p, 0.005);
  set_steering(s, p, 1.0);
  CHECK(s.pending.size() == 3);
  double prev_release = -1.0;
  for (const auto& cmd : s.pending) {
    CHECK(cmd.release_time > prev_release);
    prev_release = cmd.release_time;
  }
  // March far enough that all release; last one wins.
  for (int i = 0; i < 20; ++i) step(s, p, 0.005);
  CHECK(s.steer_commanded == doctest::Approx(p.max_steer));
  CHECK(s.pending.empty());
}

TEST_CASE("actuator moves monotonically toward the command without overshoot") {
  VehicleParams p = no_noise_params();
  VehicleState s;
  set_steering(s, p, 0.9);
  double prev = s.steer_actual;
  for (int i = 0; i < 400; ++i) {
    step(s, p, 0.005);
    CHECK(s.steer_actual >= prev - 1e-15);
    CHECK(s.steer_actual <= 0.9 * p.max_steer + 1e-12);
    prev = s.steer_actual;
  }
  CHECK(s.steer_actual == doctest::Approx(0.9 * p.max_steer).epsilon(1e-6));
}

TEST_CASE("slew limit bounds the steering rate") {
  VehicleParams p = no_noise_params();
  VehicleState s;
  set_steering(s, p, 1.0);
  double prev = 0.0;
  for (int i = 0; i < 200; ++i) {
    step(s, p, 0.005);
    CHECK(std::fabs(s.steer_actual - prev) <= p.steer_rate_limit * 0.005 + 1e-12);
    prev = s.steer_actual;
  }
}

TEST_CASE("speed-loaded slew slows the servo at speed") {
  VehicleParams p = no_noise_params();
  p.steer_load_per_speed = 0.5;
  VehicleState slow_state, fast_state;
  fast_state.speed = 2.0;
  fast_state.speed_setpoint = 2.0;
  set_steering(slow_state, p, 1.0);
  set_steering(fast_state, p, 1.0);
  for (int i = 0; i < 30; ++i) {
    step(slow_state, p, 0.005);
    step(fast_state, p, 0.005);
  }
  CHECK(fast_state.steer_actual < slow_state.steer_actual);
}

TEST_CASE("min_turning_radius formula and defaults") {
  VehicleParams p;
  p.wheelbase = 0.26;
  p.max_steer = 0.4;
  CHECK(min_turning_radius(p) == doctest::Approx(0.6150).epsilon(1e-4));

  p.max_steer = 1e-15;
  CHECK(std::isinf(min_turning_radius(p)));

  // Default parameters keep the center-path turning diameter under 1.40 m.
  CHECK(2.0 * min_turning_radius(VehicleParams{}) <= 1.40);
}

TEST_CASE("identical command schedules give bit-identical trajectories") {
  VehicleParams p = no_noise_params();
  auto run = [&]() {
    VehicleState s;
    s.speed_setpoint = 1.2;
    for (int i = 0; i < 600; ++i) {
      if (i % 40 == 0) set_steering(s, p, (i % 80 == 0) ? 0.7 : -0.4);
      step(s, p, 0.005);
    }
    return s;
  };
  const VehicleState a = run();
  const VehicleState b = run();
  CHECK(std::memcmp(&a.pos, &b.pos, sizeof(Vec2)) == 0);
  CHECK(a.heading == b.heading);
  CHECK(a.speed == b.speed);
  CHECK(a.steer_actual == b.steer_actual);
}
