#include "minidrive/expert.hpp"

#include <cmath>
#include <stdexcept>

namespace minidrive {

std::optional<double> expert_steer(const Track& track, const TrackQueryResult& at,
                                   const VehicleState& state, const VehicleParams& vehicle,
                                   const ExpertParams& params) {
  if (std::fabs(at.lateral_offset) > 2.0 * track.half_width()) {
    return std::nullopt;  // abstain: off track
  }
  const double lookahead = params.base_lookahead + params.lookahead_per_speed * state.speed;
  const Vec2 target = track.point_at(at.s + lookahead);
  const Vec2 to_target = target - state.pos;
  const double alpha = wrap_angle(std::atan2(to_target.y, to_target.x) - state.heading);
  const double steer_rad =
      std::atan(2.0 * vehicle.wheelbase * std::sin(alpha) / lookahead) * params.steer_gain;
  double norm = steer_rad / vehicle.max_steer;
  norm = std::fmax(-1.0, std::fmin(1.0, norm));
  if (params.quantize) {
    if (std::fabs(norm) < params.quantize_dead_band) norm = 0.0;
    else norm = norm > 0.0 ? 1.0 : -1.0;
  }
  return norm;
}

std::optional<double> expert_steer(const Track& track, const VehicleState& state,
                                   const VehicleParams& vehicle, const ExpertParams& params) {
  return expert_steer(track, track.locate(state.pos), state, vehicle, params);
}

Recording collect_run(const Track& track, const VehicleParams& vehicle,
                      const ExpertParams& expert, const SensorConfig& sensor,
                      const CollectOptions& options, std::uint64_t seed) {
  if (!(options.duration_s > 0.0)) throw std::invalid_argument("collect_run: duration must be > 0");

  Rng noise_rng(derive_seed(seed, 1));
  Rng perturb_rng(derive_seed(seed, 2));
  Rng speed_rng(derive_seed(seed, 3));

  Recording rec;
  rec.manifest.capture_hz = sensor.capture_hz;
  rec.manifest.ray_count = sensor.ray_count;
  rec.manifest.fov = sensor.fov;
  rec.manifest.track_hash = track.content_hash();
  rec.manifest.expert = expert;
  rec.manifest.speed_setpoint = options.speed_setpoint;
  rec.manifest.seed = seed;
  rec.manifest.created_at = options.created_at;

  SensorRig rig(track, sensor);
  TrackLocator locator(track);

  VehicleState state;
  state.pos = track.point_at(0.0);
  state.heading = track.heading_at(0.0);
  state.speed = options.speed_setpoint;  // rolling start, as during real collection
  state.speed_setpoint = options.speed_setpoint;

  const int steps_per_tick =
      std::max(1, static_cast<int>(std::llround(1.0 / (sensor.capture_hz * options.dt))));
  const long total_steps = std::llround(options.duration_s / options.dt);

  const double effective_hw = track.half_width() - vehicle.body_half_width;
  double prev_s = track.locate(state.pos).s;
  int lap = 0;
  double mask_until = -1.0;
  bool infraction_pending = false;
  struct PendingActuation {
    double at = 0.0;
    double cmd = 0.0;
  };
  std::deque<PendingActuation> compute_queue;
  double next_speed_resample = 0.0;

  for (long step_i = 0; step_i <= total_steps; ++step_i) {
    while (!compute_queue.empty() && compute_queue.front().at <= state.t + 1e-12) {
      set_steering(state, vehicle, compute_queue.front().cmd);
      compute_queue.pop_front();
    }
    if (step_i % steps_per_tick == 0) {
      const TrackQueryResult at = locator.locate(state.pos);
      const auto steer = expert_steer(track, at, state, vehicle, expert);
      if (!steer) {
        rec.manifest.truncated_reason = "expert abstained: vehicle left the track";
        break;
      }

      const Frame& frame = rig.capture_now(state.pos, state.heading, state.speed, state.t,
                                           &noise_rng);
      Sample sample;
      sample.t = state.t;
      sample.frame = frame.rays;
      sample.steer = *steer;
      sample.speed = state.speed;
      sample.lap = lap;
      sample.s = at.s;
      sample.infraction_window = infraction_pending;
      sample.perturb_mask = state.t <= mask_until;
      rec.samples.push_back(std::move(sample));
      infraction_pending = false;

      compute_queue.push_back(PendingActuation{state.t + options.compute_delay_s, *steer});

      // Occasional lateral kick; the expert then recovers, which puts
      // recovery states into the dataset. Kicks are clamped to half the
      // drivable half-width, so the recovery coverage stays a band around
      // the centerline rather than reaching the walls.
      if (perturb_rng.uniform() < expert.perturb_prob / sensor.capture_hz) {
        const double kick = perturb_rng.normal(0.0, expert.perturb_sigma);
        const double limit = 0.5 * effective_hw;
        const double target_offset = std::fmax(-limit, std::fmin(limit, at.lateral_offset + kick));
        const Vec2 center = track.point_at(at.s);
        const Vec2 normal = unit_from_angle(at.heading).perp();
        state.pos = center + normal * target_offset;
        mask_until = state.t + expert.perturb_mask_s;
      }
    }

    if (vehicle.speed_noise_sigma > 0.0 &&
        state.t >= next_speed_resample) {
      state.speed_setpoint =
          options.speed_setpoint + speed_rng.normal(0.0, vehicle.speed_noise_sigma);
      next_speed_resample = state.t + vehicle.speed_noise_period;
    }
    step(state, vehicle, options.dt);

    const TrackQueryResult at = locator.locate(state.pos);
    const auto [ds, lap_done] = track.lap_progress(prev_s, at.s);
    (void)ds;
    if (lap_done) ++lap;
    prev_s = at.s;

    if (std::fabs(at.lateral_offset) >= effective_hw) {
      // Wall contact during collection: mark it and re-place on the centerline.
      infraction_pending = true;
      state.pos = track.point_at(at.s);
      state.heading = track.heading_at(at.s);
      state.steer_actual = 0.0;
      state.steer_commanded = 0.0;
      state.pending.clear();
      locator.reset();
    }
  }
  return rec;
}

}  // namespace minidrive
