#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <vector>

#include "minidrive/expert.hpp"
#include "minidrive/learner.hpp"
#include "minidrive/sensing.hpp"
#include "minidrive/track.hpp"
#include "minidrive/vehicle.hpp"

namespace minidrive {

// Sequential frame->compute->actuate pipeline. Compute time both delays the
// command and throttles the decision rate (period = max(frame interval,
// compute time)), matching an on-board single-threaded deployment. The
// `pipelined` switch decouples the two: decisions start on every frame and
// commands land compute-time later.
struct PipelineConfig {
  double base_compute_ms = 24.0;
  double added_delay_ms = 0.0;
  double speed_setpoint = 0.70;  // m/s
  bool replace_on_crash = true;
  bool pipelined = false;
  double jitter_ms = 0.0;        // uniform +-jitter on compute time, off by default
  double dt = 0.005;             // integration step

  double total_compute_s() const { return (base_compute_ms + added_delay_ms) / 1000.0; }
};

struct InfractionSite {
  double s = 0.0;
  WallSide wall = WallSide::none;
  TurnDir turn_dir = TurnDir::left;
  double distance_to_turn = 0.0;
  double t = 0.0;
};

struct LapReport {
  int laps_attempted = 0;
  int laps_completed = 0;
  int infractions = 0;
  std::vector<InfractionSite> infraction_sites;
  std::vector<double> lap_times;          // infraction-free laps only
  double mean_spatial_belatedness = 0.0;  // mean over decisions of (actuation - capture) * speed
  double mean_decision_period = 0.0;
  double max_frame_age = 0.0;             // capture-to-actuation, worst case
  int decisions = 0;
  double sim_time = 0.0;
  bool timed_out = false;

  double mean_lap_time() const {
    if (lap_times.empty()) return 0.0;
    double acc = 0.0;
    for (const double v : lap_times) acc += v;
    return acc / static_cast<double>(lap_times.size());
  }
};

// Steering source driving the loop. Policies see the Observation; privileged
// test controllers (the expert, threshold oracles) also get the vehicle
// state snapshot taken at frame capture time.
class Controller {
 public:
  virtual ~Controller() = default;
  virtual double decide(const Observation& obs, const VehicleState& state_at_capture) = 0;
  virtual int stack_size() const { return 1; }
};

class PolicyController : public Controller {
 public:
  explicit PolicyController(const Policy& policy, int stack)
      : policy_(&policy), stack_(stack) {}
  double decide(const Observation& obs, const VehicleState&) override {
    return policy_->predict(obs.flatten());
  }
  int stack_size() const override { return stack_; }

 private:
  const Policy* policy_;
  int stack_;
};

class ExpertController : public Controller {
 public:
  ExpertController(const Track& track, const VehicleParams& vehicle, const ExpertParams& params)
      : track_(&track), vehicle_(&vehicle), params_(params) {}
  double decide(const Observation&, const VehicleState& state_at_capture) override {
    const auto steer = expert_steer(*track_, state_at_capture, *vehicle_, params_);
    return steer ? *steer : 0.0;
  }

 private:
  const Track* track_;
  const VehicleParams* vehicle_;
  ExpertParams params_;
};

struct DecisionTrace {
  double t_actuate = 0.0;
  Vec2 pos;
  double heading = 0.0;
  double steer_cmd = 0.0;     // normalized
  double steer_actual = 0.0;  // rad
  double frame_age_ms = 0.0;
};

struct RunOptions {
  int n_laps = 10;
  std::uint64_t seed = 0;
  // Stop early once this many infractions accumulated (0 = never).
  int stop_after_infractions = 0;
  std::ostream* trace = nullptr;  // jsonl, one line per decision
};

LapReport run_laps(const Track& track, const VehicleParams& vehicle, Controller& controller,
                   const SensorConfig& sensor, const PipelineConfig& pipeline,
                   const RunOptions& options);

struct SearchParams {
  double v_min = 0.2;
  double v_max = 3.0;
  double coarse_step = 0.05;
  double resolution = 0.01;
  int probe_laps = 5;
  int confirm_laps = 25;
  int confirm_max_infractions = 1;
  int confirm_seeds = 3;   // median over seeds
  int max_backoff = 20;    // confirmation retries, stepping speed down
};

struct FastestLapResult {
  bool unbounded = true;   // no speed >= v_min drives safely
  double speed = 0.0;      // m/s at the confirmed setpoint
  double mean_lap_time = 0.0;
};

// Ascending probe sweep, bisection to `resolution`, then a 25-lap
// confirmation repeated over confirm_seeds seeds (median lap time of the
// passing seeds). Fails downward in coarse steps when confirmation misses.
FastestLapResult fastest_safe_lap(const Track& track, const VehicleParams& vehicle,
                                  Controller& controller, const SensorConfig& sensor,
                                  PipelineConfig pipeline, const SearchParams& search,
                                  std::uint64_t seed);

struct SweepCell {
  int shift_ms = 0;
  int added_delay_ms = 0;
  FastestLapResult result;
  bool passes_task = false;
};

struct SweepReport {
  std::vector<SweepCell> cells;  // row-major: shifts x delays
  std::vector<int> shifts_ms;
  std::vector<int> delays_ms;
  double train_mean_lap_s = 0.0;
  double train_lap_std_s = 0.0;
  double task_threshold_s = 0.0;  // mean + 2 sigma
};

struct SweepInputs {
  const Track* track = nullptr;
  const VehicleParams* vehicle = nullptr;
  const SensorConfig* sensor = nullptr;
  // One trained model per shift, aligned with shifts_ms.
  const std::vector<Policy>* models = nullptr;
  std::vector<int> shifts_ms;
  std::vector<int> delays_ms;
  double base_compute_ms = 24.0;
  double train_mean_lap_s = 0.0;
  double train_lap_std_s = 0.0;
  SearchParams search;
  std::uint64_t seed = 0;
  int jobs = 1;
};

// Full shift x delay grid of fastest-safe-lap searches; cells run in
// parallel, each with a seed derived from (seed, shift, delay).
SweepReport run_sweep(const SweepInputs& inputs);

struct CrossSpeedCell {
  std::string arch;         // "single" / "multi"
  std::string train_speed;  // "slow" / "fast"
  double deploy_speed = 0.0;
  std::string deploy_speed_name;
  LapReport report;
  int inside_hits = 0;      // turn-adjacent infractions
  int outside_hits = 0;
};

// Window in meters for counting an infraction as turn-adjacent.
constexpr double kTurnAdjacencyWindow = 0.6;

void count_turn_hits(const LapReport& report, int* inside, int* outside,
                     double window = kTurnAdjacencyWindow);

}  // namespace minidrive
