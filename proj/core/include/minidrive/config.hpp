#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "minidrive/closedloop.hpp"
#include "minidrive/expert_params.hpp"
#include "minidrive/learner.hpp"
#include "minidrive/sensing.hpp"
#include "minidrive/track.hpp"
#include "minidrive/vehicle.hpp"

namespace minidrive {

struct StudyConfig {
  double slow_speed = 0.70;       // m/s, 17 m lap in ~24.3 s
  double fast_speed = 1.14;       // ~14.9 s laps
  double delay_speed = 2.04;      // ~8.3 s laps
  double collect_s = 1200.0;      // per speed-study recording (~24k samples)
  double delay_collect_s = 2250.0;  // delay-study recording (~45k samples)
  int folds = 5;
  int periods = 10;
  int eval_laps = 10;
  double clean_window_s = 5.0;
  std::string split_scheme = "temporal";  // or "random80" for the delay study
};

struct SweepConfig {
  std::vector<int> shifts_ms = {-100, -50, 0, 50, 100, 150, 200};
  std::vector<int> delays_ms = {0, 25, 50, 75, 100};
  SearchParams search;
};

struct OodConfig {
  int k = 5;
};

// Every tunable in one place. Parsed from a plain-text sectioned key=value
// file; unknown sections or keys abort the run.
struct ExperimentConfig {
  std::uint64_t seed = 0;
  std::uint64_t track_seed = 0;  // defaults to derive_seed(seed, ...) when unset
  bool track_seed_set = false;
  TrackGenParams track;
  VehicleParams vehicle;
  SensorConfig sensor;
  ExpertParams expert;
  TrainConfig train;
  PipelineConfig pipeline;
  SweepConfig sweep;
  OodConfig ood;
  StudyConfig study;

  std::uint64_t effective_track_seed() const {
    return track_seed_set ? track_seed : derive_seed(seed, 0x7AC4);
  }
};

// Throws std::runtime_error with a line reference on any unknown section,
// unknown key, or malformed value.
ExperimentConfig parse_config_text(std::string_view text);
ExperimentConfig load_config(const std::filesystem::path& file);

// The full schema with defaults, suitable as a starting config file.
std::string default_config_text();

}  // namespace minidrive
