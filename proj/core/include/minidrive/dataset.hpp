#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "minidrive/expert_params.hpp"

namespace minidrive {

struct Sample {
  double t = 0.0;                  // s, strictly increasing at 1/capture_hz
  std::vector<double> frame;       // ray distances
  double steer = 0.0;              // normalized, [-1, 1]
  double speed = 0.0;              // m/s, actual
  int lap = 0;
  double s = 0.0;                  // arc-length coordinate
  bool infraction_window = false;  // wall contact at this tick
  bool perturb_mask = false;       // within 0.25 s of an injected kick

  bool operator==(const Sample&) const = default;
};

struct RecordingManifest {
  double capture_hz = 20.0;
  int ray_count = 32;
  double fov = 2.792526803190927;
  std::uint64_t track_hash = 0;
  ExpertParams expert;
  double speed_setpoint = 0.0;
  std::uint64_t seed = 0;
  // Deterministic by default so byte-identical reruns hold; callers may set
  // a wall-clock stamp for provenance.
  std::string created_at;
  std::string truncated_reason;
  int cleaned_removed = 0;

  bool operator==(const RecordingManifest&) const = default;
};

struct Recording {
  RecordingManifest manifest;
  std::vector<Sample> samples;

  bool operator==(const Recording&) const = default;
  std::uint64_t content_hash() const;
};

// Removes [t_inf - window_before, t_inf + window_after] around every
// infraction mark and renumbers laps over the survivors.
Recording clean(const Recording& rec, double window_before_s = 5.0, double window_after_s = 1.0);

// Training pairs: frame stacks (oldest first, flattened) matched with a
// steering label shift_ms later. Pairs crossing gaps, masks, or the
// recording boundary are dropped.
struct ShiftedDataset {
  int input_dim = 0;
  int stack_size = 1;
  int shift_ms = 0;
  std::vector<std::vector<double>> inputs;
  std::vector<double> labels;
  std::vector<double> newest_frame_times;
  std::vector<double> label_times;
  std::vector<int> source_index;  // newest frame's sample index in the recording
  std::uint64_t source_hash = 0;
  int dropped_pairs = 0;

  std::size_t size() const { return inputs.size(); }
};

// shift_ms must be a multiple of the 50 ms tick (20 Hz recordings).
ShiftedDataset shift_labels(const Recording& rec, int shift_ms, int stack_size = 1);

// 5 contiguous temporal blocks, remainder distributed to the earliest
// blocks. Returns a fold id per index.
std::vector<int> split_block(std::size_t n, int folds = 5);

// Period scheme for stacked samples: the dataset is cut into `periods`
// contiguous periods, each period into `folds` contiguous slices (slice k to
// fold k). The first stack_size-1 pairs after every slice boundary are
// dropped (-1) so no frame is shared between folds.
std::vector<int> split_period(const ShiftedDataset& ds, int folds = 5, int periods = 10);

// Seeded 80/20 split; true marks a validation index.
std::vector<bool> split_random80(std::size_t n, std::uint64_t seed);

// Directory layout: manifest.json + samples.jsonl, floats at 17 significant
// digits so the round trip is lossless.
void save_recording(const Recording& rec, const std::filesystem::path& dir);
Recording load_recording(const std::filesystem::path& dir);

std::string recording_samples_text(const Recording& rec);

// Shifted datasets persist as manifest.json + pairs.jsonl with provenance
// (source hash, shift, drop count).
void save_shifted(const ShiftedDataset& ds, const std::filesystem::path& dir);
ShiftedDataset load_shifted(const std::filesystem::path& dir);

}  // namespace minidrive
