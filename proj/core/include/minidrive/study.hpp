#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "minidrive/closedloop.hpp"
#include "minidrive/config.hpp"
#include "minidrive/dataset.hpp"
#include "minidrive/learner.hpp"
#include "minidrive/ood.hpp"
#include "minidrive/track.hpp"

namespace minidrive {

struct OffPolicyRow {
  std::string arch;         // "single" / "multi"
  std::string train_speed;  // "slow" / "fast"
  std::string val_speed;
  double mae = 0.0;
  std::uint64_t dataset_hash = 0;
  std::uint64_t models_hash = 0;  // folded over the fold models
  std::uint64_t seed = 0;
};

struct OnPolicyRow {
  std::string arch;
  std::string train_speed;
  std::string deploy_speed;
  double deploy_speed_mps = 0.0;
  LapReport report;
  int inside_hits = 0;
  int outside_hits = 0;
  std::uint64_t model_hash = 0;
  std::uint64_t dataset_hash = 0;
  std::uint64_t seed = 0;
};

// One (architecture, training speed) arm of the speed study.
struct ModelArm {
  std::string arch;
  std::string train_speed;
  ShiftedDataset dataset;
  std::vector<int> fold_assignment;
  std::vector<Policy> fold_models;
  Policy full_model;  // trained on (almost) all data for on-policy runs
};

struct SpeedStudyResult {
  Track track;
  Recording slow_recording;  // cleaned
  Recording fast_recording;
  std::vector<ModelArm> arms;  // single/slow, single/fast, multi/slow, multi/fast
  std::vector<OffPolicyRow> table3;
  std::vector<OnPolicyRow> table4;
  OodReport ood;

  const ModelArm& arm(const std::string& arch, const std::string& speed) const;
};

SpeedStudyResult run_speed_study(const ExperimentConfig& config, int jobs,
                                 const std::filesystem::path& out_dir);

struct DelayStudyResult {
  Track track;
  Recording recording;  // cleaned fast-speed data
  std::vector<int> shifts_ms;
  std::vector<Policy> shift_models;
  double train_mean_lap_s = 0.0;
  double train_lap_std_s = 0.0;
  SweepReport sweep;
};

DelayStudyResult run_delay_study(const ExperimentConfig& config, int jobs,
                                 const std::filesystem::path& out_dir);

struct ReportRender {
  std::string markdown;
  std::vector<std::string> missing;  // artifact files that were absent
  bool complete() const { return missing.empty(); }
};

// Renders the paper-layout tables from a study artifact directory. Missing
// pieces are listed and the rest rendered.
ReportRender render_report(const std::filesystem::path& artifact_dir);

// Mean/stddev of infraction-free lap times in a recording (complete laps
// with contiguous coverage only).
struct LapStats {
  double mean = 0.0;
  double stddev = 0.0;
  int laps = 0;
};
LapStats recording_lap_stats(const Recording& rec);

}  // namespace minidrive
