#include "minidrive/study.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include <chrono>

#include "minidrive/expert.hpp"
#include "minidrive/hash.hpp"
#include "minidrive/parallel.hpp"

namespace minidrive {

namespace {

using nlohmann::json;

std::string f6(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.6f", v);
  return buf;
}

std::string f3(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.3f", v);
  return buf;
}

void write_file(const std::filesystem::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + p.string());
  out << text;
}

std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + p.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Coarse wall-clock phase log on stderr; keeps CSV outputs byte-stable.
struct PhaseTimer {
  const char* name;
  std::chrono::steady_clock::time_point start = std::chrono::steady_clock::now();
  explicit PhaseTimer(const char* n) : name(n) {}
  ~PhaseTimer() {
    const auto dt = std::chrono::duration_cast<std::chrono::milliseconds>(
        std::chrono::steady_clock::now() - start);
    std::fprintf(stderr, "[study] %s: %.1f s\n", name, dt.count() / 1000.0);
  }
};

TrackGenParams effective_track_params(const ExperimentConfig& config) {
  TrackGenParams p = config.track;
  p.min_turn_radius = std::fmax(p.min_turn_radius, 1.15 * min_turning_radius(config.vehicle));
  return p;
}

std::uint64_t fold_models_hash(const std::vector<Policy>& models) {
  std::string acc;
  for (const auto& m : models) acc += hash_hex(m.content_hash());
  return fnv1a64(acc);
}

struct Csv {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
};

Csv parse_csv(const std::string& text) {
  Csv csv;
  std::istringstream in(text);
  std::string line;
  bool first = true;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> fields;
    std::stringstream ss(line);
    std::string item;
    while (std::getline(ss, item, ',')) fields.push_back(item);
    if (first) {
      csv.header = fields;
      first = false;
    } else {
      csv.rows.push_back(fields);
    }
  }
  return csv;
}

int csv_col(const Csv& csv, const std::string& name) {
  for (std::size_t i = 0; i < csv.header.size(); ++i) {
    if (csv.header[i] == name) return static_cast<int>(i);
  }
  throw std::runtime_error("csv: missing column " + name);
}

}  // namespace

LapStats recording_lap_stats(const Recording& rec) {
  LapStats stats;
  if (rec.samples.size() < 2) return stats;
  const double tick = 1.0 / rec.manifest.capture_hz;
  double max_s = 0.0;
  for (const auto& s : rec.samples) max_s = std::fmax(max_s, s.s);

  std::vector<double> lap_times;
  double lap_start = -1.0;
  bool lap_clean = true;
  for (std::size_t i = 1; i < rec.samples.size(); ++i) {
    const auto& prev = rec.samples[i - 1];
    const auto& cur = rec.samples[i];
    if (cur.t - prev.t > 1.5 * tick) lap_clean = false;  // cleaning gap inside this lap
    if (prev.s - cur.s > 0.5 * max_s) {                  // start line crossed
      if (lap_start >= 0.0 && lap_clean) lap_times.push_back(cur.t - lap_start);
      lap_start = cur.t;
      lap_clean = true;
    }
  }
  if (lap_times.empty()) return stats;
  double mean = 0.0;
  for (const double v : lap_times) mean += v;
  mean /= static_cast<double>(lap_times.size());
  double var = 0.0;
  for (const double v : lap_times) var += (v - mean) * (v - mean);
  var /= static_cast<double>(lap_times.size());
  stats.mean = mean;
  stats.stddev = std::sqrt(var);
  stats.laps = static_cast<int>(lap_times.size());
  return stats;
}

const ModelArm& SpeedStudyResult::arm(const std::string& arch, const std::string& speed) const {
  for (const auto& a : arms) {
    if (a.arch == arch && a.train_speed == speed) return a;
  }
  throw std::out_of_range("no such model arm: " + arch + "/" + speed);
}

SpeedStudyResult run_speed_study(const ExperimentConfig& config, int jobs,
                                 const std::filesystem::path& out_dir) {
  const StudyConfig& sc = config.study;
  SpeedStudyResult result;
  result.track = generate_default_track(config.effective_track_seed(), effective_track_params(config));

  CollectOptions co;
  co.duration_s = sc.collect_s;
  co.dt = config.pipeline.dt;

  PhaseTimer* collect_timer = new PhaseTimer("speed-study collect");
  co.speed_setpoint = sc.slow_speed;
  result.slow_recording =
      clean(collect_run(result.track, config.vehicle, config.expert, config.sensor, co,
                        derive_seed(config.seed, 0x510)),
            sc.clean_window_s);
  co.speed_setpoint = sc.fast_speed;
  result.fast_recording =
      clean(collect_run(result.track, config.vehicle, config.expert, config.sensor, co,
                        derive_seed(config.seed, 0xFA57)),
            sc.clean_window_s);
  if (!result.slow_recording.manifest.truncated_reason.empty() ||
      !result.fast_recording.manifest.truncated_reason.empty()) {
    throw std::runtime_error("speed-study: expert collection was truncated");
  }

  delete collect_timer;
  result.arms.resize(4);
  const char* arch_names[2] = {"single", "multi"};
  const char* speed_names[2] = {"slow", "fast"};
  for (int a = 0; a < 2; ++a) {
    for (int s = 0; s < 2; ++s) {
      ModelArm& arm = result.arms[static_cast<std::size_t>(a * 2 + s)];
      arm.arch = arch_names[a];
      arm.train_speed = speed_names[s];
      const Recording& rec = s == 0 ? result.slow_recording : result.fast_recording;
      arm.dataset = shift_labels(rec, 0, a == 0 ? 1 : 3);
      arm.fold_assignment = a == 0 ? split_block(arm.dataset.size(), sc.folds)
                                   : split_period(arm.dataset, sc.folds, sc.periods);
      arm.fold_models.resize(static_cast<std::size_t>(sc.folds));
    }
  }

  // Training jobs: folds plus one (nearly) full-data model per arm.
  struct TrainJob {
    int arm = 0;
    int fold = 0;  // sc.folds means the full-data model
  };
  std::vector<TrainJob> train_jobs;
  for (int arm_i = 0; arm_i < 4; ++arm_i) {
    for (int f = 0; f <= sc.folds; ++f) train_jobs.push_back({arm_i, f});
  }
  PhaseTimer* train_timer = new PhaseTimer("speed-study training");
  parallel_for(jobs, train_jobs.size(), [&](std::size_t ji) {
    const TrainJob job = train_jobs[ji];
    ModelArm& arm = result.arms[static_cast<std::size_t>(job.arm)];
    const PolicySpec spec = arm.arch == std::string("single")
                                ? single_frame_spec(config.sensor.ray_count)
                                : multi_frame_spec(config.sensor.ray_count);
    TrainConfig tc = config.train;
    tc.seed = derive_seed(config.seed, 0x7100 + static_cast<std::uint64_t>(job.arm) * 64 +
                                           static_cast<std::uint64_t>(job.fold));
    if (job.fold < sc.folds) {
      const DataView train = DataView::fold(arm.dataset, arm.fold_assignment, job.fold, false);
      const DataView val = DataView::fold(arm.dataset, arm.fold_assignment, job.fold, true);
      arm.fold_models[static_cast<std::size_t>(job.fold)] = train_policy(spec, train, val, tc);
    } else {
      // On-policy model: all data except a thin temporal tail kept for
      // early stopping.
      const std::size_t n = arm.dataset.size();
      const std::size_t val_n = std::max<std::size_t>(32, n / 20);
      DataView train, val;
      train.inputs = val.inputs = &arm.dataset.inputs;
      train.labels = val.labels = &arm.dataset.labels;
      for (std::size_t i = 0; i < n; ++i) {
        if (i + val_n < n) train.idx.push_back(static_cast<int>(i));
        else val.idx.push_back(static_cast<int>(i));
      }
      arm.full_model = train_policy(spec, train, val, tc);
    }
  });

  delete train_timer;
  PhaseTimer* offpol_timer = new PhaseTimer("speed-study off-policy");
  // Off-policy cross-speed evaluation (Table 3 layout).
  for (const auto& arm : result.arms) {
    const std::string novel_speed = arm.train_speed == "slow" ? "fast" : "slow";
    const ModelArm& novel_arm = result.arm(arm.arch, novel_speed);
    double same_sum = 0.0;
    double novel_sum = 0.0;
    const DataView novel_view = DataView::all(novel_arm.dataset);
    for (int f = 0; f < sc.folds; ++f) {
      const DataView val = DataView::fold(arm.dataset, arm.fold_assignment, f, true);
      same_sum += evaluate_mae(arm.fold_models[static_cast<std::size_t>(f)], val);
      novel_sum += evaluate_mae(arm.fold_models[static_cast<std::size_t>(f)], novel_view);
    }
    OffPolicyRow same_row;
    same_row.arch = arm.arch;
    same_row.train_speed = arm.train_speed;
    same_row.val_speed = arm.train_speed;
    same_row.mae = same_sum / sc.folds;
    same_row.dataset_hash = arm.dataset.source_hash;
    same_row.models_hash = fold_models_hash(arm.fold_models);
    same_row.seed = config.seed;
    result.table3.push_back(same_row);

    OffPolicyRow novel_row = same_row;
    novel_row.val_speed = novel_speed;
    novel_row.mae = novel_sum / sc.folds;
    novel_row.dataset_hash = novel_arm.dataset.source_hash;
    result.table3.push_back(novel_row);
  }

  delete offpol_timer;
  PhaseTimer* onpol_timer = new PhaseTimer("speed-study on-policy");
  // On-policy cross-speed deployment (Table 4 layout).
  struct DeployJob {
    int arm = 0;
    int speed = 0;
  };
  std::vector<DeployJob> deploy_jobs;
  for (int a = 0; a < 4; ++a) {
    for (int s = 0; s < 2; ++s) deploy_jobs.push_back({a, s});
  }
  result.table4.resize(deploy_jobs.size());
  parallel_for(jobs, deploy_jobs.size(), [&](std::size_t ji) {
    const DeployJob job = deploy_jobs[ji];
    const ModelArm& arm = result.arms[static_cast<std::size_t>(job.arm)];
    const double speed = job.speed == 0 ? sc.slow_speed : sc.fast_speed;
    PolicyController controller(arm.full_model, arm.arch == "single" ? 1 : 3);
    PipelineConfig pipeline = config.pipeline;
    pipeline.speed_setpoint = speed;
    RunOptions opt;
    opt.n_laps = sc.eval_laps;
    opt.seed = derive_seed(config.seed, 0xEA70 + static_cast<std::uint64_t>(job.arm) * 16 +
                                            static_cast<std::uint64_t>(job.speed));
    OnPolicyRow row;
    row.arch = arm.arch;
    row.train_speed = arm.train_speed;
    row.deploy_speed = speed_names[job.speed];
    row.deploy_speed_mps = speed;
    row.report = run_laps(result.track, config.vehicle, controller, config.sensor, pipeline, opt);
    count_turn_hits(row.report, &row.inside_hits, &row.outside_hits);
    row.model_hash = arm.full_model.content_hash();
    row.dataset_hash = arm.dataset.source_hash;
    row.seed = opt.seed;
    result.table4[ji] = row;
  });

  delete onpol_timer;
  PhaseTimer* ood_timer = new PhaseTimer("speed-study ood");
  {
    const ModelArm& mslow = result.arm("multi", "slow");
    const ModelArm& mfast = result.arm("multi", "fast");
    std::vector<OodStudySide> sides(2);
    sides[0].name = "slow";
    sides[0].fold_models = &mslow.fold_models;
    sides[0].dataset = &mslow.dataset;
    sides[0].fold_assignment = &mslow.fold_assignment;
    sides[0].novel_dataset = &mfast.dataset;
    sides[1].name = "fast";
    sides[1].fold_models = &mfast.fold_models;
    sides[1].dataset = &mfast.dataset;
    sides[1].fold_assignment = &mfast.fold_assignment;
    sides[1].novel_dataset = &mslow.dataset;
    result.ood = run_ood_study(sides, config.ood.k, jobs);
  }

  delete ood_timer;
  if (!out_dir.empty()) {
    std::filesystem::create_directories(out_dir);
    write_file(out_dir / "track.txt", result.track.to_text());
    save_recording(result.slow_recording, out_dir / "data" / "slow");
    save_recording(result.fast_recording, out_dir / "data" / "fast");
    std::filesystem::create_directories(out_dir / "models");
    for (const auto& arm : result.arms) {
      for (int f = 0; f < sc.folds; ++f) {
        arm.fold_models[static_cast<std::size_t>(f)].save(
            out_dir / "models" / (arm.arch + "_" + arm.train_speed + "_fold" + std::to_string(f) + ".json"));
      }
      arm.full_model.save(out_dir / "models" / (arm.arch + "_" + arm.train_speed + "_full.json"));
    }

    std::string t3 = "arch,train_speed,val_speed,mae,dataset_hash,models_hash,seed\n";
    for (const auto& r : result.table3) {
      t3 += r.arch + "," + r.train_speed + "," + r.val_speed + "," + f6(r.mae) + "," +
            hash_hex(r.dataset_hash) + "," + hash_hex(r.models_hash) + "," + std::to_string(r.seed) +
            "\n";
    }
    write_file(out_dir / "table3.csv", t3);

    std::string t4 =
        "arch,train_speed,deploy_speed,deploy_mps,laps_completed,infractions,inside_hits,"
        "outside_hits,mean_lap_s,mean_belatedness_m,model_hash,dataset_hash,seed\n";
    for (const auto& r : result.table4) {
      t4 += r.arch + "," + r.train_speed + "," + r.deploy_speed + "," + f3(r.deploy_speed_mps) +
            "," + std::to_string(r.report.laps_completed) + "," +
            std::to_string(r.report.infractions) + "," + std::to_string(r.inside_hits) + "," +
            std::to_string(r.outside_hits) + "," + f3(r.report.mean_lap_time()) + "," +
            f6(r.report.mean_spatial_belatedness) + "," + hash_hex(r.model_hash) + "," +
            hash_hex(r.dataset_hash) + "," + std::to_string(r.seed) + "\n";
    }
    write_file(out_dir / "crosspeed.csv", t4);

    std::string oc = "speed,metric,location,fold,mean_dist_same,mean_dist_novel,auroc\n";
    for (const auto& c : result.ood.cells) {
      oc += c.train_speed + "," + metric_name(c.metric) + "," + tap_name(c.location) + "," +
            std::to_string(c.fold) + "," + f6(c.mean_dist_same) + "," + f6(c.mean_dist_novel) +
            "," + f6(c.auroc) + "\n";
    }
    write_file(out_dir / "ood.csv", oc);

    std::string oa = "speed,metric,mean_dist_same,mean_dist_novel,mean_auroc\n";
    for (const auto& c : result.ood.aggregates) {
      oa += c.train_speed + "," + metric_name(c.metric) + "," + f6(c.mean_dist_same) + "," +
            f6(c.mean_dist_novel) + "," + f6(c.mean_auroc) + "\n";
    }
    write_file(out_dir / "ood_aggregate.csv", oa);

    json manifest;
    manifest["study"] = "speed";
    manifest["seed"] = config.seed;
    manifest["track_hash"] = hash_hex(result.track.content_hash());
    manifest["slow_recording_hash"] = hash_hex(result.slow_recording.content_hash());
    manifest["fast_recording_hash"] = hash_hex(result.fast_recording.content_hash());
    manifest["slow_samples"] = result.slow_recording.samples.size();
    manifest["fast_samples"] = result.fast_recording.samples.size();
    write_file(out_dir / "study_manifest.json", manifest.dump(2) + "\n");
  }
  return result;
}

DelayStudyResult run_delay_study(const ExperimentConfig& config, int jobs,
                                 const std::filesystem::path& out_dir) {
  const StudyConfig& sc = config.study;
  DelayStudyResult result;
  result.track = generate_default_track(config.effective_track_seed(), effective_track_params(config));

  CollectOptions co;
  co.duration_s = sc.delay_collect_s;
  co.dt = config.pipeline.dt;
  co.speed_setpoint = sc.delay_speed;
  result.recording = clean(collect_run(result.track, config.vehicle, config.expert, config.sensor,
                                       co, derive_seed(config.seed, 0xDE1A)),
                           sc.clean_window_s);
  if (!result.recording.manifest.truncated_reason.empty()) {
    throw std::runtime_error("delay-study: expert collection was truncated");
  }

  const LapStats stats = recording_lap_stats(result.recording);
  if (stats.laps < 10) throw std::runtime_error("delay-study: too few complete training laps");
  result.train_mean_lap_s = stats.mean;
  result.train_lap_std_s = stats.stddev;

  result.shifts_ms = config.sweep.shifts_ms;
  result.shift_models.resize(result.shifts_ms.size());
  std::vector<ShiftedDataset> datasets(result.shifts_ms.size());
  for (std::size_t i = 0; i < result.shifts_ms.size(); ++i) {
    datasets[i] = shift_labels(result.recording, result.shifts_ms[i], 1);
  }
  parallel_for(jobs, result.shifts_ms.size(), [&](std::size_t i) {
    const ShiftedDataset& ds = datasets[i];
    TrainConfig tc = config.train;
    tc.seed = derive_seed(config.seed, 0x3417 + static_cast<std::uint64_t>(
                                                    500 + result.shifts_ms[i]));
    DataView train, val;
    train.inputs = val.inputs = &ds.inputs;
    train.labels = val.labels = &ds.labels;
    if (sc.split_scheme == "random80") {
      const auto is_val = split_random80(ds.size(), tc.seed);
      for (std::size_t k = 0; k < ds.size(); ++k) {
        (is_val[k] ? val : train).idx.push_back(static_cast<int>(k));
      }
    } else {
      // Temporal 80/20: last block held out.
      const auto assign = split_block(ds.size(), 5);
      for (std::size_t k = 0; k < ds.size(); ++k) {
        (assign[k] == 4 ? val : train).idx.push_back(static_cast<int>(k));
      }
    }
    result.shift_models[i] = train_policy(single_frame_spec(config.sensor.ray_count), train, val, tc);
  });

  SweepInputs inputs;
  inputs.track = &result.track;
  inputs.vehicle = &config.vehicle;
  inputs.sensor = &config.sensor;
  inputs.models = &result.shift_models;
  inputs.shifts_ms = result.shifts_ms;
  inputs.delays_ms = config.sweep.delays_ms;
  inputs.base_compute_ms = config.pipeline.base_compute_ms;
  inputs.train_mean_lap_s = result.train_mean_lap_s;
  inputs.train_lap_std_s = result.train_lap_std_s;
  inputs.search = config.sweep.search;
  inputs.seed = derive_seed(config.seed, 0x53EE7);
  inputs.jobs = jobs;
  result.sweep = run_sweep(inputs);

  if (!out_dir.empty()) {
    std::filesystem::create_directories(out_dir);
    write_file(out_dir / "track.txt", result.track.to_text());
    save_recording(result.recording, out_dir / "data" / "fast");
    std::filesystem::create_directories(out_dir / "models");
    for (std::size_t i = 0; i < result.shifts_ms.size(); ++i) {
      result.shift_models[i].save(out_dir / "models" /
                                  ("shift_" + std::to_string(result.shifts_ms[i]) + "ms.json"));
    }

    std::string ts = "mean_lap_s,lap_std_s,task_threshold_s,laps,recording_hash,seed\n";
    ts += f3(result.train_mean_lap_s) + "," + f3(result.train_lap_std_s) + "," +
          f3(result.sweep.task_threshold_s) + "," + std::to_string(stats.laps) + "," +
          hash_hex(result.recording.content_hash()) + "," + std::to_string(config.seed) + "\n";
    write_file(out_dir / "train_stats.csv", ts);

    std::string sw = "shift_ms,added_delay_ms,fastest_lap_s,passes_task\n";
    std::string sd =
        "shift_ms,added_delay_ms,base_compute_ms,speed_mps,fastest_lap_s,passes_task,model_hash,"
        "seed\n";
    for (const auto& cell : result.sweep.cells) {
      const std::string lap = cell.result.unbounded ? "inf" : f3(cell.result.mean_lap_time);
      const std::string speed = cell.result.unbounded ? "0.000" : f3(cell.result.speed);
      sw += std::to_string(cell.shift_ms) + "," + std::to_string(cell.added_delay_ms) + "," + lap +
            "," + (cell.passes_task ? "1" : "0") + "\n";
      std::size_t model_i = 0;
      for (std::size_t i = 0; i < result.shifts_ms.size(); ++i) {
        if (result.shifts_ms[i] == cell.shift_ms) model_i = i;
      }
      sd += std::to_string(cell.shift_ms) + "," + std::to_string(cell.added_delay_ms) + "," +
            f3(inputs.base_compute_ms) + "," + speed + "," + lap + "," +
            (cell.passes_task ? "1" : "0") + "," +
            hash_hex(result.shift_models[model_i].content_hash()) + "," +
            std::to_string(config.seed) + "\n";
    }
    write_file(out_dir / "sweep.csv", sw);
    write_file(out_dir / "sweep_detail.csv", sd);

    json manifest;
    manifest["study"] = "delay";
    manifest["seed"] = config.seed;
    manifest["track_hash"] = hash_hex(result.track.content_hash());
    manifest["recording_hash"] = hash_hex(result.recording.content_hash());
    manifest["samples"] = result.recording.samples.size();
    manifest["base_compute_ms"] = config.pipeline.base_compute_ms;
    manifest["train_mean_lap_s"] = result.train_mean_lap_s;
    manifest["train_lap_std_s"] = result.train_lap_std_s;
    write_file(out_dir / "study_manifest.json", manifest.dump(2) + "\n");
  }
  return result;
}

ReportRender render_report(const std::filesystem::path& dir) {
  ReportRender render;
  std::ostringstream md;
  md << "# Study report\n\n";

  const auto have = [&](const char* name) {
    return std::filesystem::exists(dir / name);
  };

  // --- speed study ---------------------------------------------------
  if (have("table3.csv")) {
    const Csv t3 = parse_csv(read_file(dir / "table3.csv"));
    md << "## Off-policy MAE (cross-speed)\n\n";
    md << "| model | validation speed | MAE |\n|---|---|---|\n";
    const int ca = csv_col(t3, "arch");
    const int ct = csv_col(t3, "train_speed");
    const int cv = csv_col(t3, "val_speed");
    const int cm = csv_col(t3, "mae");
    for (const auto& r : t3.rows) {
      md << "| " << r[ct] << " " << r[ca] << "-frame | " << r[cv] << " | " << r[cm] << " |\n";
    }
    md << "\n";
  } else {
    render.missing.push_back("speed-study: table3.csv");
  }

  if (have("crosspeed.csv")) {
    const Csv t4 = parse_csv(read_file(dir / "crosspeed.csv"));
    md << "## On-policy infractions per " << "10" << " laps (cross-speed)\n\n";
    md << "| model | deployment speed | infractions | inside hits | outside hits |\n";
    md << "|---|---|---|---|---|\n";
    const int ca = csv_col(t4, "arch");
    const int ct = csv_col(t4, "train_speed");
    const int cd = csv_col(t4, "deploy_speed");
    const int ci = csv_col(t4, "infractions");
    const int cin = csv_col(t4, "inside_hits");
    const int cout = csv_col(t4, "outside_hits");
    for (const auto& r : t4.rows) {
      md << "| " << r[ct] << " " << r[ca] << "-frame | " << r[cd] << " | " << r[ci] << " | "
         << r[cin] << " | " << r[cout] << " |\n";
    }
    md << "\n";
  } else {
    render.missing.push_back("speed-study: crosspeed.csv");
  }

  if (have("ood_aggregate.csv")) {
    const Csv oa = parse_csv(read_file(dir / "ood_aggregate.csv"));
    md << "## Embedding distances (5-NN to reference set)\n\n";
    md << "| training data | metric | same speed | novel speed | AUROC |\n|---|---|---|---|---|\n";
    const int cs = csv_col(oa, "speed");
    const int cm = csv_col(oa, "metric");
    const int c1 = csv_col(oa, "mean_dist_same");
    const int c2 = csv_col(oa, "mean_dist_novel");
    const int c3 = csv_col(oa, "mean_auroc");
    for (const auto& r : oa.rows) {
      md << "| " << r[cs] << " | " << r[cm] << " | " << r[c1] << " | " << r[c2] << " | " << r[c3]
         << " |\n";
    }
    md << "\n";
  } else {
    render.missing.push_back("speed-study: ood_aggregate.csv");
  }

  // --- delay study ----------------------------------------------------
  if (have("sweep.csv")) {
    const Csv sw = parse_csv(read_file(dir / "sweep.csv"));
    double base_ms = 24.0;
    if (have("sweep_detail.csv")) {
      const Csv sd = parse_csv(read_file(dir / "sweep_detail.csv"));
      if (!sd.rows.empty()) base_ms = std::stod(sd.rows[0][static_cast<std::size_t>(csv_col(sd, "base_compute_ms"))]);
    }
    const int cshift = csv_col(sw, "shift_ms");
    const int cdelay = csv_col(sw, "added_delay_ms");
    const int clap = csv_col(sw, "fastest_lap_s");
    const int cpass = csv_col(sw, "passes_task");

    std::vector<int> shifts, delays;
    std::map<std::pair<int, int>, std::pair<std::string, bool>> grid;
    for (const auto& r : sw.rows) {
      const int s = std::stoi(r[static_cast<std::size_t>(cshift)]);
      const int d = std::stoi(r[static_cast<std::size_t>(cdelay)]);
      if (std::find(shifts.begin(), shifts.end(), s) == shifts.end()) shifts.push_back(s);
      if (std::find(delays.begin(), delays.end(), d) == delays.end()) delays.push_back(d);
      grid[{s, d}] = {r[static_cast<std::size_t>(clap)], r[static_cast<std::size_t>(cpass)] == "1"};
    }
    std::sort(shifts.begin(), shifts.end());
    std::sort(delays.begin(), delays.end());

    const auto shift_label = [](int s) {
      if (s == 0) return std::string("no shift");
      return std::to_string(s) + " ms";
    };

    const auto render_grid = [&](const std::vector<int>& cols, bool binary, const char* title) {
      md << "## " << title << "\n\n| computation time |";
      for (const int s : cols) md << " " << shift_label(s) << " |";
      md << "\n|---|";
      for (std::size_t i = 0; i < cols.size(); ++i) md << "---|";
      md << "\n";
      for (const int d : delays) {
        md << "| " << static_cast<int>(base_ms) + d << " ms |";
        for (const int s : cols) {
          const auto it = grid.find({s, d});
          if (it == grid.end()) {
            md << " |";
            continue;
          }
          if (binary) {
            md << (it->second.second ? " + |" : "  |");
          } else {
            md << " " << it->second.first << (it->second.second ? "*" : "") << " |";
          }
        }
        md << "\n";
      }
      md << "\n";
    };

    std::vector<int> nonneg;
    for (const int s : shifts) {
      if (s >= 0) nonneg.push_back(s);
    }
    render_grid(nonneg, true, "Delay and labeling combinations that pass the task");
    render_grid(nonneg, false, "Fastest safe lap times (s); * marks task-passing cells");
    if (nonneg.size() != shifts.size()) {
      render_grid(shifts, false, "Full grid including backward label shifts");
    }
    if (have("train_stats.csv")) {
      const Csv ts = parse_csv(read_file(dir / "train_stats.csv"));
      md << "Training-set laps: mean " << ts.rows[0][static_cast<std::size_t>(csv_col(ts, "mean_lap_s"))]
         << " s, sigma " << ts.rows[0][static_cast<std::size_t>(csv_col(ts, "lap_std_s"))]
         << " s, task threshold " << ts.rows[0][static_cast<std::size_t>(csv_col(ts, "task_threshold_s"))]
         << " s.\n\n";
    }
  } else {
    render.missing.push_back("delay-study: sweep.csv");
  }

  if (!render.missing.empty()) {
    md << "## Missing artifacts\n\n";
    for (const auto& f : render.missing) md << "- " << f << "\n";
  }
  render.markdown = md.str();
  return render;
}

}  // namespace minidrive
