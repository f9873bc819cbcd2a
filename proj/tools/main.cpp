#include <cstdio>
#include <exception>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "minidrive/closedloop.hpp"
#include "minidrive/config.hpp"
#include "minidrive/expert.hpp"
#include "minidrive/hash.hpp"
#include "minidrive/ood.hpp"
#include "minidrive/parallel.hpp"
#include "minidrive/study.hpp"

namespace {

using namespace minidrive;

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitStudy = 3;
constexpr int kExitPartial = 4;

struct GlobalArgs {
  std::string config_path;
  std::uint64_t seed = 0;
  bool seed_set = false;
  std::string out;
  int jobs = default_jobs();
};

// Loads the config file (if any) and applies the --seed override.
ExperimentConfig resolve_config(const GlobalArgs& g) {
  ExperimentConfig cfg;
  if (!g.config_path.empty()) cfg = load_config(g.config_path);
  if (g.seed_set) cfg.seed = g.seed;
  return cfg;
}

Track track_for(const ExperimentConfig& cfg, const std::string& track_file) {
  if (!track_file.empty()) {
    std::ifstream in(track_file);
    if (!in) throw std::runtime_error("cannot open track file " + track_file);
    std::stringstream ss;
    ss << in.rdbuf();
    return Track::from_text(ss.str());
  }
  TrackGenParams p = cfg.track;
  p.min_turn_radius = std::max(p.min_turn_radius, 1.15 * min_turning_radius(cfg.vehicle));
  return generate_default_track(cfg.effective_track_seed(), p);
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << text;
}

void print_lap_report(const LapReport& r) {
  std::printf("laps_completed=%d infractions=%d mean_lap_s=%.3f decisions=%d "
              "mean_period_ms=%.1f mean_belatedness_m=%.4f max_frame_age_ms=%.1f%s\n",
              r.laps_completed, r.infractions, r.mean_lap_time(), r.decisions,
              r.mean_decision_period * 1000.0, r.mean_spatial_belatedness,
              r.max_frame_age * 1000.0, r.timed_out ? " (timed out)" : "");
  int inside = 0, outside = 0;
  count_turn_hits(r, &inside, &outside);
  if (r.infractions > 0) {
    std::printf("turn-adjacent hits: inside=%d outside=%d\n", inside, outside);
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"minidrive: deterministic closed-track driving simulator and behavioral-cloning "
               "study harness"};
  app.require_subcommand(1);
  app.fallthrough();

  GlobalArgs g;
  app.add_option("--config", g.config_path, "Experiment config file (sectioned key=value)");
  app.add_option("--seed", g.seed, "Global seed override")->each([&](const std::string&) {
    g.seed_set = true;
  });
  app.add_option("--out", g.out, "Output file or directory");
  app.add_option("--jobs", g.jobs, "Worker threads for parallel stages");

  // ---- track-gen -----------------------------------------------------
  auto* cmd_track = app.add_subcommand("track-gen", "Generate (or re-export) a track file");
  std::string track_import;
  cmd_track->add_option("--import", track_import, "Validate and re-export an existing track file");

  // ---- collect -------------------------------------------------------
  auto* cmd_collect = app.add_subcommand("collect", "Record an expert driving run");
  std::string collect_track;
  double collect_speed = 0.70;
  double collect_duration = 60.0;
  bool collect_quantize = false;
  double clean_window = 5.0;
  std::string collect_timestamp;
  std::string raster_dump;
  cmd_collect->add_option("--track", collect_track, "Track file (generated from seed if absent)");
  cmd_collect->add_option("--speed", collect_speed, "Speed setpoint, m/s");
  cmd_collect->add_option("--duration", collect_duration, "Run duration, seconds");
  cmd_collect->add_flag("--quantize", collect_quantize, "Quantized {-1,0,+1} expert commands");
  cmd_collect->add_option("--clean-window-s", clean_window,
                          "Seconds removed before each infraction (0 disables cleaning)");
  cmd_collect->add_option("--timestamp", collect_timestamp, "created_at manifest stamp");
  cmd_collect->add_option("--dump-raster", raster_dump, "Write first frame as a PGM occupancy grid");

  // ---- shift ---------------------------------------------------------
  auto* cmd_shift = app.add_subcommand("shift", "Build a label-shifted dataset from a recording");
  std::string shift_in;
  int shift_ms = 0;
  int shift_stack = 1;
  cmd_shift->add_option("--in", shift_in, "Recording directory")->required();
  cmd_shift->add_option("--shift-ms", shift_ms, "Label shift in ms (multiple of the tick)");
  cmd_shift->add_option("--stack", shift_stack, "Frames per input (1 or 3)");

  // ---- split ---------------------------------------------------------
  auto* cmd_split = app.add_subcommand("split", "Write a fold assignment for a shifted dataset");
  std::string split_in, split_scheme = "block";
  int split_folds = 5, split_periods = 10;
  cmd_split->add_option("--in", split_in, "Shifted dataset directory")->required();
  cmd_split->add_option("--scheme", split_scheme, "block | period | random80");
  cmd_split->add_option("--folds", split_folds, "Fold count");
  cmd_split->add_option("--periods", split_periods, "Periods (period scheme)");

  // ---- train ---------------------------------------------------------
  auto* cmd_train = app.add_subcommand("train", "Train a steering policy");
  std::string train_data, train_spec = "single", train_split;
  int train_fold = -1;
  cmd_train->add_option("--data", train_data, "Shifted dataset directory")->required();
  cmd_train->add_option("--spec", train_spec, "single | multi");
  cmd_train->add_option("--split", train_split, "Fold assignment JSON (from `split`)");
  cmd_train->add_option("--fold", train_fold, "Validation fold id (with --split)");

  // ---- eval-off ------------------------------------------------------
  auto* cmd_evaloff = app.add_subcommand("eval-off", "Off-policy MAE of a policy on a dataset");
  std::string evaloff_model, evaloff_data;
  cmd_evaloff->add_option("--model", evaloff_model, "Policy JSON file")->required();
  cmd_evaloff->add_option("--data", evaloff_data, "Shifted dataset directory")->required();

  // ---- eval-on -------------------------------------------------------
  auto* cmd_evalon = app.add_subcommand("eval-on", "Closed-loop laps with an injectable delay");
  std::string evalon_model, evalon_track, evalon_trace;
  double evalon_speed = 0.70;
  int evalon_laps = 10;
  double evalon_added = 0.0;
  bool evalon_expert = false;
  cmd_evalon->add_option("--model", evalon_model, "Policy JSON file");
  cmd_evalon->add_flag("--expert", evalon_expert, "Deploy the scripted expert instead of a model");
  cmd_evalon->add_option("--track", evalon_track, "Track file (generated from seed if absent)");
  cmd_evalon->add_option("--speed", evalon_speed, "Deployment speed setpoint, m/s");
  cmd_evalon->add_option("--laps", evalon_laps, "Lap count");
  cmd_evalon->add_option("--delay-ms", evalon_added, "Added compute delay, ms");
  cmd_evalon->add_option("--trace", evalon_trace, "Write per-decision trace JSONL");

  // ---- sweep ---------------------------------------------------------
  auto* cmd_sweep = app.add_subcommand("sweep", "Shift x delay fastest-safe-lap grid");
  std::string sweep_models, sweep_track, sweep_data;
  std::vector<int> sweep_shifts, sweep_delays;
  cmd_sweep->add_option("--models-dir", sweep_models,
                        "Directory with shift_<ms>ms.json policies")->required();
  cmd_sweep->add_option("--track", sweep_track, "Track file (generated from seed if absent)");
  cmd_sweep->add_option("--data", sweep_data, "Training recording (for the lap-time threshold)")
      ->required();
  cmd_sweep->add_option("--shifts", sweep_shifts, "Shift list, ms");
  cmd_sweep->add_option("--delays", sweep_delays, "Added delay list, ms");

  // ---- ood -----------------------------------------------------------
  auto* cmd_ood = app.add_subcommand("ood", "kNN embedding-distance OOD study");
  std::string ood_models, ood_slow, ood_fast;
  cmd_ood->add_option("--models-dir", ood_models,
                      "Directory with multi_{slow,fast}_fold<k>.json policies")->required();
  cmd_ood->add_option("--slow", ood_slow, "Slow recording directory")->required();
  cmd_ood->add_option("--fast", ood_fast, "Fast recording directory")->required();

  // ---- studies and report ---------------------------------------------
  auto* cmd_speed = app.add_subcommand("speed-study", "Full task-shift study (tables 3/4 + OOD)");
  auto* cmd_delay = app.add_subcommand("delay-study", "Full delay/label-shift study (tables 5/6)");
  auto* cmd_report = app.add_subcommand("report", "Render markdown tables from study artifacts");
  std::string report_in;
  cmd_report->add_option("--in", report_in, "Artifact directory")->required();

  CLI11_PARSE(app, argc, argv);

  ExperimentConfig cfg;
  try {
    cfg = resolve_config(g);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return kExitConfig;
  }

  try {
    if (cmd_track->parsed()) {
      Track track = track_import.empty() ? track_for(cfg, "") : track_for(cfg, track_import);
      const std::string out = g.out.empty() ? "track.txt" : g.out;
      write_text(out, track.to_text());
      std::printf("track: length=%.3f m, half_width=%.3f m, turns=%zu, hash=%s -> %s\n",
                  track.total_length(), track.half_width(), track.turn_segments().size(),
                  hash_hex(track.content_hash()).c_str(), out.c_str());
      return kExitOk;
    }

    if (cmd_collect->parsed()) {
      if (g.out.empty()) throw std::runtime_error("collect: --out directory required");
      const Track track = track_for(cfg, collect_track);
      ExpertParams expert = cfg.expert;
      expert.quantize = collect_quantize || expert.quantize;
      CollectOptions co;
      co.duration_s = collect_duration;
      co.speed_setpoint = collect_speed;
      co.dt = cfg.pipeline.dt;
      co.created_at = collect_timestamp;
      Recording rec = collect_run(track, cfg.vehicle, expert, cfg.sensor, co,
                                  derive_seed(cfg.seed, 0xC0));
      if (clean_window > 0.0) rec = clean(rec, clean_window);
      save_recording(rec, g.out);
      if (!raster_dump.empty() && !rec.samples.empty()) {
        const auto grid = rasterize_frame(rec.samples.front().frame, cfg.sensor);
        std::ostringstream pgm;
        pgm << "P2\n32 16\n1\n";
        for (int r = 15; r >= 0; --r) {
          for (int c = 0; c < 32; ++c) pgm << int(grid[static_cast<std::size_t>(r) * 32 + c]) << ' ';
          pgm << '\n';
        }
        write_text(raster_dump, pgm.str());
      }
      std::printf("recorded %zu samples (%s) hash=%s -> %s\n", rec.samples.size(),
                  rec.manifest.truncated_reason.empty()
                      ? "complete"
                      : rec.manifest.truncated_reason.c_str(),
                  hash_hex(rec.content_hash()).c_str(), g.out.c_str());
      return kExitOk;
    }

    if (cmd_shift->parsed()) {
      if (g.out.empty()) throw std::runtime_error("shift: --out directory required");
      const Recording rec = load_recording(shift_in);
      const ShiftedDataset ds = shift_labels(rec, shift_ms, shift_stack);
      save_shifted(ds, g.out);
      std::printf("shifted dataset: %zu pairs (%d dropped), shift=%d ms, stack=%d -> %s\n",
                  ds.size(), ds.dropped_pairs, ds.shift_ms, ds.stack_size, g.out.c_str());
      return kExitOk;
    }

    if (cmd_split->parsed()) {
      if (g.out.empty()) throw std::runtime_error("split: --out file required");
      const ShiftedDataset ds = load_shifted(split_in);
      std::vector<int> assignment;
      if (split_scheme == "block") {
        assignment = split_block(ds.size(), split_folds);
      } else if (split_scheme == "period") {
        assignment = split_period(ds, split_folds, split_periods);
      } else if (split_scheme == "random80") {
        const auto is_val = split_random80(ds.size(), cfg.seed);
        assignment.assign(ds.size(), 0);
        for (std::size_t i = 0; i < ds.size(); ++i) assignment[i] = is_val[i] ? 1 : 0;
      } else {
        throw std::runtime_error("split: unknown scheme " + split_scheme);
      }
      std::ostringstream js;
      js << "{\"scheme\":\"" << split_scheme << "\",\"folds\":" << split_folds
         << ",\"assignment\":[";
      for (std::size_t i = 0; i < assignment.size(); ++i) {
        if (i) js << ',';
        js << assignment[i];
      }
      js << "]}\n";
      write_text(g.out, js.str());
      std::printf("fold assignment (%s) for %zu pairs -> %s\n", split_scheme.c_str(), ds.size(),
                  g.out.c_str());
      return kExitOk;
    }

    if (cmd_train->parsed()) {
      if (g.out.empty()) throw std::runtime_error("train: --out file required");
      const ShiftedDataset ds = load_shifted(train_data);
      const PolicySpec spec = train_spec == "multi" ? multi_frame_spec(ds.input_dim / 3)
                                                    : single_frame_spec(ds.input_dim);
      if (train_spec != "single" && train_spec != "multi") {
        throw std::runtime_error("train: --spec must be single or multi");
      }
      DataView train, val;
      train.inputs = val.inputs = &ds.inputs;
      train.labels = val.labels = &ds.labels;
      if (!train_split.empty()) {
        if (train_fold < 0) throw std::runtime_error("train: --fold required with --split");
        std::ifstream in(train_split);
        if (!in) throw std::runtime_error("train: cannot open " + train_split);
        std::stringstream ss;
        ss << in.rdbuf();
        const auto j = nlohmann::json::parse(ss.str());
        const auto assignment = j.at("assignment").get<std::vector<int>>();
        if (assignment.size() != ds.size()) {
          throw std::runtime_error("train: assignment size does not match dataset");
        }
        for (std::size_t i = 0; i < ds.size(); ++i) {
          if (assignment[i] < 0) continue;
          (assignment[i] == train_fold ? val : train).idx.push_back(static_cast<int>(i));
        }
      } else {
        // Temporal 80/20 holdout.
        const auto assignment = split_block(ds.size(), 5);
        for (std::size_t i = 0; i < ds.size(); ++i) {
          (assignment[i] == 4 ? val : train).idx.push_back(static_cast<int>(i));
        }
      }
      TrainConfig tc = cfg.train;
      tc.seed = derive_seed(cfg.seed, 0x7124);
      TrainHistory hist;
      const Policy policy = train_policy(spec, train, val, tc, &hist);
      policy.save(g.out);
      std::printf("trained %s policy: %zu train / %zu val pairs, best epoch %d, val MSE %.6f -> %s\n",
                  train_spec.c_str(), train.size(), val.size(), hist.best_epoch,
                  hist.best_epoch >= 0 ? hist.val_loss[static_cast<std::size_t>(hist.best_epoch)]
                                       : -1.0,
                  g.out.c_str());
      return kExitOk;
    }

    if (cmd_evaloff->parsed()) {
      const Policy policy = Policy::load(evaloff_model);
      const ShiftedDataset ds = load_shifted(evaloff_data);
      const double mae = evaluate_mae(policy, DataView::all(ds));
      std::printf("off-policy MAE = %.6f over %zu pairs\n", mae, ds.size());
      if (!g.out.empty()) {
        write_text(g.out, "mae,pairs\n" + std::to_string(mae) + "," + std::to_string(ds.size()) + "\n");
      }
      return kExitOk;
    }

    if (cmd_evalon->parsed()) {
      const Track track = track_for(cfg, evalon_track);
      PipelineConfig pipeline = cfg.pipeline;
      pipeline.added_delay_ms = evalon_added;
      pipeline.speed_setpoint = evalon_speed;
      RunOptions opt;
      opt.n_laps = evalon_laps;
      opt.seed = derive_seed(cfg.seed, 0xE0A1);
      std::ofstream trace_out;
      if (!evalon_trace.empty()) {
        trace_out.open(evalon_trace, std::ios::binary);
        opt.trace = &trace_out;
      }
      LapReport report;
      if (evalon_expert) {
        ExpertController controller(track, cfg.vehicle, cfg.expert);
        report = run_laps(track, cfg.vehicle, controller, cfg.sensor, pipeline, opt);
      } else {
        if (evalon_model.empty()) throw std::runtime_error("eval-on: --model or --expert required");
        const Policy policy = Policy::load(evalon_model);
        PolicyController controller(policy, policy.input_dim() == cfg.sensor.ray_count ? 1 : 3);
        report = run_laps(track, cfg.vehicle, controller, cfg.sensor, pipeline, opt);
      }
      print_lap_report(report);
      return kExitOk;
    }

    if (cmd_sweep->parsed()) {
      if (g.out.empty()) throw std::runtime_error("sweep: --out directory required");
      const Track track = track_for(cfg, sweep_track);
      const Recording rec = load_recording(sweep_data);
      const LapStats stats = recording_lap_stats(rec);
      const std::vector<int> shifts = sweep_shifts.empty() ? cfg.sweep.shifts_ms : sweep_shifts;
      const std::vector<int> delays = sweep_delays.empty() ? cfg.sweep.delays_ms : sweep_delays;
      std::vector<Policy> models;
      for (const int s : shifts) {
        models.push_back(Policy::load(std::filesystem::path(sweep_models) /
                                      ("shift_" + std::to_string(s) + "ms.json")));
      }
      SweepInputs inputs;
      inputs.track = &track;
      inputs.vehicle = &cfg.vehicle;
      inputs.sensor = &cfg.sensor;
      inputs.models = &models;
      inputs.shifts_ms = shifts;
      inputs.delays_ms = delays;
      inputs.base_compute_ms = cfg.pipeline.base_compute_ms;
      inputs.train_mean_lap_s = stats.mean;
      inputs.train_lap_std_s = stats.stddev;
      inputs.search = cfg.sweep.search;
      inputs.seed = derive_seed(cfg.seed, 0x53EE7);
      inputs.jobs = g.jobs;
      const SweepReport report = run_sweep(inputs);
      std::filesystem::create_directories(g.out);
      std::string sw = "shift_ms,added_delay_ms,fastest_lap_s,passes_task\n";
      for (const auto& cell : report.cells) {
        sw += std::to_string(cell.shift_ms) + "," + std::to_string(cell.added_delay_ms) + "," +
              (cell.result.unbounded ? "inf" : std::to_string(cell.result.mean_lap_time)) + "," +
              (cell.passes_task ? "1" : "0") + "\n";
      }
      write_text((std::filesystem::path(g.out) / "sweep.csv").string(), sw);
      std::printf("sweep complete: %zu cells, task threshold %.3f s -> %s\n", report.cells.size(),
                  report.task_threshold_s, g.out.c_str());
      return kExitOk;
    }

    if (cmd_ood->parsed()) {
      const Recording slow = load_recording(ood_slow);
      const Recording fast = load_recording(ood_fast);
      ShiftedDataset ds_slow = shift_labels(slow, 0, 3);
      ShiftedDataset ds_fast = shift_labels(fast, 0, 3);
      const auto folds_slow = split_period(ds_slow, cfg.study.folds, cfg.study.periods);
      const auto folds_fast = split_period(ds_fast, cfg.study.folds, cfg.study.periods);
      std::vector<Policy> models_slow, models_fast;
      for (int f = 0; f < cfg.study.folds; ++f) {
        models_slow.push_back(Policy::load(std::filesystem::path(ood_models) /
                                           ("multi_slow_fold" + std::to_string(f) + ".json")));
        models_fast.push_back(Policy::load(std::filesystem::path(ood_models) /
                                           ("multi_fast_fold" + std::to_string(f) + ".json")));
      }
      std::vector<OodStudySide> sides(2);
      sides[0] = {"slow", &models_slow, &ds_slow, &folds_slow, &ds_fast};
      sides[1] = {"fast", &models_fast, &ds_fast, &folds_fast, &ds_slow};
      const OodReport report = run_ood_study(sides, cfg.ood.k, g.jobs);
      std::string oc = "speed,metric,location,fold,mean_dist_same,mean_dist_novel,auroc\n";
      for (const auto& c : report.cells) {
        oc += c.train_speed + "," + metric_name(c.metric) + "," + tap_name(c.location) + "," +
              std::to_string(c.fold) + "," + std::to_string(c.mean_dist_same) + "," +
              std::to_string(c.mean_dist_novel) + "," + std::to_string(c.auroc) + "\n";
      }
      const std::string out = g.out.empty() ? "ood.csv" : g.out;
      write_text(out, oc);
      for (const auto& a : report.aggregates) {
        std::printf("%s/%s: same=%.4f novel=%.4f auroc=%.4f\n", a.train_speed.c_str(),
                    metric_name(a.metric).c_str(), a.mean_dist_same, a.mean_dist_novel,
                    a.mean_auroc);
      }
      return kExitOk;
    }

    if (cmd_speed->parsed()) {
      if (g.out.empty()) throw std::runtime_error("speed-study: --out directory required");
      run_speed_study(cfg, g.jobs, g.out);
      std::printf("speed study artifacts in %s\n", g.out.c_str());
      return kExitOk;
    }

    if (cmd_delay->parsed()) {
      if (g.out.empty()) throw std::runtime_error("delay-study: --out directory required");
      run_delay_study(cfg, g.jobs, g.out);
      std::printf("delay study artifacts in %s\n", g.out.c_str());
      return kExitOk;
    }

    if (cmd_report->parsed()) {
      const ReportRender render = render_report(report_in);
      const std::string out = g.out.empty() ? (std::filesystem::path(report_in) / "report.md").string()
                                            : g.out;
      write_text(out, render.markdown);
      std::fputs(render.markdown.c_str(), stdout);
      if (!render.complete()) {
        for (const auto& m : render.missing) std::fprintf(stderr, "missing: %s\n", m.c_str());
        return kExitPartial;
      }
      return kExitOk;
    }
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitStudy;
  }
  return kExitOk;
}
