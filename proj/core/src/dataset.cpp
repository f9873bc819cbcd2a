#include "minidrive/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "minidrive/hash.hpp"
#include "minidrive/rng.hpp"

namespace minidrive {

namespace {

using nlohmann::json;

void append_g17(std::string& out, double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  out += buf;
}

json expert_to_json(const ExpertParams& e) {
  return json{{"base_lookahead", e.base_lookahead},
              {"lookahead_per_speed", e.lookahead_per_speed},
              {"steer_gain", e.steer_gain},
              {"quantize", e.quantize},
              {"quantize_dead_band", e.quantize_dead_band},
              {"perturb_prob", e.perturb_prob},
              {"perturb_sigma", e.perturb_sigma},
              {"perturb_mask_s", e.perturb_mask_s}};
}

ExpertParams expert_from_json(const json& j) {
  ExpertParams e;
  e.base_lookahead = j.at("base_lookahead").get<double>();
  e.lookahead_per_speed = j.at("lookahead_per_speed").get<double>();
  e.steer_gain = j.at("steer_gain").get<double>();
  e.quantize = j.at("quantize").get<bool>();
  e.quantize_dead_band = j.at("quantize_dead_band").get<double>();
  e.perturb_prob = j.at("perturb_prob").get<double>();
  e.perturb_sigma = j.at("perturb_sigma").get<double>();
  e.perturb_mask_s = j.at("perturb_mask_s").get<double>();
  return e;
}

}  // namespace

std::string recording_samples_text(const Recording& rec) {
  std::string out;
  out.reserve(rec.samples.size() * (40 + rec.manifest.ray_count * 12));
  for (const Sample& s : rec.samples) {
    out += "{\"t\":";
    append_g17(out, s.t);
    out += ",\"frame\":[";
    for (std::size_t i = 0; i < s.frame.size(); ++i) {
      if (i) out += ',';
      append_g17(out, s.frame[i]);
    }
    out += "],\"steer\":";
    append_g17(out, s.steer);
    out += ",\"speed\":";
    append_g17(out, s.speed);
    out += ",\"lap\":" + std::to_string(s.lap);
    out += ",\"s\":";
    append_g17(out, s.s);
    out += ",\"infraction_window\":";
    out += s.infraction_window ? "true" : "false";
    out += ",\"perturb_mask\":";
    out += s.perturb_mask ? "true" : "false";
    out += "}\n";
  }
  return out;
}

std::uint64_t Recording::content_hash() const { return fnv1a64(recording_samples_text(*this)); }

Recording clean(const Recording& rec, double window_before_s, double window_after_s) {
  std::vector<double> marks;
  for (const Sample& s : rec.samples) {
    if (s.infraction_window) marks.push_back(s.t);
  }
  Recording out;
  out.manifest = rec.manifest;
  if (marks.empty()) {
    out.samples = rec.samples;
    return out;
  }
  out.samples.reserve(rec.samples.size());
  for (const Sample& s : rec.samples) {
    bool removed = false;
    for (const double m : marks) {
      if (s.t >= m - window_before_s - 1e-9 && s.t <= m + window_after_s + 1e-9) {
        removed = true;
        break;
      }
    }
    if (!removed) out.samples.push_back(s);
  }
  out.manifest.cleaned_removed += static_cast<int>(rec.samples.size() - out.samples.size());

  // Renumber laps by counting start-line wraps over the survivors.
  double max_s = 0.0;
  for (const Sample& s : out.samples) max_s = std::fmax(max_s, s.s);
  int lap = 0;
  double prev_s = out.samples.empty() ? 0.0 : out.samples.front().s;
  for (Sample& s : out.samples) {
    if (prev_s - s.s > 0.5 * max_s) ++lap;
    prev_s = s.s;
    s.lap = lap;
  }
  return out;
}

ShiftedDataset shift_labels(const Recording& rec, int shift_ms, int stack_size) {
  const double hz = rec.manifest.capture_hz;
  const int tick_ms = static_cast<int>(std::llround(1000.0 / hz));
  if (tick_ms <= 0 || std::fabs(1000.0 / hz - tick_ms) > 1e-9) {
    throw std::invalid_argument("shift_labels: capture rate does not define an integer tick");
  }
  if (shift_ms % tick_ms != 0) {
    throw std::invalid_argument("shift_labels: shift must be a multiple of " +
                                std::to_string(tick_ms) + " ms");
  }
  if (stack_size != 1 && stack_size != 3) {
    throw std::invalid_argument("shift_labels: stack_size must be 1 or 3");
  }
  const int offset = shift_ms / tick_ms;
  const double tick_s = 1.0 / hz;

  ShiftedDataset ds;
  ds.stack_size = stack_size;
  ds.shift_ms = shift_ms;
  ds.input_dim = stack_size * rec.manifest.ray_count;
  ds.source_hash = rec.content_hash();

  const auto& samples = rec.samples;
  const long n = static_cast<long>(samples.size());
  for (long i = 0; i < n; ++i) {
    const long j = i + offset;
    const long first = i - (stack_size - 1);
    if (first < 0 || j < 0 || j >= n) continue;
    bool ok = true;
    // Frame window must be gap-free and unmasked.
    for (long k = first; k <= i && ok; ++k) {
      if (samples[k].perturb_mask || samples[k].infraction_window) ok = false;
      if (k > first &&
          std::fabs(samples[k].t - samples[k - 1].t - tick_s) > 1e-6) {
        ok = false;
      }
    }
    // Label must sit exactly shift_ms after the newest frame (no gap between).
    if (ok && std::fabs(samples[j].t - samples[i].t - shift_ms / 1000.0) > 1e-6) ok = false;
    if (ok && (samples[j].perturb_mask || samples[j].infraction_window)) ok = false;
    if (!ok) continue;

    std::vector<double> input;
    input.reserve(static_cast<std::size_t>(ds.input_dim));
    for (long k = first; k <= i; ++k) {
      input.insert(input.end(), samples[k].frame.begin(), samples[k].frame.end());
    }
    ds.inputs.push_back(std::move(input));
    ds.labels.push_back(samples[j].steer);
    ds.newest_frame_times.push_back(samples[i].t);
    ds.label_times.push_back(samples[j].t);
    ds.source_index.push_back(static_cast<int>(i));
  }
  ds.dropped_pairs = static_cast<int>(n - static_cast<long>(ds.inputs.size()));
  return ds;
}

std::vector<int> split_block(std::size_t n, int folds) {
  if (folds < 2) throw std::invalid_argument("split_block: need at least 2 folds");
  if (n < static_cast<std::size_t>(folds)) {
    throw std::invalid_argument("split_block: too few samples for the fold count");
  }
  std::vector<int> assign(n, 0);
  const std::size_t base = n / static_cast<std::size_t>(folds);
  const std::size_t rem = n % static_cast<std::size_t>(folds);
  std::size_t idx = 0;
  for (int f = 0; f < folds; ++f) {
    const std::size_t size = base + (static_cast<std::size_t>(f) < rem ? 1 : 0);
    for (std::size_t k = 0; k < size; ++k) assign[idx++] = f;
  }
  return assign;
}

std::vector<int> split_period(const ShiftedDataset& ds, int folds, int periods) {
  if (periods < folds) throw std::invalid_argument("split_period: periods must be >= folds");
  const std::size_t n = ds.size();
  if (n < static_cast<std::size_t>(periods * folds)) {
    throw std::invalid_argument("split_period: too few samples");
  }
  std::vector<int> assign(n, -1);
  std::vector<std::size_t> slice_starts;

  const std::size_t pbase = n / static_cast<std::size_t>(periods);
  const std::size_t prem = n % static_cast<std::size_t>(periods);
  std::size_t pos = 0;
  for (int p = 0; p < periods; ++p) {
    const std::size_t psize = pbase + (static_cast<std::size_t>(p) < prem ? 1 : 0);
    const std::size_t sbase = psize / static_cast<std::size_t>(folds);
    const std::size_t srem = psize % static_cast<std::size_t>(folds);
    std::size_t local = pos;
    for (int f = 0; f < folds; ++f) {
      const std::size_t ssize = sbase + (static_cast<std::size_t>(f) < srem ? 1 : 0);
      if (local != 0) slice_starts.push_back(local);
      for (std::size_t k = 0; k < ssize; ++k) assign[local + k] = f;
      local += ssize;
    }
    pos = local;
  }

  // Drop pairs that share source frames with the previous slice.
  for (const std::size_t b : slice_starts) {
    if (b == 0 || b >= n) continue;
    const int prev_src = ds.source_index[b - 1];
    for (std::size_t i = b; i < n; ++i) {
      if (ds.source_index[i] - prev_src < ds.stack_size) assign[i] = -1;
      else break;
    }
  }
  return assign;
}

std::vector<bool> split_random80(std::size_t n, std::uint64_t seed) {
  std::vector<std::size_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = i;
  Rng rng(derive_seed(seed, 0x8020));
  rng.shuffle(idx);
  std::vector<bool> is_val(n, false);
  const std::size_t val_count = n / 5;
  for (std::size_t i = 0; i < val_count; ++i) is_val[idx[i]] = true;
  return is_val;
}

void save_recording(const Recording& rec, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  json m;
  m["capture_hz"] = rec.manifest.capture_hz;
  m["ray_count"] = rec.manifest.ray_count;
  m["fov"] = rec.manifest.fov;
  m["track_hash"] = hash_hex(rec.manifest.track_hash);
  m["expert"] = expert_to_json(rec.manifest.expert);
  m["speed_setpoint"] = rec.manifest.speed_setpoint;
  m["seed"] = rec.manifest.seed;
  m["created_at"] = rec.manifest.created_at;
  m["truncated_reason"] = rec.manifest.truncated_reason;
  m["cleaned_removed"] = rec.manifest.cleaned_removed;
  m["sample_count"] = rec.samples.size();
  {
    std::ofstream out(dir / "manifest.json");
    if (!out) throw std::runtime_error("save_recording: cannot write manifest.json");
    out << m.dump(2) << '\n';
  }
  {
    std::ofstream out(dir / "samples.jsonl", std::ios::binary);
    if (!out) throw std::runtime_error("save_recording: cannot write samples.jsonl");
    out << recording_samples_text(rec);
  }
}

void save_shifted(const ShiftedDataset& ds, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  json m;
  m["shift_ms"] = ds.shift_ms;
  m["stack_size"] = ds.stack_size;
  m["input_dim"] = ds.input_dim;
  m["source_hash"] = hash_hex(ds.source_hash);
  m["dropped_pairs"] = ds.dropped_pairs;
  m["pair_count"] = ds.size();
  {
    std::ofstream out(dir / "manifest.json");
    if (!out) throw std::runtime_error("save_shifted: cannot write manifest.json");
    out << m.dump(2) << '\n';
  }
  std::ofstream out(dir / "pairs.jsonl", std::ios::binary);
  if (!out) throw std::runtime_error("save_shifted: cannot write pairs.jsonl");
  std::string line;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    line.clear();
    line += "{\"input\":[";
    for (std::size_t k = 0; k < ds.inputs[i].size(); ++k) {
      if (k) line += ',';
      append_g17(line, ds.inputs[i][k]);
    }
    line += "],\"label\":";
    append_g17(line, ds.labels[i]);
    line += ",\"t_frame\":";
    append_g17(line, ds.newest_frame_times[i]);
    line += ",\"t_label\":";
    append_g17(line, ds.label_times[i]);
    line += ",\"src\":" + std::to_string(ds.source_index[i]);
    line += "}\n";
    out << line;
  }
}

ShiftedDataset load_shifted(const std::filesystem::path& dir) {
  std::ifstream min(dir / "manifest.json");
  if (!min) throw std::runtime_error("load_shifted: missing manifest.json in " + dir.string());
  json m = json::parse(min);
  ShiftedDataset ds;
  ds.shift_ms = m.at("shift_ms").get<int>();
  ds.stack_size = m.at("stack_size").get<int>();
  ds.input_dim = m.at("input_dim").get<int>();
  ds.source_hash = std::stoull(m.at("source_hash").get<std::string>(), nullptr, 16);
  ds.dropped_pairs = m.at("dropped_pairs").get<int>();
  const std::size_t expected = m.at("pair_count").get<std::size_t>();

  std::ifstream in(dir / "pairs.jsonl", std::ios::binary);
  if (!in) throw std::runtime_error("load_shifted: missing pairs.jsonl in " + dir.string());
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::parse_error& e) {
      throw std::runtime_error("load_shifted: parse error at pairs.jsonl line " +
                               std::to_string(lineno) + ": " + e.what());
    }
    auto input = j.at("input").get<std::vector<double>>();
    if (static_cast<int>(input.size()) != ds.input_dim) {
      throw std::runtime_error("load_shifted: integrity error at line " + std::to_string(lineno) +
                               ": input dim mismatch");
    }
    ds.inputs.push_back(std::move(input));
    ds.labels.push_back(j.at("label").get<double>());
    ds.newest_frame_times.push_back(j.at("t_frame").get<double>());
    ds.label_times.push_back(j.at("t_label").get<double>());
    ds.source_index.push_back(j.at("src").get<int>());
  }
  if (ds.size() != expected) {
    throw std::runtime_error("load_shifted: truncated file: expected " + std::to_string(expected) +
                             " pairs, found " + std::to_string(ds.size()));
  }
  return ds;
}

Recording load_recording(const std::filesystem::path& dir) {
  std::ifstream min(dir / "manifest.json");
  if (!min) throw std::runtime_error("load_recording: missing manifest.json in " + dir.string());
  json m = json::parse(min, nullptr, true);

  Recording rec;
  rec.manifest.capture_hz = m.at("capture_hz").get<double>();
  rec.manifest.ray_count = m.at("ray_count").get<int>();
  rec.manifest.fov = m.at("fov").get<double>();
  rec.manifest.track_hash = std::stoull(m.at("track_hash").get<std::string>(), nullptr, 16);
  rec.manifest.expert = expert_from_json(m.at("expert"));
  rec.manifest.speed_setpoint = m.at("speed_setpoint").get<double>();
  rec.manifest.seed = m.at("seed").get<std::uint64_t>();
  rec.manifest.created_at = m.at("created_at").get<std::string>();
  rec.manifest.truncated_reason = m.at("truncated_reason").get<std::string>();
  rec.manifest.cleaned_removed = m.at("cleaned_removed").get<int>();
  const std::size_t expected = m.at("sample_count").get<std::size_t>();

  std::ifstream in(dir / "samples.jsonl", std::ios::binary);
  if (!in) throw std::runtime_error("load_recording: missing samples.jsonl in " + dir.string());
  std::string line;
  std::size_t lineno = 0;
  double prev_t = -1.0;
  const double tick = 1.0 / rec.manifest.capture_hz;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::parse_error& e) {
      throw std::runtime_error("load_recording: parse error at samples.jsonl line " +
                               std::to_string(lineno) + ": " + e.what());
    }
    Sample s;
    s.t = j.at("t").get<double>();
    s.frame = j.at("frame").get<std::vector<double>>();
    s.steer = j.at("steer").get<double>();
    s.speed = j.at("speed").get<double>();
    s.lap = j.at("lap").get<int>();
    s.s = j.at("s").get<double>();
    s.infraction_window = j.at("infraction_window").get<bool>();
    s.perturb_mask = j.at("perturb_mask").get<bool>();
    if (static_cast<int>(s.frame.size()) != rec.manifest.ray_count) {
      throw std::runtime_error("load_recording: integrity error at line " + std::to_string(lineno) +
                               ": frame has " + std::to_string(s.frame.size()) + " rays, manifest says " +
                               std::to_string(rec.manifest.ray_count));
    }
    if (prev_t >= 0.0) {
      const double gap = s.t - prev_t;
      const double ticks = gap / tick;
      if (gap <= 0.0 || std::fabs(ticks - std::llround(ticks)) > 1e-6) {
        throw std::runtime_error("load_recording: integrity error at line " + std::to_string(lineno) +
                                 ": timestamps not on the capture grid");
      }
    }
    prev_t = s.t;
    rec.samples.push_back(std::move(s));
  }
  if (rec.samples.size() != expected) {
    throw std::runtime_error("load_recording: truncated file: expected " +
                             std::to_string(expected) + " samples, found " +
                             std::to_string(rec.samples.size()));
  }
  return rec;
}

}  // namespace minidrive
