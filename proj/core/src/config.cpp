#include "minidrive/config.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <stdexcept>

namespace minidrive {

namespace {

std::string trim(std::string_view sv) {
  const auto b = sv.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = sv.find_last_not_of(" \t\r");
  return std::string(sv.substr(b, e - b + 1));
}

double parse_double(const std::string& v, int line) {
  try {
    std::size_t pos = 0;
    const double d = std::stod(v, &pos);
    if (pos != v.size()) throw std::invalid_argument("");
    return d;
  } catch (...) {
    throw std::runtime_error("config line " + std::to_string(line) + ": bad number '" + v + "'");
  }
}

long parse_int(const std::string& v, int line) {
  try {
    std::size_t pos = 0;
    const long d = std::stol(v, &pos);
    if (pos != v.size()) throw std::invalid_argument("");
    return d;
  } catch (...) {
    throw std::runtime_error("config line " + std::to_string(line) + ": bad integer '" + v + "'");
  }
}

std::uint64_t parse_u64(const std::string& v, int line) {
  try {
    std::size_t pos = 0;
    const std::uint64_t d = std::stoull(v, &pos);
    if (pos != v.size()) throw std::invalid_argument("");
    return d;
  } catch (...) {
    throw std::runtime_error("config line " + std::to_string(line) + ": bad integer '" + v + "'");
  }
}

bool parse_bool(const std::string& v, int line) {
  if (v == "true" || v == "1" || v == "on") return true;
  if (v == "false" || v == "0" || v == "off") return false;
  throw std::runtime_error("config line " + std::to_string(line) + ": bad bool '" + v + "'");
}

std::vector<int> parse_int_list(const std::string& v, int line) {
  std::vector<int> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (item.empty()) continue;
    out.push_back(static_cast<int>(parse_int(item, line)));
  }
  if (out.empty()) throw std::runtime_error("config line " + std::to_string(line) + ": empty list");
  return out;
}

}  // namespace

ExperimentConfig parse_config_text(std::string_view text) {
  ExperimentConfig cfg;
  using Setter = std::function<void(ExperimentConfig&, const std::string&, int)>;
  // section -> key -> setter
  std::map<std::string, std::map<std::string, Setter>> schema;

  const auto dbl = [](double ExperimentConfig::* /*unused*/) {};
  (void)dbl;

#define SET_D(section, key, target) \
  schema[section][key] = [](ExperimentConfig& c, const std::string& v, int ln) { c.target = parse_double(v, ln); }
#define SET_I(section, key, target) \
  schema[section][key] = [](ExperimentConfig& c, const std::string& v, int ln) { c.target = static_cast<int>(parse_int(v, ln)); }
#define SET_B(section, key, target) \
  schema[section][key] = [](ExperimentConfig& c, const std::string& v, int ln) { c.target = parse_bool(v, ln); }

  schema[""]["seed"] = [](ExperimentConfig& c, const std::string& v, int ln) {
    c.seed = parse_u64(v, ln);
  };

  schema["track"]["seed"] = [](ExperimentConfig& c, const std::string& v, int ln) {
    c.track_seed = parse_u64(v, ln);
    c.track_seed_set = true;
  };
  SET_D("track", "target_length", track.target_length);
  SET_D("track", "half_width", track.half_width);
  SET_D("track", "min_turn_radius", track.min_turn_radius);
  SET_D("track", "max_turn_radius", track.max_turn_radius);
  SET_D("track", "min_straight", track.min_straight);
  SET_D("track", "vertex_spacing", track.vertex_spacing);
  SET_D("track", "min_clearance", track.min_clearance);
  SET_I("track", "max_attempts", track.max_attempts);

  SET_D("vehicle", "wheelbase", vehicle.wheelbase);
  SET_D("vehicle", "max_steer", vehicle.max_steer);
  SET_D("vehicle", "body_half_width", vehicle.body_half_width);
  SET_D("vehicle", "actuator_tau", vehicle.actuator_tau);
  SET_D("vehicle", "actuator_pure_delay", vehicle.actuator_pure_delay);
  SET_D("vehicle", "speed_tau", vehicle.speed_tau);
  SET_D("vehicle", "steer_rate_limit", vehicle.steer_rate_limit);
  SET_D("vehicle", "steer_load_per_speed", vehicle.steer_load_per_speed);
  SET_D("vehicle", "speed_noise_sigma", vehicle.speed_noise_sigma);
  SET_D("vehicle", "speed_noise_period", vehicle.speed_noise_period);

  SET_I("sensor", "ray_count", sensor.ray_count);
  schema["sensor"]["fov_deg"] = [](ExperimentConfig& c, const std::string& v, int ln) {
    c.sensor.fov = parse_double(v, ln) * 3.14159265358979323846 / 180.0;
  };
  SET_D("sensor", "max_range", sensor.max_range);
  SET_D("sensor", "capture_hz", sensor.capture_hz);
  SET_D("sensor", "noise_sigma", sensor.noise_sigma);
  SET_I("sensor", "stack_size", sensor.stack_size);
  SET_B("sensor", "motion_blur", sensor.motion_blur);
  SET_D("sensor", "blur_per_speed", sensor.blur_per_speed);

  SET_D("expert", "base_lookahead", expert.base_lookahead);
  SET_D("expert", "lookahead_per_speed", expert.lookahead_per_speed);
  SET_D("expert", "steer_gain", expert.steer_gain);
  SET_B("expert", "quantize", expert.quantize);
  SET_D("expert", "quantize_dead_band", expert.quantize_dead_band);
  SET_D("expert", "perturb_prob", expert.perturb_prob);
  SET_D("expert", "perturb_sigma", expert.perturb_sigma);
  SET_D("expert", "perturb_mask_s", expert.perturb_mask_s);

  SET_D("train", "lr", train.lr);
  SET_D("train", "beta1", train.beta1);
  SET_D("train", "beta2", train.beta2);
  SET_D("train", "eps", train.eps);
  SET_D("train", "weight_decay", train.weight_decay);
  SET_I("train", "batch_size", train.batch_size);
  SET_I("train", "max_epochs", train.max_epochs);
  SET_I("train", "patience", train.patience);
  schema["train"]["optimizer"] = [](ExperimentConfig& c, const std::string& v, int ln) {
    if (v == "adam") c.train.optimizer = TrainConfig::Optimizer::adam;
    else if (v == "sgd") c.train.optimizer = TrainConfig::Optimizer::sgd;
    else throw std::runtime_error("config line " + std::to_string(ln) + ": optimizer must be adam or sgd");
  };

  SET_D("pipeline", "base_compute_ms", pipeline.base_compute_ms);
  SET_D("pipeline", "added_delay_ms", pipeline.added_delay_ms);
  SET_B("pipeline", "replace_on_crash", pipeline.replace_on_crash);
  SET_B("pipeline", "pipelined", pipeline.pipelined);
  SET_D("pipeline", "jitter_ms", pipeline.jitter_ms);
  SET_D("pipeline", "dt", pipeline.dt);

  schema["sweep"]["shifts_ms"] = [](ExperimentConfig& c, const std::string& v, int ln) {
    c.sweep.shifts_ms = parse_int_list(v, ln);
  };
  schema["sweep"]["delays_ms"] = [](ExperimentConfig& c, const std::string& v, int ln) {
    c.sweep.delays_ms = parse_int_list(v, ln);
  };
  SET_D("sweep", "v_min", sweep.search.v_min);
  SET_D("sweep", "v_max", sweep.search.v_max);
  SET_D("sweep", "coarse_step", sweep.search.coarse_step);
  SET_D("sweep", "resolution", sweep.search.resolution);
  SET_I("sweep", "probe_laps", sweep.search.probe_laps);
  SET_I("sweep", "confirm_laps", sweep.search.confirm_laps);
  SET_I("sweep", "confirm_max_infractions", sweep.search.confirm_max_infractions);
  SET_I("sweep", "confirm_seeds", sweep.search.confirm_seeds);

  SET_I("ood", "k", ood.k);

  SET_D("study", "slow_speed", study.slow_speed);
  SET_D("study", "fast_speed", study.fast_speed);
  SET_D("study", "delay_speed", study.delay_speed);
  SET_D("study", "collect_s", study.collect_s);
  SET_D("study", "delay_collect_s", study.delay_collect_s);
  SET_I("study", "folds", study.folds);
  SET_I("study", "periods", study.periods);
  SET_I("study", "eval_laps", study.eval_laps);
  SET_D("study", "clean_window_s", study.clean_window_s);
  schema["study"]["split_scheme"] = [](ExperimentConfig& c, const std::string& v, int ln) {
    if (v != "temporal" && v != "random80") {
      throw std::runtime_error("config line " + std::to_string(ln) +
                               ": split_scheme must be temporal or random80");
    }
    c.study.split_scheme = v;
  };

#undef SET_D
#undef SET_I
#undef SET_B

  std::istringstream in{std::string(text)};
  std::string line;
  std::string section;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string s = trim(line);
    if (s.empty() || s[0] == '#' || s[0] == ';') continue;
    if (s.front() == '[') {
      if (s.back() != ']') {
        throw std::runtime_error("config line " + std::to_string(lineno) + ": malformed section");
      }
      section = trim(s.substr(1, s.size() - 2));
      if (schema.find(section) == schema.end()) {
        throw std::runtime_error("config line " + std::to_string(lineno) + ": unknown section [" +
                                 section + "]");
      }
      continue;
    }
    const auto eq = s.find('=');
    if (eq == std::string::npos) {
      throw std::runtime_error("config line " + std::to_string(lineno) + ": expected key=value");
    }
    const std::string key = trim(s.substr(0, eq));
    const std::string value = trim(s.substr(eq + 1));
    const auto sec_it = schema.find(section);
    if (sec_it == schema.end()) {
      throw std::runtime_error("config line " + std::to_string(lineno) + ": key outside a section");
    }
    const auto key_it = sec_it->second.find(key);
    if (key_it == sec_it->second.end()) {
      throw std::runtime_error("config line " + std::to_string(lineno) + ": unknown key '" + key +
                               "' in section [" + section + "]");
    }
    key_it->second(cfg, value, lineno);
  }
  return cfg;
}

ExperimentConfig load_config(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw std::runtime_error("cannot open config file " + file.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config_text(ss.str());
}

std::string default_config_text() {
  const ExperimentConfig c;
  std::ostringstream o;
  o << "# minidrive experiment configuration (key = value; unknown keys are fatal)\n";
  o << "seed = " << c.seed << "\n\n";
  o << "[track]\n";
  o << "target_length = " << c.track.target_length << "\n";
  o << "half_width = " << c.track.half_width << "\n";
  o << "min_turn_radius = " << c.track.min_turn_radius << "\n";
  o << "max_turn_radius = " << c.track.max_turn_radius << "\n";
  o << "min_straight = " << c.track.min_straight << "\n";
  o << "vertex_spacing = " << c.track.vertex_spacing << "\n";
  o << "min_clearance = " << c.track.min_clearance << "\n";
  o << "max_attempts = " << c.track.max_attempts << "\n\n";
  o << "[vehicle]\n";
  o << "wheelbase = " << c.vehicle.wheelbase << "\n";
  o << "max_steer = " << c.vehicle.max_steer << "\n";
  o << "body_half_width = " << c.vehicle.body_half_width << "\n";
  o << "actuator_tau = " << c.vehicle.actuator_tau << "\n";
  o << "actuator_pure_delay = " << c.vehicle.actuator_pure_delay << "\n";
  o << "speed_tau = " << c.vehicle.speed_tau << "\n";
  o << "steer_rate_limit = " << c.vehicle.steer_rate_limit << "\n";
  o << "steer_load_per_speed = " << c.vehicle.steer_load_per_speed << "\n";
  o << "speed_noise_sigma = " << c.vehicle.speed_noise_sigma << "\n";
  o << "speed_noise_period = " << c.vehicle.speed_noise_period << "\n\n";
  o << "[sensor]\n";
  o << "ray_count = " << c.sensor.ray_count << "\n";
  o << "fov_deg = 160\n";
  o << "max_range = " << c.sensor.max_range << "\n";
  o << "capture_hz = " << c.sensor.capture_hz << "\n";
  o << "noise_sigma = " << c.sensor.noise_sigma << "\n";
  o << "stack_size = " << c.sensor.stack_size << "\n";
  o << "motion_blur = " << (c.sensor.motion_blur ? "true" : "false") << "\n";
  o << "blur_per_speed = " << c.sensor.blur_per_speed << "\n\n";
  o << "[expert]\n";
  o << "base_lookahead = " << c.expert.base_lookahead << "\n";
  o << "lookahead_per_speed = " << c.expert.lookahead_per_speed << "\n";
  o << "steer_gain = " << c.expert.steer_gain << "\n";
  o << "quantize = " << (c.expert.quantize ? "true" : "false") << "\n";
  o << "quantize_dead_band = " << c.expert.quantize_dead_band << "\n";
  o << "perturb_prob = " << c.expert.perturb_prob << "\n";
  o << "perturb_sigma = " << c.expert.perturb_sigma << "\n";
  o << "perturb_mask_s = " << c.expert.perturb_mask_s << "\n\n";
  o << "[train]\n";
  o << "lr = " << c.train.lr << "\n";
  o << "beta1 = " << c.train.beta1 << "\n";
  o << "beta2 = " << c.train.beta2 << "\n";
  o << "eps = " << c.train.eps << "\n";
  o << "weight_decay = " << c.train.weight_decay << "\n";
  o << "batch_size = " << c.train.batch_size << "\n";
  o << "max_epochs = " << c.train.max_epochs << "\n";
  o << "patience = " << c.train.patience << "\n";
  o << "optimizer = adam\n\n";
  o << "[pipeline]\n";
  o << "base_compute_ms = " << c.pipeline.base_compute_ms << "\n";
  o << "added_delay_ms = " << c.pipeline.added_delay_ms << "\n";
  o << "replace_on_crash = " << (c.pipeline.replace_on_crash ? "true" : "false") << "\n";
  o << "pipelined = " << (c.pipeline.pipelined ? "true" : "false") << "\n";
  o << "jitter_ms = " << c.pipeline.jitter_ms << "\n";
  o << "dt = " << c.pipeline.dt << "\n\n";
  o << "[sweep]\n";
  o << "shifts_ms = -100,-50,0,50,100,150,200\n";
  o << "delays_ms = 0,25,50,75,100\n";
  o << "v_min = " << c.sweep.search.v_min << "\n";
  o << "v_max = " << c.sweep.search.v_max << "\n";
  o << "coarse_step = " << c.sweep.search.coarse_step << "\n";
  o << "resolution = " << c.sweep.search.resolution << "\n";
  o << "probe_laps = " << c.sweep.search.probe_laps << "\n";
  o << "confirm_laps = " << c.sweep.search.confirm_laps << "\n";
  o << "confirm_max_infractions = " << c.sweep.search.confirm_max_infractions << "\n";
  o << "confirm_seeds = " << c.sweep.search.confirm_seeds << "\n\n";
  o << "[ood]\n";
  o << "k = " << c.ood.k << "\n\n";
  o << "[study]\n";
  o << "slow_speed = " << c.study.slow_speed << "\n";
  o << "fast_speed = " << c.study.fast_speed << "\n";
  o << "delay_speed = " << c.study.delay_speed << "\n";
  o << "collect_s = " << c.study.collect_s << "\n";
  o << "delay_collect_s = " << c.study.delay_collect_s << "\n";
  o << "folds = " << c.study.folds << "\n";
  o << "periods = " << c.study.periods << "\n";
  o << "eval_laps = " << c.study.eval_laps << "\n";
  o << "clean_window_s = " << c.study.clean_window_s << "\n";
  o << "split_scheme = " << c.study.split_scheme << "\n";
  return o.str();
}

}  // namespace minidrive
