#include "viwo/config.hpp"

#include <fstream>
#include <set>

namespace viwo {

namespace {

using nlohmann::json;

class Section {
 public:
  Section(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(path_ + ": expected an object");
  }

  template <typename T>
  void get(const char* key, T& out) {
    seen_.insert(key);
    const auto it = j_.find(key);
    if (it == j_.end()) return;
    try {
      if constexpr (std::is_same_v<T, bool>) {
        if (!it->is_boolean()) throw ConfigError("");
      } else if constexpr (std::is_integral_v<T>) {
        if (!it->is_number_integer()) throw ConfigError("");
        if constexpr (std::is_unsigned_v<T>) {
          if (it->is_number_integer() && !it->is_number_unsigned()) throw ConfigError("");
        }
      } else if constexpr (std::is_floating_point_v<T>) {
        if (!it->is_number()) throw ConfigError("");
      } else {
        if (!it->is_string()) throw ConfigError("");
      }
      out = it->get<T>();
    } catch (const std::exception&) {
      throw ConfigError(path_ + "." + key + ": wrong type");
    }
  }

  const json* child(const char* key) {
    seen_.insert(key);
    const auto it = j_.find(key);
    return it == j_.end() ? nullptr : &*it;
  }

  void finish() const {
    for (const auto& [key, value] : j_.items()) {
      if (!seen_.count(key)) throw ConfigError(path_ + ": unknown key '" + key + "'");
    }
  }

  const std::string& path() const { return path_; }

 private:
  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

void parse_noise(const json& j, NoiseParams& n) {
  Section s(j, "sim.noise");
  s.get("sigma_g", n.sigma_g);
  s.get("sigma_a", n.sigma_a);
  s.get("sigma_wg", n.sigma_wg);
  s.get("sigma_wa", n.sigma_wa);
  s.get("sigma_wheel_v", n.sigma_wheel_v);
  s.get("sigma_wheel_w", n.sigma_wheel_w);
  s.get("sigma_px", n.sigma_px);
  s.get("sigma_plane", n.sigma_plane);
  s.finish();
}

void parse_dynamic(const json& j, DynamicSceneConfig& d) {
  Section s(j, "sim.dynamic");
  s.get("n_static", d.n_static);
  s.get("n_dynamic", d.n_dynamic);
  s.get("sigma_v", d.sigma_v);
  s.get("sigma_v_per_frame", d.sigma_v_per_frame);
  s.get("omega0", d.omega0);
  s.get("speed", d.speed);
  s.get("min_depth", d.min_depth);
  s.get("max_depth", d.max_depth);
  s.finish();
}

void parse_sim(const json& j, SimConfig& c) {
  Section s(j, "sim");
  s.get("radius", c.radius);
  s.get("speed", c.speed);
  s.get("imu_rate", c.imu_rate);
  s.get("wheel_rate", c.wheel_rate);
  s.get("cam_rate", c.cam_rate);
  s.get("n_landmarks", c.n_landmarks);
  s.get("duration", c.duration);
  s.get("add_noise", c.add_noise);
  s.get("ring_offset", c.ring_offset);
  s.get("min_height", c.min_height);
  s.get("max_height", c.max_height);
  s.get("n_moving_landmarks", c.n_moving_landmarks);
  s.get("moving_speed", c.moving_speed);
  s.get("initial_bias", c.initial_bias);
  s.get("focal", c.intrinsics.focal);
  if (const json* n = s.child("noise")) parse_noise(*n, c.noise);
  if (const json* d = s.child("dynamic")) {
    DynamicSceneConfig dyn;
    parse_dynamic(*d, dyn);
    c.dynamic = dyn;
  }
  s.finish();
}

}  // namespace

RunConfig parse_run_config(const json& j) {
  RunConfig cfg;
  Section s(j, "config");
  std::string mode;
  s.get("mode", mode);
  if (!mode.empty()) {
    const auto m = parse_error_mode(mode);
    if (!m) throw ConfigError("config.mode: unknown mode '" + mode + "'");
    cfg.mode = *m;
  }
  s.get("seed", cfg.seed);
  s.get("runs", cfg.runs);
  s.get("output", cfg.output_dir);
  s.get("window", cfg.window);
  s.get("min_track_length", cfg.min_track_length);
  s.get("gate_probability", cfg.gate_probability);
  if (const json* t = s.child("toggles")) {
    Section ts(*t, "toggles");
    ts.get("wheel_rotation", cfg.wheel_rotation);
    ts.get("wheel_velocity", cfg.wheel_velocity);
    ts.get("plane", cfg.plane);
    ts.get("outlier_detection", cfg.outlier_detection);
    ts.finish();
  }
  if (const json* sim = s.child("sim")) parse_sim(*sim, cfg.sim);
  s.finish();
  cfg.sim.seed = cfg.seed;
  validate(cfg);
  return cfg;
}

RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config '" + path + "'");
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError(path + ": " + e.what());
  }
  return parse_run_config(j);
}

json to_json(const RunConfig& cfg) {
  const SimConfig& s = cfg.sim;
  const NoiseParams& n = s.noise;
  json j = {
      {"mode", std::string(to_string(cfg.mode))},
      {"seed", cfg.seed},
      {"runs", cfg.runs},
      {"output", cfg.output_dir},
      {"window", cfg.window},
      {"min_track_length", cfg.min_track_length},
      {"gate_probability", cfg.gate_probability},
      {"toggles",
       {{"wheel_rotation", cfg.wheel_rotation},
        {"wheel_velocity", cfg.wheel_velocity},
        {"plane", cfg.plane},
        {"outlier_detection", cfg.outlier_detection}}},
      {"sim",
       {{"radius", s.radius},
        {"speed", s.speed},
        {"imu_rate", s.imu_rate},
        {"wheel_rate", s.wheel_rate},
        {"cam_rate", s.cam_rate},
        {"n_landmarks", s.n_landmarks},
        {"duration", s.duration},
        {"add_noise", s.add_noise},
        {"ring_offset", s.ring_offset},
        {"min_height", s.min_height},
        {"max_height", s.max_height},
        {"n_moving_landmarks", s.n_moving_landmarks},
        {"moving_speed", s.moving_speed},
        {"initial_bias", s.initial_bias},
        {"focal", s.intrinsics.focal},
        {"noise",
         {{"sigma_g", n.sigma_g},
          {"sigma_a", n.sigma_a},
          {"sigma_wg", n.sigma_wg},
          {"sigma_wa", n.sigma_wa},
          {"sigma_wheel_v", n.sigma_wheel_v},
          {"sigma_wheel_w", n.sigma_wheel_w},
          {"sigma_px", n.sigma_px},
          {"sigma_plane", n.sigma_plane}}}}},
  };
  if (s.dynamic) {
    const DynamicSceneConfig& d = *s.dynamic;
    j["sim"]["dynamic"] = {{"n_static", d.n_static},   {"n_dynamic", d.n_dynamic},
                           {"sigma_v", d.sigma_v},     {"sigma_v_per_frame", d.sigma_v_per_frame},
                           {"omega0", d.omega0},       {"speed", d.speed},
                           {"min_depth", d.min_depth}, {"max_depth", d.max_depth}};
  }
  return j;
}

void validate(const RunConfig& cfg) {
  if (!cfg.sim.valid()) throw ConfigError("sim: invalid simulation parameters");
  if (cfg.window < 2) throw ConfigError("window must be at least 2");
  if (cfg.min_track_length < 2) throw ConfigError("min_track_length must be at least 2");
  if (!(cfg.gate_probability > 0.0 && cfg.gate_probability < 1.0)) {
    throw ConfigError("gate_probability must lie in (0, 1)");
  }
  if (cfg.runs < 1) throw ConfigError("runs must be positive");
  if (cfg.sim.dynamic) {
    const DynamicSceneConfig& d = *cfg.sim.dynamic;
    if (d.n_static < 0 || d.n_dynamic < 0 || d.sigma_v < 0.0 || d.speed < 0.0 || d.min_depth <= 0.0 ||
        d.max_depth <= d.min_depth) {
      throw ConfigError("sim.dynamic: invalid parameters");
    }
  }
}

EstimatorOptions estimator_options(const RunConfig& cfg) {
  EstimatorOptions o;
  o.mode = cfg.mode;
  o.noise = cfg.sim.noise;
  o.intrinsics = cfg.sim.intrinsics;
  o.camera = cfg.sim.camera;
  o.wheel = cfg.sim.wheel;
  o.max_clones = cfg.window;
  o.min_track_length = cfg.min_track_length;
  o.gate_probability = cfg.gate_probability;
  o.wheel_rate = cfg.sim.wheel_rate;
  o.use_wheel_rotation = cfg.wheel_rotation;
  o.use_wheel_velocity = cfg.wheel_velocity;
  o.use_plane = cfg.plane;
  o.use_outlier_detection = cfg.outlier_detection;
  return o;
}

}  // namespace viwo
