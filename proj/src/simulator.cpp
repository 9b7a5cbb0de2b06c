#include "viwo/simulator.hpp"

#include "viwo/filter_state.hpp"
#include "viwo/lie.hpp"

#include <cmath>
#include <stdexcept>

namespace viwo {

namespace {

constexpr std::uint64_t kLayoutStream = 1;
constexpr std::uint64_t kNoiseStream = 2;

Vector3d gaussian3(std::mt19937_64& rng, double sigma) {
  std::normal_distribution<double> n(0.0, sigma);
  const double x = n(rng);
  const double y = n(rng);
  const double z = n(rng);
  return Vector3d(x, y, z);
}

bool in_image(const Vector3d& p_c, const SimConfig& cfg) {
  if (p_c.z() < cfg.min_depth || p_c.z() > cfg.max_depth) return false;
  const double f = cfg.intrinsics.focal;
  const double u = f * p_c.x() / p_c.z() + 0.5 * cfg.intrinsics.width;
  const double v = f * p_c.y() / p_c.z() + 0.5 * cfg.intrinsics.height;
  return u >= 0.0 && u < cfg.intrinsics.width && v >= 0.0 && v < cfg.intrinsics.height;
}

}  // namespace

std::mt19937_64 make_rng(std::uint64_t seed, std::uint64_t stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32)};
  return std::mt19937_64(seq);
}

bool SimConfig::valid() const {
  return radius > 0.0 && speed > 0.0 && imu_rate > 0.0 && wheel_rate > 0.0 && cam_rate > 0.0 &&
         imu_rate >= wheel_rate && wheel_rate >= cam_rate && n_landmarks >= 0 && duration >= 0.0 &&
         noise.valid() && min_height <= max_height && min_depth > 0.0 && max_depth > min_depth &&
         n_moving_landmarks >= 0 && intrinsics.focal > 0.0;
}

TruthSample GroundTruth::at(double t) const {
  const double w = speed / radius;
  const double a = w * t;
  TruthSample s;
  s.stamp = t;
  s.rot = rot_z(a);
  s.pos = Vector3d(radius * std::sin(a), radius * (1.0 - std::cos(a)), 0.0);
  s.vel = Vector3d(speed * std::cos(a), speed * std::sin(a), 0.0);
  s.omega = Vector3d(0.0, 0.0, w);
  s.accel = Vector3d(-speed * w * std::sin(a), speed * w * std::cos(a), 0.0);
  return s;
}

GroundTruth generate_trajectory(const SimConfig& cfg) {
  if (!cfg.valid()) throw std::invalid_argument("generate_trajectory: invalid config");
  GroundTruth gt;
  gt.radius = cfg.radius;
  gt.speed = cfg.speed;
  const auto n = static_cast<long>(std::floor(cfg.duration * cfg.imu_rate + 1e-9));
  gt.samples.reserve(n + 1);
  for (long k = 0; k <= n; ++k) gt.samples.push_back(gt.at(static_cast<double>(k) / cfg.imu_rate));
  return gt;
}

std::vector<Landmark> generate_landmarks(const SimConfig& cfg) {
  auto rng = make_rng(cfg.seed, kLayoutStream);
  std::uniform_real_distribution<double> height(cfg.min_height, cfg.max_height);
  std::vector<Landmark> out;
  out.reserve(cfg.n_landmarks + cfg.n_moving_landmarks);
  const Vector3d center = cfg.circle_center();
  const int inner = cfg.n_landmarks / 2;
  const int outer = cfg.n_landmarks - inner;
  auto ring = [&](int count, double r) {
    for (int i = 0; i < count; ++i) {
      const double angle = 2.0 * std::numbers::pi * (static_cast<double>(i) + 0.5) / count;
      Landmark l;
      l.id = out.size();
      l.pos = center + Vector3d(r * std::cos(angle), r * std::sin(angle), height(rng));
      out.push_back(l);
    }
  };
  ring(inner, cfg.radius * (1.0 - cfg.ring_offset));
  ring(outer, cfg.radius * (1.0 + cfg.ring_offset));

  std::uniform_real_distribution<double> angle(0.0, 2.0 * std::numbers::pi);
  std::uniform_real_distribution<double> spread(-cfg.ring_offset, cfg.ring_offset);
  for (int i = 0; i < cfg.n_moving_landmarks; ++i) {
    const double a = angle(rng);
    const double r = cfg.radius * (1.0 + 2.0 * spread(rng));
    Landmark l;
    l.id = kMovingIdBase + static_cast<FeatureId>(i);
    l.pos = center + Vector3d(r * std::cos(a), r * std::sin(a), height(rng));
    const double heading = angle(rng);
    l.vel = cfg.moving_speed * Vector3d(std::cos(heading), std::sin(heading), 0.0);
    out.push_back(l);
  }
  return out;
}

std::vector<std::pair<FeatureId, Vector2d>> observe(const std::vector<Landmark>& landmarks, const Matrix3d& R_GC,
                                                    const Vector3d& p_GC, double t, const SimConfig& cfg) {
  std::vector<std::pair<FeatureId, Vector2d>> out;
  for (const auto& l : landmarks) {
    const Vector3d p_c = R_GC.transpose() * (l.at(t) - p_GC);
    if (!in_image(p_c, cfg)) continue;
    out.emplace_back(l.id, project(p_c));
  }
  return out;
}

MeasurementStream synthesize_measurements(const SimConfig& cfg, const GroundTruth& gt,
                                          const std::vector<Landmark>& landmarks,
                                          std::optional<std::uint64_t> noise_seed) {
  if (!cfg.valid()) throw std::invalid_argument("synthesize_measurements: invalid config");
  auto rng = make_rng(noise_seed.value_or(cfg.seed), kNoiseStream);
  std::normal_distribution<double> unit(0.0, 1.0);
  const NoiseParams& n = cfg.noise;
  const double noise_on = cfg.add_noise ? 1.0 : 0.0;

  MeasurementStream out;
  const TruthSample first = gt.at(0.0);
  out.initial.rot = first.rot;
  out.initial.vel = first.vel;
  out.initial.pos = first.pos;
  out.initial.bg = Vector3d::Constant(cfg.initial_bias);
  out.initial.ba = Vector3d::Constant(cfg.initial_bias);

  if (cfg.duration <= 0.0) return out;

  // IMU with random-walk biases.
  const double dt_imu = 1.0 / cfg.imu_rate;
  Vector3d bg = out.initial.bg;
  Vector3d ba = out.initial.ba;
  out.imu.reserve(gt.samples.size());
  for (const auto& s : gt.samples) {
    ImuSample m;
    m.stamp = s.stamp;
    m.omega = s.omega + bg + noise_on * n.sigma_g * std::sqrt(cfg.imu_rate) * gaussian3(rng, 1.0);
    m.accel = s.rot.transpose() * (s.accel - kGravity) + ba +
              noise_on * n.sigma_a * std::sqrt(cfg.imu_rate) * gaussian3(rng, 1.0);
    out.imu.push_back(m);
    out.true_bg.push_back(bg);
    out.true_ba.push_back(ba);
    bg += noise_on * n.sigma_wg * std::sqrt(dt_imu) * gaussian3(rng, 1.0);
    ba += noise_on * n.sigma_wa * std::sqrt(dt_imu) * gaussian3(rng, 1.0);
  }

  // Wheel odometer: forward speed and yaw rate of the odometer frame.
  const auto n_wheel = static_cast<long>(std::floor(cfg.duration * cfg.wheel_rate + 1e-9));
  for (long k = 0; k <= n_wheel; ++k) {
    const double t = static_cast<double>(k) / cfg.wheel_rate;
    const TruthSample s = gt.at(t);
    const Vector3d v_body = s.rot.transpose() * s.vel + s.omega.cross(cfg.wheel.p_IO);
    const Vector3d v_odo = cfg.wheel.R_OI * v_body;
    const Vector3d w_odo = cfg.wheel.R_OI * s.omega;
    WheelSample w;
    w.stamp = t;
    w.w = w_odo.z() + noise_on * n.sigma_wheel_w * unit(rng);
    w.v = v_odo.x() + noise_on * n.sigma_wheel_v * unit(rng);
    out.wheel.push_back(w);
  }

  // Camera.
  const double px = n.sigma_px / cfg.intrinsics.focal;
  const auto n_cam = static_cast<long>(std::floor(cfg.duration * cfg.cam_rate + 1e-9));
  for (long k = 0; k <= n_cam; ++k) {
    const double t = static_cast<double>(k) / cfg.cam_rate;
    const TruthSample s = gt.at(t);
    const Matrix3d R_GC = s.rot * cfg.camera.R_IC;
    const Vector3d p_GC = s.pos + s.rot * cfg.camera.p_IC;
    CameraFrame frame;
    frame.stamp = t;
    frame.features = observe(landmarks, R_GC, p_GC, t, cfg);
    for (auto& f : frame.features) {
      const double dx = unit(rng);
      const double dy = unit(rng);
      f.second += noise_on * px * Vector2d(dx, dy);
    }
    out.frames.push_back(std::move(frame));
  }
  for (const auto& l : landmarks) {
    if (!l.vel.isZero()) out.moving_ids.push_back(l.id);
  }
  return out;
}

DynamicScene synthesize_dynamic_scene(const SimConfig& cfg, std::uint64_t seed) {
  if (!cfg.dynamic) throw std::invalid_argument("synthesize_dynamic_scene: no dynamic configuration");
  const DynamicSceneConfig& d = *cfg.dynamic;
  auto rng = make_rng(seed, kNoiseStream);
  std::normal_distribution<double> unit(0.0, 1.0);
  std::uniform_real_distribution<double> u_px(0.0, cfg.intrinsics.width);
  std::uniform_real_distribution<double> v_px(0.0, cfg.intrinsics.height);
  std::uniform_real_distribution<double> depth(d.min_depth, d.max_depth);

  DynamicScene scene;
  scene.dt = 1.0 / cfg.cam_rate;
  const double dt = scene.dt;
  const double w = d.omega0;
  scene.omega = Vector3d(0.0, 0.0, w);

  // First IMU pose at the origin heading +x; second pose after an arc.
  const Matrix3d R_I0 = Matrix3d::Identity();
  const Vector3d p_I0 = Vector3d::Zero();
  const Vector3d v_I0(d.speed, 0.0, 0.0);
  const Matrix3d R_I1 = rot_z(w * dt);
  const Vector3d p_I1 = std::abs(w) < 1e-12
                            ? Vector3d(d.speed * dt, 0.0, 0.0)
                            : Vector3d(d.speed / w * std::sin(w * dt), d.speed / w * (1.0 - std::cos(w * dt)), 0.0);

  const Matrix3d R_C0 = R_I0 * cfg.camera.R_IC;
  const Vector3d p_C0 = p_I0 + R_I0 * cfg.camera.p_IC;
  const Matrix3d R_C1 = R_I1 * cfg.camera.R_IC;
  const Vector3d p_C1 = p_I1 + R_I1 * cfg.camera.p_IC;
  scene.R_GC = R_C0;
  scene.v_C = v_I0 + R_I0 * scene.omega.cross(cfg.camera.p_IC);

  const double f = cfg.intrinsics.focal;
  const double px = cfg.noise.sigma_px / f;
  const double noise_on = cfg.add_noise ? 1.0 : 0.0;
  const double sigma_v = d.sigma_v_per_frame ? d.sigma_v / dt : d.sigma_v;
  const int total = d.n_static + d.n_dynamic;
  for (int i = 0; i < total; ++i) {
    const bool dynamic = i >= d.n_static;
    const double u = u_px(rng);
    const double v = v_px(rng);
    const double z = depth(rng);
    const Vector3d p_c0((u - 0.5 * cfg.intrinsics.width) / f * z, (v - 0.5 * cfg.intrinsics.height) / f * z, z);
    const Vector3d p_g0 = p_C0 + R_C0 * p_c0;
    Vector3d vel = Vector3d::Zero();
    if (dynamic) vel = gaussian3(rng, sigma_v);
    const Vector3d p_g1 = p_g0 + vel * dt;
    const Vector3d p_c1 = R_C1.transpose() * (p_g1 - p_C1);
    const double n0x = unit(rng), n0y = unit(rng), n1x = unit(rng), n1y = unit(rng);
    if (!in_image(p_c1, cfg)) continue;

    FeaturePair pair;
    pair.id = static_cast<FeatureId>(i);
    pair.z0 = project(p_c0) + noise_on * px * Vector2d(n0x, n0y);
    pair.z1 = project(p_c1) + noise_on * px * Vector2d(n1x, n1y);
    pair.depth = z;
    scene.pairs.push_back(pair);
    (dynamic ? scene.dynamic_ids : scene.static_ids).push_back(pair.id);
  }
  return scene;
}

}  // namespace viwo
