#include "viwo/log_io.hpp"

#include "viwo/lie.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

namespace viwo {

namespace {

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

void put(std::ostream& os, const Vector3d& v) { os << ' ' << num(v.x()) << ' ' << num(v.y()) << ' ' << num(v.z()); }

void put_rot(std::ostream& os, const Matrix3d& R) {
  const Eigen::Quaterniond q = to_quaternion(R);
  os << ' ' << num(q.w()) << ' ' << num(q.x()) << ' ' << num(q.y()) << ' ' << num(q.z());
}

class Reader {
 public:
  explicit Reader(std::istream& is) : is_(is) {}

  bool next() {
    while (std::getline(is_, line_)) {
      ++number_;
      if (line_.empty() || line_[0] == '#') continue;
      tokens_.clear();
      std::istringstream ss(line_);
      std::string t;
      while (ss >> t) tokens_.push_back(t);
      if (!tokens_.empty()) return true;
    }
    return false;
  }

  void expect_header(const char* header) {
    if (!std::getline(is_, line_)) throw ParseError(1, "empty input");
    ++number_;
    if (!line_.empty() && line_.back() == '\r') line_.pop_back();
    if (line_ != header) throw ParseError(1, std::string("expected version header '") + header + "'");
  }

  const std::string& tag() const { return tokens_[0]; }
  int line() const { return number_; }

  void arity(std::size_t n) const {
    if (tokens_.size() != n + 1) {
      throw ParseError(number_, tag() + " expects " + std::to_string(n) + " fields");
    }
  }

  double real(std::size_t i) const {
    try {
      std::size_t used = 0;
      const double v = std::stod(tokens_.at(i), &used);
      if (used != tokens_[i].size()) throw std::invalid_argument("trailing");
      return v;
    } catch (const std::exception&) {
      throw ParseError(number_, "bad number '" + tokens_.at(i) + "'");
    }
  }

  std::uint64_t integer(std::size_t i) const {
    try {
      std::size_t used = 0;
      const unsigned long long v = std::stoull(tokens_.at(i), &used);
      if (used != tokens_[i].size()) throw std::invalid_argument("trailing");
      return v;
    } catch (const std::exception&) {
      throw ParseError(number_, "bad integer '" + tokens_.at(i) + "'");
    }
  }

  Vector3d vec(std::size_t i) const { return Vector3d(real(i), real(i + 1), real(i + 2)); }

  Matrix3d rot(std::size_t i) const {
    const Eigen::Quaterniond q(real(i), real(i + 1), real(i + 2), real(i + 3));
    if (std::abs(q.norm() - 1.0) > 1e-6) throw ParseError(number_, "quaternion is not unit length");
    return from_quaternion(q);
  }

 private:
  std::istream& is_;
  std::string line_;
  std::vector<std::string> tokens_;
  int number_ = 0;
};

}  // namespace

void write_log(std::ostream& os, const MeasurementStream& stream) {
  os << kLogHeader << '\n';
  const ImuState& x = stream.initial;
  os << "INIT " << num(0.0);
  put_rot(os, x.rot);
  put(os, x.pos);
  put(os, x.vel);
  put(os, x.bg);
  put(os, x.ba);
  os << '\n';

  // Merge by time; IMU before wheel before camera at equal stamps.
  std::size_t i = 0, w = 0, c = 0;
  while (i < stream.imu.size() || w < stream.wheel.size() || c < stream.frames.size()) {
    const double ti = i < stream.imu.size() ? stream.imu[i].stamp : INFINITY;
    const double tw = w < stream.wheel.size() ? stream.wheel[w].stamp : INFINITY;
    const double tc = c < stream.frames.size() ? stream.frames[c].stamp : INFINITY;
    if (ti <= tw && ti <= tc) {
      const ImuSample& s = stream.imu[i++];
      os << "IMU " << num(s.stamp);
      put(os, s.omega);
      put(os, s.accel);
      os << '\n';
    } else if (tw <= tc) {
      const WheelSample& s = stream.wheel[w++];
      os << "WHEEL " << num(s.stamp) << ' ' << num(s.w) << ' ' << num(s.v) << '\n';
    } else {
      const CameraFrame& f = stream.frames[c++];
      os << "FRAME " << num(f.stamp) << ' ' << f.features.size() << '\n';
      for (const auto& [id, z] : f.features) {
        os << "CAM " << num(f.stamp) << ' ' << id << ' ' << num(z.x()) << ' ' << num(z.y()) << '\n';
      }
    }
  }
}

MeasurementStream read_log(std::istream& is) {
  Reader in(is);
  in.expect_header(kLogHeader);
  MeasurementStream out;
  bool have_init = false;
  double last_t = -INFINITY;
  std::size_t pending_cam = 0;
  while (in.next()) {
    const std::string& tag = in.tag();
    if (tag == "INIT") {
      in.arity(17);
      if (have_init) throw ParseError(in.line(), "duplicate INIT");
      out.initial.rot = in.rot(2);
      out.initial.pos = in.vec(6);
      out.initial.vel = in.vec(9);
      out.initial.bg = in.vec(12);
      out.initial.ba = in.vec(15);
      have_init = true;
      continue;
    }
    const bool is_cam = tag == "CAM";
    if (!is_cam && pending_cam != 0) throw ParseError(in.line(), "FRAME announced more CAM records");
    double t = 0.0;
    if (tag == "IMU") {
      in.arity(7);
      t = in.real(1);
      out.imu.push_back({t, in.vec(2), in.vec(5)});
    } else if (tag == "WHEEL") {
      in.arity(3);
      t = in.real(1);
      out.wheel.push_back({t, in.real(2), in.real(3)});
    } else if (tag == "FRAME") {
      in.arity(2);
      t = in.real(1);
      CameraFrame f;
      f.stamp = t;
      pending_cam = in.integer(2);
      f.features.reserve(pending_cam);
      out.frames.push_back(std::move(f));
    } else if (is_cam) {
      in.arity(4);
      t = in.real(1);
      if (pending_cam == 0 || out.frames.empty() || out.frames.back().stamp != t) {
        throw ParseError(in.line(), "CAM record outside its FRAME");
      }
      out.frames.back().features.emplace_back(in.integer(2), Vector2d(in.real(3), in.real(4)));
      --pending_cam;
    } else {
      throw ParseError(in.line(), "unknown record '" + tag + "'");
    }
    if (t < last_t) throw ParseError(in.line(), "timestamps must not decrease");
    last_t = t;
  }
  if (pending_cam != 0) throw ParseError(in.line(), "truncated FRAME");
  if (!have_init && (!out.imu.empty() || !out.frames.empty())) throw ParseError(in.line(), "missing INIT record");
  return out;
}

void write_ground_truth(std::ostream& os, const GroundTruth& gt, const MeasurementStream& stream) {
  os << kTruthHeader << '\n';
  for (std::size_t k = 0; k < gt.samples.size(); ++k) {
    const TruthSample& s = gt.samples[k];
    os << "GT " << num(s.stamp);
    put_rot(os, s.rot);
    put(os, s.pos);
    put(os, s.vel);
    put(os, k < stream.true_bg.size() ? stream.true_bg[k] : Vector3d::Zero());
    put(os, k < stream.true_ba.size() ? stream.true_ba[k] : Vector3d::Zero());
    os << '\n';
  }
  for (FeatureId id : stream.moving_ids) os << "MOVING " << id << '\n';
}

const TruthSample& TruthLog::at(double t) const {
  if (samples.empty()) throw std::out_of_range("TruthLog: empty");
  auto it = std::upper_bound(samples.begin(), samples.end(), t + 1e-9,
                             [](double v, const TruthSample& s) { return v < s.stamp; });
  if (it == samples.begin()) return samples.front();
  return *(it - 1);
}

TruthLog read_ground_truth(std::istream& is) {
  Reader in(is);
  in.expect_header(kTruthHeader);
  TruthLog out;
  while (in.next()) {
    if (in.tag() == "GT") {
      in.arity(17);
      TruthSample s;
      s.stamp = in.real(1);
      s.rot = in.rot(2);
      s.pos = in.vec(6);
      s.vel = in.vec(9);
      out.samples.push_back(s);
      out.bg.push_back(in.vec(12));
      out.ba.push_back(in.vec(15));
    } else if (in.tag() == "MOVING") {
      in.arity(1);
      out.moving_ids.push_back(in.integer(1));
    } else {
      throw ParseError(in.line(), "unknown record '" + in.tag() + "'");
    }
  }
  return out;
}

void write_trajectory_header(std::ostream& os) {
  os << kTrajectoryHeader << '\n';
  os << "t,px,py,pz,rx,ry,rz,vx,vy,vz,bgx,bgy,bgz,bax,bay,baz";
  for (int i = 0; i < kImuErrorDim; ++i) os << ",P" << i;
  os << '\n';
}

void write_trajectory_row(std::ostream& os, double t, const FilterState& state) {
  const ImuState& x = state.imu;
  const Vector3d r = so3_log(x.rot);
  os << num(t);
  for (const Vector3d* v : {&x.pos, &r, &x.vel, &x.bg, &x.ba}) {
    for (int i = 0; i < 3; ++i) os << ',' << num((*v)(i));
  }
  for (int i = 0; i < kImuErrorDim; ++i) os << ',' << num(state.cov(i, i));
  os << '\n';
}

std::vector<TrajectoryRow> read_trajectory(std::istream& is) {
  std::string line;
  if (!std::getline(is, line) || line != kTrajectoryHeader) throw ParseError(1, "expected trajectory header");
  if (!std::getline(is, line)) throw ParseError(2, "missing column names");
  std::vector<TrajectoryRow> rows;
  int number = 2;
  while (std::getline(is, line)) {
    ++number;
    if (line.empty()) continue;
    std::vector<double> v;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
      try {
        v.push_back(std::stod(cell));
      } catch (const std::exception&) {
        throw ParseError(number, "bad number '" + cell + "'");
      }
    }
    if (v.size() != 16 + kImuErrorDim) throw ParseError(number, "wrong column count");
    TrajectoryRow row;
    row.t = v[0];
    row.state.pos = Vector3d(v[1], v[2], v[3]);
    row.state.rot = so3_exp(Vector3d(v[4], v[5], v[6]));
    row.state.vel = Vector3d(v[7], v[8], v[9]);
    row.state.bg = Vector3d(v[10], v[11], v[12]);
    row.state.ba = Vector3d(v[13], v[14], v[15]);
    row.cov_diag = Eigen::Map<VectorXd>(v.data() + 16, kImuErrorDim);
    rows.push_back(std::move(row));
  }
  return rows;
}

}  // namespace viwo
