#include "sgnn/scenes.hpp"

#include <charconv>
#include <cmath>
#include <cstring>
#include <functional>
#include <map>
#include <sstream>

#include "sgnn/checkpoint.hpp"
#include "sgnn/errors.hpp"
#include "sgnn/rng.hpp"

namespace sgnn {

// ---------------------------------------------------------------------------
// Config

void SceneConfig::validate() const {
  auto require = [](bool ok, const char* key, const char* what) {
    if (!ok) throw ContractViolation(std::string("scene config: ") + key + " " + what);
  };
  require(objects >= 1, "objects", "must be at least 1");
  require(lattice >= 2, "lattice", "must be at least 2");
  require(cube_side > 0 && std::isfinite(cube_side), "cube_side", "must be positive");
  require(gravity > 0 && std::isfinite(gravity), "gravity", "must be positive");
  require(std::isfinite(ground), "ground", "must be finite");
  require(stiffness > 0 && std::isfinite(stiffness), "stiffness", "must be positive");
  require(damping > 0 && std::isfinite(damping), "damping", "must be positive");
  require(friction > 0 && std::isfinite(friction), "friction", "must be positive");
  require(dt > 0 && std::isfinite(dt), "dt", "must be positive");
  require(record_every >= 1, "record_every", "must be at least 1");
  require(frames >= 0, "frames", "must be non-negative");
  require(std::isfinite(dt * record_every * frames), "frames", "gives an infinite duration");
  require(spawn_gap > 0 && spawn_jitter >= 0 && spawn_height > 0, "spawn_*", "must be positive");
  require(launch_min >= 0 && launch_max >= launch_min, "launch_min/launch_max", "must satisfy 0 <= min <= max");
  require(spin >= 0, "spin", "must be non-negative");
}

namespace {

struct Field {
  const char* key;
  std::function<void(SceneConfig&, std::string_view)> set;
  std::function<std::string(const SceneConfig&)> get;
};

template <class T>
bool parse_number(std::string_view s, T& out) {
  const auto* end = s.data() + s.size();
  const auto r = std::from_chars(s.data(), end, out);
  return r.ec == std::errc() && r.ptr == end;
}

std::string format_double(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

#define SGNN_FIELD(name, type)                                                                  \
  Field {                                                                                       \
    #name,                                                                                      \
        [](SceneConfig& c, std::string_view s) {                                                \
          type v{};                                                                             \
          if (!parse_number(s, v)) throw std::invalid_argument(#name);                          \
          c.name = v;                                                                           \
        },                                                                                      \
        [](const SceneConfig& c) {                                                              \
          if constexpr (std::is_floating_point_v<type>) return format_double(c.name);           \
          else return std::to_string(c.name);                                                   \
        }                                                                                       \
  }

const std::vector<Field>& fields() {
  static const std::vector<Field> f{
      SGNN_FIELD(objects, int),          SGNN_FIELD(cube_side, double),  SGNN_FIELD(lattice, int),
      SGNN_FIELD(gravity, double),       SGNN_FIELD(ground, double),     SGNN_FIELD(stiffness, double),
      SGNN_FIELD(damping, double),       SGNN_FIELD(friction, double),   SGNN_FIELD(dt, double),
      SGNN_FIELD(record_every, int),     SGNN_FIELD(frames, int),        SGNN_FIELD(seed, std::uint64_t),
      SGNN_FIELD(spawn_height, double),  SGNN_FIELD(spawn_gap, double),  SGNN_FIELD(spawn_jitter, double),
      SGNN_FIELD(launch_min, double),    SGNN_FIELD(launch_max, double), SGNN_FIELD(spin, double),
  };
  return f;
}

#undef SGNN_FIELD

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

}  // namespace

std::string SceneConfig::to_text() const {
  std::string out;
  for (const Field& f : fields()) out += std::string(f.key) + "=" + f.get(*this) + "\n";
  return out;
}

SceneConfig parse_scene_config(const std::string& text) {
  SceneConfig cfg;
  std::map<std::string, bool> seen;
  std::size_t pos = 0;
  while (pos < text.size()) {
    const std::size_t eol = std::min(text.find('\n', pos), text.size());
    std::string_view line(text.data() + pos, eol - pos);
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (!line.empty()) {
      const auto eq = line.find('=');
      if (eq == std::string_view::npos) throw ParseError("scene config: expected key=value", pos);
      const std::string key(trim(line.substr(0, eq)));
      const std::string_view value = trim(line.substr(eq + 1));
      const Field* field = nullptr;
      for (const Field& f : fields())
        if (key == f.key) field = &f;
      if (!field) throw ParseError("scene config: unknown key '" + key + "'", pos);
      if (seen[key]) throw ParseError("scene config: duplicate key '" + key + "'", pos);
      seen[key] = true;
      try {
        field->set(cfg, value);
      } catch (const std::invalid_argument&) {
        throw ParseError("scene config: bad value '" + std::string(value) + "' for " + key, pos);
      }
    }
    pos = eol + 1;
  }
  cfg.validate();
  return cfg;
}

SceneConfig load_scene_config(const std::filesystem::path& path) {
  const auto bytes = read_file(path);
  return parse_scene_config(std::string(bytes.begin(), bytes.end()));
}

// ---------------------------------------------------------------------------
// Rigid-body kinematics

Quat quat_multiply(const Quat& a, const Quat& b) {
  return {a.w * b.w - a.x * b.x - a.y * b.y - a.z * b.z, a.w * b.x + a.x * b.w + a.y * b.z - a.z * b.y,
          a.w * b.y - a.x * b.z + a.y * b.w + a.z * b.x, a.w * b.z + a.x * b.y - a.y * b.x + a.z * b.w};
}

Mat3 quat_to_matrix(const Quat& q) {
  const double w = q.w, x = q.x, y = q.y, z = q.z;
  return {{{1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)},
           {2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)},
           {2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)}}};
}

Quat quat_from_matrix(const Mat3& R) {
  Quat q;
  const double tr = R[0][0] + R[1][1] + R[2][2];
  if (tr > 0) {
    const double s = 2.0 * std::sqrt(tr + 1.0);
    q = {0.25 * s, (R[2][1] - R[1][2]) / s, (R[0][2] - R[2][0]) / s, (R[1][0] - R[0][1]) / s};
  } else if (R[0][0] > R[1][1] && R[0][0] > R[2][2]) {
    const double s = 2.0 * std::sqrt(1.0 + R[0][0] - R[1][1] - R[2][2]);
    q = {(R[2][1] - R[1][2]) / s, 0.25 * s, (R[0][1] + R[1][0]) / s, (R[0][2] + R[2][0]) / s};
  } else if (R[1][1] > R[2][2]) {
    const double s = 2.0 * std::sqrt(1.0 + R[1][1] - R[0][0] - R[2][2]);
    q = {(R[0][2] - R[2][0]) / s, (R[0][1] + R[1][0]) / s, 0.25 * s, (R[1][2] + R[2][1]) / s};
  } else {
    const double s = 2.0 * std::sqrt(1.0 + R[2][2] - R[0][0] - R[1][1]);
    q = {(R[1][0] - R[0][1]) / s, (R[0][2] + R[2][0]) / s, (R[1][2] + R[2][1]) / s, 0.25 * s};
  }
  return q;
}

namespace {

Quat normalized(const Quat& q) {
  const double n = std::sqrt(q.w * q.w + q.x * q.x + q.y * q.y + q.z * q.z);
  return {q.w / n, q.x / n, q.y / n, q.z / n};
}

/// Rotation by angle |w|·dt about w.
Quat rotation_step(const Vec3& w, double dt) {
  const double speed = norm(w);
  if (speed == 0.0) return {};
  const double half = 0.5 * speed * dt;
  const double s = std::sin(half) / speed;
  return {std::cos(half), s * w[0], s * w[1], s * w[2]};
}

const Vec3 kUp{0.0, 0.0, 1.0};

struct Forces {
  std::vector<Vec3> force;
  std::vector<Vec3> torque;
};

class Simulator {
 public:
  explicit Simulator(const SceneConfig& cfg) : cfg_(cfg), body_(cube_lattice(cfg)) {
    const double n = static_cast<double>(body_.size());
    particle_mass_ = 1.0 / n;
    double spread = 0.0;
    for (const Vec3& b : body_) spread += squared_norm(b);
    inertia_ = particle_mass_ * 2.0 * spread / 3.0;  // isotropic for a cubic lattice
  }

  double inertia() const { return inertia_; }

  void positions(const std::vector<BodyState>& bodies, std::vector<Vec3>& out) const {
    out.clear();
    for (const BodyState& s : bodies) {
      const Mat3 R = quat_to_matrix(s.orientation);
      for (const Vec3& b : body_) out.push_back(R * b + s.com);
    }
  }

  Forces forces(const std::vector<BodyState>& bodies) {
    positions(bodies, x_);
    const std::size_t per = body_.size();
    u_.resize(x_.size());
    for (std::size_t i = 0; i < x_.size(); ++i) {
      const BodyState& s = bodies[i / per];
      u_[i] = s.velocity + cross(s.angular_velocity, x_[i] - s.com);
    }
    f_.assign(x_.size(), Vec3{0.0, 0.0, -cfg_.gravity * particle_mass_});

    const double r = cfg_.particle_radius();
    for (std::size_t i = 0; i < x_.size(); ++i) {
      const double pen = r - (dot(x_[i], kUp) - cfg_.ground);
      if (pen <= 0.0) continue;
      if (pen > cfg_.cube_side)
        throw GenerationError("scene: particle " + std::to_string(i) + " sank " + std::to_string(pen) +
                              " below the ground; use a smaller dt");
      contact(i, kUp, pen, u_[i], nullptr);
    }
    for (std::size_t i = 0; i < x_.size(); ++i)
      for (std::size_t j = (i / per + 1) * per; j < x_.size(); ++j) {
        const Vec3 d = x_[i] - x_[j];
        const double dist2 = squared_norm(d);
        if (dist2 >= 4.0 * r * r) continue;
        const double dist = std::sqrt(dist2);
        if (dist < 1e-9 * r)
          throw GenerationError("scene: particles " + std::to_string(i) + " and " + std::to_string(j) +
                                " coincide; use a smaller dt");
        contact(i, (1.0 / dist) * d, 2.0 * r - dist, u_[i] - u_[j], &j);
      }

    Forces out;
    out.force.assign(bodies.size(), Vec3{0, 0, 0});
    out.torque.assign(bodies.size(), Vec3{0, 0, 0});
    for (std::size_t i = 0; i < x_.size(); ++i) {
      const std::size_t k = i / per;
      out.force[k] += f_[i];
      out.torque[k] += cross(x_[i] - bodies[k].com, f_[i]);
    }
    return out;
  }

  /// Penalty spring-damper along n plus velocity-capped Coulomb friction;
  /// applied to i and (if given) the opposite to j.
  void contact(std::size_t i, const Vec3& n, double pen, const Vec3& rel, const std::size_t* j) {
    const double vn = dot(rel, n);
    const double fn = cfg_.stiffness * pen - cfg_.damping * vn;
    if (fn <= 0.0) return;
    Vec3 f = fn * n;
    const Vec3 vt = rel - vn * n;
    const double speed = norm(vt);
    if (speed > 0.0) {
      const double ft = std::min(cfg_.friction * fn, cfg_.damping * speed);
      f -= (ft / speed) * vt;
    }
    f_[i] += f;
    if (j) f_[*j] -= f;
  }

 private:
  SceneConfig cfg_;
  std::vector<Vec3> body_;
  double particle_mass_ = 0.0;
  double inertia_ = 0.0;
  std::vector<Vec3> x_, u_, f_;
};

}  // namespace

std::vector<Vec3> cube_lattice(const SceneConfig& cfg) {
  std::vector<Vec3> out;
  const double step = cfg.cube_side / (cfg.lattice - 1), half = 0.5 * cfg.cube_side;
  for (int a = 0; a < cfg.lattice; ++a)
    for (int b = 0; b < cfg.lattice; ++b)
      for (int c = 0; c < cfg.lattice; ++c) out.push_back({a * step - half, b * step - half, c * step - half});
  return out;
}

std::vector<BodyState> sample_initial_state(const SceneConfig& cfg) {
  cfg.validate();
  Rng rng(cfg.seed);
  std::vector<BodyState> out;
  const double j = cfg.spawn_jitter;
  for (int k = 0; k < cfg.objects; ++k) {
    BodyState s;
    s.com = {rng.uniform(-j, j), rng.uniform(-j, j),
             cfg.ground + cfg.spawn_height + k * cfg.spawn_gap + rng.uniform(0.0, j)};
    s.orientation = normalized({rng.normal(), rng.normal(), rng.normal(), rng.normal()});
    s.velocity = {rng.uniform(cfg.launch_min, cfg.launch_max), rng.uniform(-0.05, 0.05), 0.0};
    const double w = cfg.spin / std::sqrt(3.0);
    s.angular_velocity = {rng.uniform(-w, w), rng.uniform(-w, w), rng.uniform(-w, w)};
    out.push_back(s);
  }
  return out;
}

Trajectory simulate(const SceneConfig& cfg, const std::vector<BodyState>& initial,
                    std::vector<std::vector<BodyState>>* states) {
  cfg.validate();
  if (initial.size() != static_cast<std::size_t>(cfg.objects))
    throw ShapeError("simulate: " + std::to_string(initial.size()) + " bodies for " + std::to_string(cfg.objects) +
                     " objects");
  Simulator sim(cfg);
  const std::size_t per = static_cast<std::size_t>(cfg.lattice * cfg.lattice * cfg.lattice);
  Trajectory traj;
  traj.dt = cfg.frame_dt();
  for (int k = 0; k < cfg.objects; ++k) traj.object_of.insert(traj.object_of.end(), per, k);
  traj.attrs = Mat(traj.object_of.size(), 1, 1.0);

  std::vector<BodyState> bodies = initial;
  std::vector<Vec3> x;
  auto record = [&] {
    sim.positions(bodies, x);
    traj.frames.push_back(x);
    if (states) states->push_back(bodies);
  };
  record();

  // Kick-drift-kick leapfrog.
  const double dt = cfg.dt, half = 0.5 * cfg.dt;
  Forces f = sim.forces(bodies);
  for (int frame = 0; frame < cfg.frames; ++frame) {
    for (int sub = 0; sub < cfg.record_every; ++sub) {
      for (std::size_t k = 0; k < bodies.size(); ++k) {
        BodyState& s = bodies[k];
        s.velocity += half * f.force[k];  // unit body mass
        s.angular_velocity += (half / sim.inertia()) * f.torque[k];
        s.com += dt * s.velocity;
        s.orientation = normalized(quat_multiply(rotation_step(s.angular_velocity, dt), s.orientation));
      }
      f = sim.forces(bodies);
      for (std::size_t k = 0; k < bodies.size(); ++k) {
        bodies[k].velocity += half * f.force[k];
        bodies[k].angular_velocity += (half / sim.inertia()) * f.torque[k];
      }
    }
    record();
  }
  return traj;
}

Trajectory generate_scene(const SceneConfig& cfg) { return simulate(cfg, sample_initial_state(cfg)); }

double mechanical_energy(const SceneConfig& cfg, const std::vector<BodyState>& bodies) {
  const Simulator sim(cfg);
  double e = 0.0;
  for (const BodyState& s : bodies)
    e += 0.5 * squared_norm(s.velocity) + 0.5 * sim.inertia() * squared_norm(s.angular_velocity) +
         cfg.gravity * (dot(s.com, kUp) - cfg.ground);
  return e;
}

// ---------------------------------------------------------------------------
// Trajectories

int Trajectory::objects() const {
  int m = 0;
  for (int o : object_of) m = std::max(m, o + 1);
  return m;
}

std::vector<bool> Trajectory::rigid_objects() const {
  std::vector<bool> out(static_cast<std::size_t>(objects()), false);
  std::vector<bool> seen(out.size(), false);
  for (std::size_t i = 0; i < object_of.size(); ++i) {
    const auto k = static_cast<std::size_t>(object_of[i]);
    if (seen[k]) continue;
    seen[k] = true;
    out[k] = attrs.cols() > 0 && attrs(i, 0) != 0.0;
  }
  return out;
}

void Trajectory::validate() const {
  const std::size_t n = object_of.size();
  if (attrs.rows() != n) throw ShapeError("trajectory: attribute rows differ from particle count");
  for (std::size_t t = 0; t < frames.size(); ++t)
    if (frames[t].size() != n) throw ShapeError("trajectory: frame " + std::to_string(t) + " has the wrong size");
  for (int o : object_of)
    if (o < 0) throw ShapeError("trajectory: negative object index");
}

std::vector<unsigned char> encode_trajectory(const Trajectory& traj) {
  traj.validate();
  ByteWriter w;
  w.raw("SGTJ", 4);
  w.u32(1);
  w.u32(static_cast<std::uint32_t>(traj.particles()));
  w.u32(static_cast<std::uint32_t>(traj.frames.size()));
  w.f64(traj.dt);
  for (int o : traj.object_of) w.u32(static_cast<std::uint32_t>(o));
  w.u32(static_cast<std::uint32_t>(traj.attrs.cols()));
  for (double a : traj.attrs.values()) w.f64(a);
  for (const auto& frame : traj.frames)
    for (const Vec3& x : frame)
      for (double c : x) w.f64(c);
  return std::move(w.bytes());
}

Trajectory decode_trajectory(const std::vector<unsigned char>& bytes) {
  ByteReader r(bytes);
  char magic[4];
  r.raw(magic, 4, "magic");
  if (std::memcmp(magic, "SGTJ", 4) != 0) throw ParseError("bad trajectory magic", 0);
  const std::uint32_t version = r.u32("version");
  if (version != 1) throw ParseError("unsupported trajectory version " + std::to_string(version), 4);
  const std::uint32_t n = r.u32("particle count");
  const std::uint32_t frames = r.u32("frame count");
  Trajectory t;
  t.dt = r.f64("dt");
  if (static_cast<std::uint64_t>(n) * 4 > r.remaining()) throw ParseError("truncated object ids", r.offset());
  t.object_of.resize(n);
  for (std::uint32_t i = 0; i < n; ++i) {
    const std::uint32_t o = r.u32("object id");
    if (o >= n) throw ParseError("object id out of range", r.offset() - 4);
    t.object_of[i] = static_cast<int>(o);
  }
  const std::uint32_t a = r.u32("attribute width");
  if (static_cast<std::uint64_t>(n) * a * 8 > r.remaining()) throw ParseError("truncated attributes", r.offset());
  t.attrs = Mat(n, a);
  for (double& v : t.attrs.values()) v = r.f64("attribute");
  if (static_cast<std::uint64_t>(frames) * n * 24 != r.remaining())
    throw ParseError(r.remaining() < static_cast<std::uint64_t>(frames) * n * 24 ? "truncated frames"
                                                                                 : "trailing bytes after frames",
                     r.offset());
  t.frames.assign(frames, std::vector<Vec3>(n));
  for (auto& frame : t.frames)
    for (Vec3& x : frame)
      for (double& c : x) c = r.f64("position");
  return t;
}

void save_trajectory(const Trajectory& traj, const std::filesystem::path& path) {
  write_file(path, encode_trajectory(traj));
}

Trajectory load_trajectory(const std::filesystem::path& path) { return decode_trajectory(read_file(path)); }

double rollout_mse(const std::vector<std::vector<Vec3>>& pred, const std::vector<std::vector<Vec3>>& truth, int t) {
  if (t < 0 || static_cast<std::size_t>(t) >= pred.size() || static_cast<std::size_t>(t) >= truth.size())
    throw ShapeError("rollout_mse: frame " + std::to_string(t) + " missing");
  const auto& p = pred[static_cast<std::size_t>(t)];
  const auto& q = truth[static_cast<std::size_t>(t)];
  if (p.size() != q.size() || p.empty()) throw ShapeError("rollout_mse: particle counts differ or are zero");
  double s = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) s += squared_norm(p[i] - q[i]);
  return s / static_cast<double>(p.size());
}

double rollout_mse(const Trajectory& pred, const Trajectory& truth, int t) {
  return rollout_mse(pred.frames, truth.frames, t);
}

bool objects_contact(const Trajectory& traj, int k, int l, double threshold) {
  if (k < 0 || l < 0 || k >= traj.objects() || l >= traj.objects() || k == l)
    throw ContractViolation("contact: invalid object pair (" + std::to_string(k) + ", " + std::to_string(l) + ")");
  std::vector<std::size_t> a, b;
  for (std::size_t i = 0; i < traj.object_of.size(); ++i) {
    if (traj.object_of[i] == k) a.push_back(i);
    if (traj.object_of[i] == l) b.push_back(i);
  }
  const double t2 = threshold * threshold;
  for (const auto& frame : traj.frames)
    for (std::size_t i : a)
      for (std::size_t j : b)
        if (squared_norm(frame[i] - frame[j]) < t2) return true;
  return false;
}

double contact_accuracy(const std::vector<Trajectory>& pred, const std::vector<Trajectory>& truth,
                        std::pair<int, int> pair, double threshold) {
  if (pred.size() != truth.size() || pred.empty())
    throw ShapeError("contact_accuracy: prediction and truth counts differ or are zero");
  int hits = 0;
  for (std::size_t s = 0; s < pred.size(); ++s)
    hits += objects_contact(pred[s], pair.first, pair.second, threshold) ==
            objects_contact(truth[s], pair.first, pair.second, threshold);
  return static_cast<double>(hits) / static_cast<double>(pred.size());
}

Trajectory transform_trajectory(const Trajectory& traj, const SubgroupTransform& T) {
  Trajectory out = traj;
  for (auto& frame : out.frames)
    for (Vec3& x : frame) x = T.apply_point(x);
  return out;
}

}  // namespace sgnn
