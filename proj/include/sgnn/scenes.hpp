#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "sgnn/mat.hpp"
#include "sgnn/subequivariance.hpp"
#include "sgnn/vec3.hpp"

namespace sgnn {

/// Falling-cubes scene. Lengths in metres, time in seconds.
struct SceneConfig {
  int objects = 3;
  double cube_side = 0.1;
  int lattice = 3;  // particles per cube edge
  double gravity = 9.81;
  double ground = 0.0;
  double stiffness = 5000.0;  // per particle contact spring
  double damping = 20.0;      // per particle contact damper
  double friction = 0.3;
  double dt = 1.0 / 250.0;
  int record_every = 5;
  /// Recorded steps after the initial frame (the trajectory holds frames + 1 snapshots).
  int frames = 40;
  std::uint64_t seed = 0;
  /// Initial conditions: cube k starts near height spawn_height + k·spawn_gap,
  /// launched along +x with a speed in [launch_min, launch_max].
  double spawn_height = 0.15;
  double spawn_gap = 0.28;
  double spawn_jitter = 0.05;
  double launch_min = 0.2;
  double launch_max = 0.6;
  double spin = 2.0;  // max initial angular speed, rad/s

  /// Throws ContractViolation naming the offending key.
  void validate() const;
  double frame_dt() const { return dt * record_every; }
  int particles() const { return objects * lattice * lattice * lattice; }
  /// Particle radius: half the lattice spacing.
  double particle_radius() const { return 0.5 * cube_side / (lattice - 1); }
  /// key=value lines, in the order accepted by parse_scene_config.
  std::string to_text() const;
};

/// UTF-8 key=value lines; '#' starts a comment. Unknown keys, malformed
/// numbers and duplicates throw ParseError with the byte offset of the line.
SceneConfig parse_scene_config(const std::string& text);
SceneConfig load_scene_config(const std::filesystem::path& path);

struct Quat {
  double w = 1, x = 0, y = 0, z = 0;
};

Quat quat_multiply(const Quat& a, const Quat& b);
Mat3 quat_to_matrix(const Quat& q);
/// Unit quaternion for a proper rotation matrix.
Quat quat_from_matrix(const Mat3& R);

struct BodyState {
  Vec3 com{0, 0, 0};
  Vec3 velocity{0, 0, 0};
  Quat orientation;
  Vec3 angular_velocity{0, 0, 0};  // world frame
};

struct Trajectory {
  std::vector<std::vector<Vec3>> frames;  // T × N
  std::vector<int> object_of;
  Mat attrs;  // N×a static attributes; column 0 = rigid flag
  double dt = 0.0;  // time between frames

  std::size_t particles() const { return object_of.size(); }
  int objects() const;
  /// Rigid flag per object (column 0 of attrs at the object's first particle).
  std::vector<bool> rigid_objects() const;
  /// Throws ShapeError on ragged frames or mismatched attribute rows.
  void validate() const;
  bool operator==(const Trajectory&) const = default;
};

/// Body-frame particle offsets of one cube (centred lattice).
std::vector<Vec3> cube_lattice(const SceneConfig& cfg);
/// Seeded initial conditions for cfg.objects cubes.
std::vector<BodyState> sample_initial_state(const SceneConfig& cfg);
/// Integrate from the given bodies and record frames. Throws GenerationError
/// when a particle sinks deeper than a cube side (step too large).
Trajectory simulate(const SceneConfig& cfg, const std::vector<BodyState>& initial,
                    std::vector<std::vector<BodyState>>* states = nullptr);
Trajectory generate_scene(const SceneConfig& cfg);

/// Kinetic plus gravitational potential energy of the bodies.
double mechanical_energy(const SceneConfig& cfg, const std::vector<BodyState>& bodies);

/// "SGTJ", version u32, N u32, T u32, dt f64, object_of u32×N, attribute
/// columns u32 and N×a f64, then T frames of N×3 f64 (little endian).
std::vector<unsigned char> encode_trajectory(const Trajectory& traj);
Trajectory decode_trajectory(const std::vector<unsigned char>& bytes);
void save_trajectory(const Trajectory& traj, const std::filesystem::path& path);
Trajectory load_trajectory(const std::filesystem::path& path);

/// Mean over particles of the squared position error at frame t.
double rollout_mse(const std::vector<std::vector<Vec3>>& pred, const std::vector<std::vector<Vec3>>& truth, int t);
double rollout_mse(const Trajectory& pred, const Trajectory& truth, int t);

/// Whether some frame brings a particle of object k within `threshold` of a particle of object l.
bool objects_contact(const Trajectory& traj, int k, int l, double threshold);
/// Fraction of trajectories whose predicted contact flag equals the true one.
double contact_accuracy(const std::vector<Trajectory>& pred, const std::vector<Trajectory>& truth,
                        std::pair<int, int> pair, double threshold);

/// Trajectory with every frame mapped by T (the static data is unchanged).
Trajectory transform_trajectory(const Trajectory& traj, const SubgroupTransform& T);

}  // namespace sgnn
