#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <utility>
#include <vector>

#include "sgnn/mat.hpp"
#include "sgnn/mlp.hpp"
#include "sgnn/rng.hpp"
#include "sgnn/tape.hpp"
#include "sgnn/vec3.hpp"

namespace sgnn {

/// m three-vectors (the columns of a 3×m matrix).
struct GeoTensor {
  std::vector<Vec3> channels;

  GeoTensor() = default;
  explicit GeoTensor(std::vector<Vec3> c) : channels(std::move(c)) {}

  std::size_t size() const { return channels.size(); }
  const Vec3& operator[](std::size_t c) const { return channels[c]; }
  Vec3& operator[](std::size_t c) { return channels[c]; }

  /// 1×3m row in the channel-major batch layout.
  Mat to_row() const;
  static GeoTensor from_row(const Mat& row, std::size_t r = 0);
  bool operator==(const GeoTensor&) const = default;
};

struct Gravity {
  Vec3 direction{0.0, 0.0, -1.0};
  double magnitude = 9.81;

  /// Throws ContractViolation unless ‖direction‖ = 1 within 1e-12.
  void validate() const;
  Vec3 vector() const { return magnitude * direction; }
};

/// x ↦ O·x + t; direction-like channels only see O.
struct SubgroupTransform {
  Mat3 O = identity3();
  Vec3 t{0.0, 0.0, 0.0};

  Vec3 apply_point(const Vec3& x) const { return O * x + t; }
  Vec3 apply_vector(const Vec3& v) const { return O * v; }
  /// Every channel rotated; the listed channels also translated.
  GeoTensor apply(const GeoTensor& z, const std::vector<std::size_t>& positional = {}) const;
};

/// Two unit vectors completing g_dir to an orthonormal frame.
std::pair<Vec3, Vec3> horizontal_basis(const Vec3& g_dir);

/// Rotation by `theta` about the up axis −g_dir, optionally preceded by the
/// reflection across the vertical plane spanned by g_dir and the first
/// horizontal basis vector.
SubgroupTransform make_subgroup_transform(const Gravity& g, double theta, bool reflect, const Vec3& t = {0, 0, 0});
/// Random element of O_g(3): uniform angle, fair-coin reflection.
SubgroupTransform sample_subgroup_transform(Rng& rng, const Gravity& g, double translation_scale = 0.0);
SubgroupTransform sample_subgroup_transform(std::uint64_t seed, const Gravity& g, double translation_scale = 0.0);
/// Haar-random element of O(3) (rotation times ±I).
Mat3 sample_orthogonal(Rng& rng);
/// Rotation by `angle` about a horizontal axis at azimuth `azimuth`; never fixes g for angle ∉ 2πℤ.
Mat3 horizontal_axis_rotation(const Gravity& g, double azimuth, double angle);

/// [x_i − x_j, velocity channels of i, velocity channels of j].
GeoTensor ominus(const GeoTensor& zi, const GeoTensor& zj);

/// Knobs shared by every scalarization block.
struct ScalarizeOptions {
  /// Append η(h)·g_dir as an extra basis channel.
  bool gravity = true;
  /// Divide the Gram matrix by its Frobenius norm (skipped below 1e-12).
  bool normalize = true;
  /// Basis channels kept before the Gram; empty keeps all.
  std::vector<int> channel_mask;
  /// Scalar features handed to σ; empty keeps all.
  std::vector<int> scalar_mask;
  /// Output vector channels m'.
  int out_channels = 1;
  /// Extra invariant outputs split off σ's tail.
  int extra_scalars = 0;
};

inline constexpr double kGramEps = 1e-12;

/// Number of basis channels seen by σ for `channels` input channels.
int scalarize_basis(int channels, const ScalarizeOptions& opt);
/// σ input / output widths for the given layout.
std::size_t scalarize_in_dim(int channels, int scalar_dim, const ScalarizeOptions& opt);
std::size_t scalarize_out_dim(int channels, const ScalarizeOptions& opt);

struct ScalarizeResult {
  Tape::Var vectors;  // B×3m'
  Tape::Var scalars;  // B×extra (absent when extra_scalars = 0)
};

/// Row-batched scalarization: z is B×3m, h is B×n. `eta` may be null when
/// gravity is off.
ScalarizeResult scalarize(MlpBinder& binder, Tape::Var z, int channels, Tape::Var h, const Vec3& g_dir,
                          const MLPParams& sigma, const MLPParams* eta, const ScalarizeOptions& opt);

/// Gram input σ sees (after masking, augmentation and normalization); B×(basis²).
Tape::Var scalarize_gram(MlpBinder& binder, Tape::Var z, int channels, Tape::Var h, const Vec3& g_dir,
                         const MLPParams* eta, const ScalarizeOptions& opt);

/// Z·σ(norm(ZᵀZ), h) with V of shape m×m'.
GeoTensor scalarize_equivariant(const GeoTensor& z, const std::vector<double>& h, const MLPParams& sigma,
                                int out_channels = 1, bool normalize = true);

struct SubequivariantOutput {
  GeoTensor vectors;
  std::vector<double> scalars;
};

/// [Z, η(h)g]·σ(norm(Gram), h); extra invariant outputs are returned in `scalars`.
SubequivariantOutput scalarize_subequivariant(const GeoTensor& z, const std::vector<double>& h, const Gravity& g,
                                              const MLPParams& sigma, const MLPParams& eta, int out_channels = 1,
                                              int extra_scalars = 0, bool normalize = true);

/// Returns O ∈ O_g(3) with O·Z2 ≈ Z1. Throws PreconditionError when the
/// gravity-augmented Gram matrices differ by more than 1e-8.
SubgroupTransform lemma5_witness(const GeoTensor& z1, const GeoTensor& z2, const Gravity& g);

enum class Group { O3, Og3, Translation, E3, Og3Translation };

const char* group_name(Group g);

/// Geometric inputs/outputs of a function under test. Channels listed in
/// `positional` are points (rotated and translated); all others are directions.
struct EquivariantIO {
  std::vector<GeoTensor> vectors;
  std::vector<std::vector<double>> scalars;
  std::vector<std::pair<std::size_t, std::size_t>> positional;
};

using EquivariantFn = std::function<EquivariantIO(const EquivariantIO&)>;

EquivariantIO transform_io(const EquivariantIO& io, const SubgroupTransform& T);

/// Sample a transform of `group` (translation entries ~ N(0, translation_scale²)).
SubgroupTransform sample_group_element(Rng& rng, Group group, const Gravity& g, double translation_scale = 1.0);

/// max over trials of ‖fn(T·in) − T·fn(in)‖∞ (scalar outputs compared for invariance).
double check_equivariance(const EquivariantFn& fn, const EquivariantIO& input, Group group, int trials,
                          std::uint64_t seed, const Gravity& g = {});

/// Max deviation of a single transform.
double equivariance_deviation(const EquivariantFn& fn, const EquivariantIO& input, const SubgroupTransform& T);

}  // namespace sgnn
