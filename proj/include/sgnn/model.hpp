#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "sgnn/baselines.hpp"
#include "sgnn/checkpoint.hpp"
#include "sgnn/graph.hpp"
#include "sgnn/somp.hpp"

namespace sgnn {

enum class Variant { SGNN, GNS, EGNN, EGNN_S, GMN, GMN_S };

const char* variant_name(Variant v);
/// Throws ContractViolation on unknown names.
Variant parse_variant(const std::string& name);

/// Switches that remove one ingredient of the hierarchical model.
struct Ablation {
  /// One flat object-aware block over every edge.
  bool no_hierarchy = false;
  /// Particle stages drop the object terms; stage 3 then reads stage-1 states.
  bool no_object_aware = false;
  /// The particle stages run on the full edge set.
  bool no_edge_separation = false;
  /// Scalarization without the gravity direction.
  bool full_equivariance = false;

  bool any() const { return no_hierarchy || no_object_aware || no_edge_separation || full_equivariance; }
};

struct ModelConfig {
  Variant variant = Variant::SGNN;
  Ablation ablation;
  /// Width of the per-particle attributes (static attributes plus height).
  int attr_dim = 2;
  int hidden = 64;
  /// Message-passing rounds per block; 0 picks 4 for SGNN and 10 otherwise.
  int iterations = 0;
  int message_scalars = 16;
  Activation activation = Activation::SiLU;
  double radius = 0.08;
  Gravity gravity;
  /// Feed stage-1 outputs (instead of the raw particle state) to stage 3.
  bool stage3_from_stage1 = false;
  /// Height attribute: clamp((x·(−g) − ground) / height_scale, 0, 1). The default
  /// matches the cutoff radius, so the feature saturates beyond interaction range.
  double ground = 0.0;
  double height_scale = 0.08;
  /// Positions and velocities enter in units of this length and the output
  /// is scaled back, so parameter steps move predictions by a fixed fraction
  /// of the typical motion.
  double length_scale = 1.0;

  int effective_iterations() const { return iterations > 0 ? iterations : (variant == Variant::SGNN ? 4 : 10); }
  /// Throws ContractViolation on inconsistent settings.
  void validate() const;
  /// One line of key=value pairs.
  std::string describe() const;
};

struct Model {
  ModelConfig config;
  SOMPParams stage1;  // particles, inter-object edges
  SOMPParams stage2;  // objects, object-level edges
  SOMPParams stage3;  // particles, inner-object edges
  BaselineParams baseline;

  bool uses_stage2() const;
  bool uses_stage3() const;
  std::vector<MLPParams*> mlps();
  std::vector<const MLPParams*> mlps() const;
  std::size_t parameter_count() const;
};

Model make_model(const ModelConfig& cfg, std::uint64_t seed);

/// Stage configurations derived from a model config.
SompConfig stage1_config(const ModelConfig& cfg);
SompConfig stage2_config(const ModelConfig& cfg);
SompConfig stage3_config(const ModelConfig& cfg);
BaselineConfig baseline_config(const ModelConfig& cfg);

/// Next positions (N×3) from z = [x, v] (N×6) and attributes h (N×attr_dim).
Tape::Var model_forward(MlpBinder& binder, const Model& model, Tape::Var z, Tape::Var h,
                        const std::vector<int>& object_of, int objects, const EdgeSets& edges);

/// Attributes must already be featurized (see `featurize`).
std::vector<Vec3> predict_step(const Model& model, const ParticleSystem& sys, const EdgeSets& edges);
std::vector<Vec3> predict_step(const Model& model, const ParticleSystem& sys);

/// [static attributes, height] per particle.
Mat featurize(const ModelConfig& cfg, const Mat& static_attrs, const std::vector<Vec3>& x);

/// Parameters plus "config.*" entries describing the layout.
NamedTensors model_to_tensors(const Model& model);
/// Throws FormatError when the tensors do not describe a consistent model.
Model model_from_tensors(const NamedTensors& tensors);
void save_model(const Model& model, const std::filesystem::path& path);
Model load_model(const std::filesystem::path& path);

struct RigidFit {
  Mat3 R = identity3();
  Vec3 t{0, 0, 0};
  std::vector<Vec3> points;
  /// Reference was (near) collinear; only a translation was fitted.
  bool translation_only = false;
  int inliers = 0;
};

struct RansacOptions {
  int iterations = 20;
  int subset = 4;
  double threshold = 0.01;
};

/// Best rigid motion of `reference` onto `predicted` (least squares, proper
/// rotation). With `ransac`, random subsets vote and the fit is redone on
/// the best inlier set.
RigidFit rigid_project(const std::vector<Vec3>& predicted, const std::vector<Vec3>& reference, bool ransac = false,
                       std::uint64_t seed = 0, const RansacOptions& opt = {});

struct RolloutStart {
  std::vector<Vec3> previous;  // frame t−1
  std::vector<Vec3> current;   // frame t
  Mat static_attrs;            // N×(attr_dim − 1)
  std::vector<int> object_of;
  int objects = 0;
  /// Per object: project onto its reference shape after every step.
  std::vector<bool> rigid;
  /// Rest layout used for rigid projection (any rigidly moved copy works).
  std::vector<Vec3> reference;
};

struct RolloutOptions {
  bool rigid = false;
  bool ransac = false;
  std::uint64_t seed = 0;
  /// Keep the graph of the start frame instead of rebuilding it every step.
  bool freeze_edges = false;
};

/// `steps` predicted frames following `start.current`. Velocities are
/// one-frame differences; edges are rebuilt every step unless frozen.
std::vector<std::vector<Vec3>> rollout(const Model& model, const RolloutStart& start, int steps,
                                       const RolloutOptions& opt = {});

}  // namespace sgnn
