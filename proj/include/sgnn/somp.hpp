#pragma once

#include <vector>

#include "sgnn/graph.hpp"
#include "sgnn/mlp.hpp"
#include "sgnn/subequivariance.hpp"
#include "sgnn/tape.hpp"

namespace sgnn {

enum class Aggregation { Sum, Mean };

/// Layout and switches of one object-aware message-passing block.
struct SompConfig {
  int scalar_dim = 1;         // width of h_i
  int object_scalar_dim = 1;  // width of c_k
  bool use_objects = true;
  bool gravity = true;
  bool normalize = true;
  int message_channels = 3;
  int message_scalars = 16;
  int hidden = 64;
  int iterations = 4;
  Activation activation = Activation::SiLU;
  Aggregation aggregation = Aggregation::Sum;
  /// Apply the update to nodes that received no message.
  bool update_isolated = false;
  /// Pair term and pair scalars are supplied per edge by the caller instead
  /// of Z_i ⊖ Z_j and h_i ‖ h_j (requires use_objects = false).
  bool edge_override = false;
  int override_scalar_dim = 0;
  /// Optional masks applied inside the message / update scalarizations.
  std::vector<int> message_channel_mask;
  std::vector<int> message_scalar_mask;
  std::vector<int> update_channel_mask;
  std::vector<int> update_scalar_mask;

  int message_in_channels() const { return (use_objects ? 6 : 0) + 3; }
  int message_in_scalars() const;
  int update_in_channels() const { return message_channels + (use_objects ? 3 : 0); }
  int update_in_scalars() const { return message_scalars + scalar_dim + (use_objects ? object_scalar_dim : 0); }
  ScalarizeOptions message_options() const;
  ScalarizeOptions update_options() const;
};

struct SOMPParams {
  SompConfig config;
  MLPParams phi;      // message σ
  MLPParams psi;      // update σ
  MLPParams eta_msg;  // gravity gate of the message block
  MLPParams eta_upd;  // gravity gate of the update block

  std::vector<MLPParams*> mlps();
  std::vector<const MLPParams*> mlps() const;
};

/// Random init; the last layers of the message and update networks start at
/// zero, so a fresh block is the identity and messages grow from nothing.
SOMPParams make_somp(const SompConfig& cfg, Rng& rng);

struct NodeVars {
  Tape::Var z;  // B×6: [x, v]
  Tape::Var h;  // B×n
};

struct ObjectVars {
  Tape::Var C;  // M×6
  Tape::Var c;  // M×nc
  const std::vector<int>* object_of = nullptr;
};

struct EdgeOverride {
  Tape::Var z;  // E×9
  Tape::Var h;  // E×override_scalar_dim
};

/// [a_0 − b_0, a_1.., b_1..] row-wise for channel-major batches.
Tape::Var ominus_rows(Tape& tape, Tape::Var a, int a_channels, Tape::Var b, int b_channels);

NodeVars somp_forward(MlpBinder& binder, const SOMPParams& params, NodeVars in, const ObjectVars* objects,
                      const std::vector<Edge>& edges, const Vec3& g_dir, const EdgeOverride* override_ = nullptr);

struct SompState {
  std::vector<GeoTensor> z;
  Mat h;
};

/// Convenience wrapper without gradients.
SompState somp_forward(const SOMPParams& params, const SompState& in, const ObjectFeatures* objects,
                       const std::vector<int>& object_of, const std::vector<Edge>& edges, const Gravity& g);

Mat stack_rows(const std::vector<GeoTensor>& z);
std::vector<GeoTensor> unstack_rows(const Mat& m);

}  // namespace sgnn
