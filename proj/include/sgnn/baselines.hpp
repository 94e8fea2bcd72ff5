#pragma once

#include <string>
#include <vector>

#include "sgnn/graph.hpp"
#include "sgnn/mlp.hpp"
#include "sgnn/somp.hpp"

namespace sgnn {

enum class BaselineKind { GNS, EGNN, EGNN_S, GMN, GMN_S };

const char* baseline_name(BaselineKind k);

struct BaselineConfig {
  BaselineKind kind = BaselineKind::GMN;
  int scalar_dim = 1;
  int hidden = 64;
  int iterations = 10;
  int message_scalars = 16;
  /// Vector message channels of GMN; EGNN always uses one.
  int message_channels = 3;
  Activation activation = Activation::SiLU;
  /// GMN Gram normalization.
  bool normalize = true;
  /// GMN message basis channels out of [x_i − x_j, v_i, v_j]; empty keeps all.
  std::vector<int> message_channel_mask;

  bool subequivariant() const { return kind == BaselineKind::EGNN_S || kind == BaselineKind::GMN_S; }
  bool is_gmn() const { return kind == BaselineKind::GMN || kind == BaselineKind::GMN_S; }
  bool is_egnn() const { return kind == BaselineKind::EGNN || kind == BaselineKind::EGNN_S; }
  ScalarizeOptions gmn_message_options() const;
  ScalarizeOptions gmn_update_options() const;
};

/// Unused slots stay empty for a given kind.
struct BaselineParams {
  BaselineConfig config;
  MLPParams message;  // GNS φ, EGNN σ_e, GMN message σ
  MLPParams update;   // GNS ψ, GMN update σ
  MLPParams phi_v;    // EGNN velocity scale
  MLPParams phi_h;    // EGNN feature update
  MLPParams phi_g;    // EGNN-S gravity coefficient
  MLPParams eta_msg;  // GMN-S gates
  MLPParams eta_upd;

  std::vector<MLPParams*> mlps();
  std::vector<const MLPParams*> mlps() const;
};

BaselineParams make_baseline(const BaselineConfig& cfg, Rng& rng);

/// `iterations` rounds over `edges`; returns updated [x, v] and h for every node.
NodeVars baseline_forward(MlpBinder& binder, const BaselineParams& params, NodeVars in, const std::vector<Edge>& edges,
                          const Vec3& g_dir);

SompState baseline_forward(const BaselineParams& params, const SompState& in, const std::vector<Edge>& edges,
                           const Gravity& g);

}  // namespace sgnn
