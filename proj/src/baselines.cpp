#include "sgnn/baselines.hpp"

#include <string>

#include "sgnn/errors.hpp"

namespace sgnn {

const char* baseline_name(BaselineKind k) {
  switch (k) {
    case BaselineKind::GNS: return "gns";
    case BaselineKind::EGNN: return "egnn";
    case BaselineKind::EGNN_S: return "egnn_s";
    case BaselineKind::GMN: return "gmn";
    case BaselineKind::GMN_S: return "gmn_s";
  }
  return "?";
}

ScalarizeOptions BaselineConfig::gmn_message_options() const {
  ScalarizeOptions o;
  o.gravity = subequivariant();
  o.normalize = normalize;
  o.channel_mask = message_channel_mask;
  o.out_channels = message_channels;
  o.extra_scalars = message_scalars;
  return o;
}

ScalarizeOptions BaselineConfig::gmn_update_options() const {
  ScalarizeOptions o;
  o.gravity = subequivariant();
  o.normalize = normalize;
  o.out_channels = 2;
  o.extra_scalars = scalar_dim;
  return o;
}

std::vector<MLPParams*> BaselineParams::mlps() {
  std::vector<MLPParams*> out;
  for (MLPParams* p : {&message, &update, &phi_v, &phi_h, &phi_g, &eta_msg, &eta_upd})
    if (!p->layers.empty()) out.push_back(p);
  return out;
}

std::vector<const MLPParams*> BaselineParams::mlps() const {
  std::vector<const MLPParams*> out;
  for (const MLPParams* p : {&message, &update, &phi_v, &phi_h, &phi_g, &eta_msg, &eta_upd})
    if (!p->layers.empty()) out.push_back(p);
  return out;
}

BaselineParams make_baseline(const BaselineConfig& cfg, Rng& rng) {
  BaselineParams p;
  p.config = cfg;
  const auto n = static_cast<std::size_t>(cfg.scalar_dim);
  const auto S = static_cast<std::size_t>(cfg.message_scalars);
  const auto H = static_cast<std::size_t>(cfg.hidden);
  switch (cfg.kind) {
    case BaselineKind::GNS:
      p.message = make_mlp3(9 + 2 * n, H, S, cfg.activation, rng);
      p.update = make_mlp3(S + 3 + n, H, 6 + n, cfg.activation, rng, true);
      break;
    case BaselineKind::EGNN:
    case BaselineKind::EGNN_S:
      p.message = make_mlp3(1 + 2 * n, H, 1 + S, cfg.activation, rng);
      p.phi_v = make_mlp3(n, H, 1, cfg.activation, rng, true);
      p.phi_v.layers.back().bias = Mat(1, 1, 1.0);
      p.phi_h = make_mlp3(S + n, H, n, cfg.activation, rng, true);
      if (cfg.subequivariant()) p.phi_g = make_mlp3(n, H, 1, cfg.activation, rng, true);
      break;
    case BaselineKind::GMN:
    case BaselineKind::GMN_S: {
      const auto mo = cfg.gmn_message_options();
      const auto uo = cfg.gmn_update_options();
      const int upd_channels = cfg.message_channels + 1;
      p.message = make_mlp3(scalarize_in_dim(3, 2 * cfg.scalar_dim, mo), H, scalarize_out_dim(3, mo), cfg.activation, rng,
                            true);
      p.update = make_mlp3(scalarize_in_dim(upd_channels, cfg.message_scalars + cfg.scalar_dim, uo), H,
                           scalarize_out_dim(upd_channels, uo), cfg.activation, rng, true);
      if (cfg.subequivariant()) {
        const auto gate = static_cast<std::size_t>(std::max(8, cfg.hidden / 4));
        p.eta_msg = make_mlp({2 * n, gate, 1}, cfg.activation, rng);
        p.eta_upd = make_mlp({S + n, gate, 1}, cfg.activation, rng);
      }
      break;
    }
  }
  return p;
}

NodeVars baseline_forward(MlpBinder& binder, const BaselineParams& params, NodeVars in, const std::vector<Edge>& edges,
                          const Vec3& g_dir) {
  Tape& tape = binder.tape();
  const BaselineConfig& cfg = params.config;
  const std::size_t n = tape.value(in.z).rows();
  if (tape.value(in.z).cols() != 6) throw ShapeError("baseline: node geometry must be [x, v] (6 columns)");
  if (tape.value(in.h).rows() != n || tape.value(in.h).cols() != static_cast<std::size_t>(cfg.scalar_dim))
    throw ShapeError("baseline: node scalar width mismatch");
  std::vector<int> recv, send;
  for (const Edge& e : edges) {
    if (e.i < 0 || e.j < 0 || static_cast<std::size_t>(e.i) >= n || static_cast<std::size_t>(e.j) >= n)
      throw ShapeError("baseline: edge references a missing node");
    recv.push_back(e.i);
    send.push_back(e.j);
  }
  const int n_int = static_cast<int>(n);
  const auto g_row = tape.constant(Mat::row_vector(g_dir));

  NodeVars cur = in;
  for (int it = 0; it < cfg.iterations; ++it) {
    auto x = tape.slice_cols(cur.z, 0, 3);
    auto v = tape.slice_cols(cur.z, 3, 6);
    auto zi = tape.gather_rows(cur.z, recv);
    auto zj = tape.gather_rows(cur.z, send);
    auto hi = tape.gather_rows(cur.h, recv);
    auto hj = tape.gather_rows(cur.h, send);
    NodeVars next;
    switch (cfg.kind) {
      case BaselineKind::GNS: {
        auto rel = ominus_rows(tape, zi, 2, zj, 2);
        auto m = binder.forward(params.message, tape.concat_cols({rel, hi, hj}));
        auto agg = tape.scatter_add_rows(m, recv, n_int);
        auto d = binder.forward(params.update, tape.concat_cols({agg, v, cur.h}));
        next.z = tape.add(cur.z, tape.slice_cols(d, 0, 6));
        next.h = tape.add(cur.h, tape.slice_cols(d, 6, 6 + cfg.scalar_dim));
        break;
      }
      case BaselineKind::EGNN:
      case BaselineKind::EGNN_S: {
        auto rel = tape.sub(tape.slice_cols(zi, 0, 3), tape.slice_cols(zj, 0, 3));
        auto d2 = tape.gram(rel, 1);
        auto out = binder.forward(params.message, tape.concat_cols({d2, hi, hj}));
        auto coef = tape.slice_cols(out, 0, 1);
        auto m = tape.slice_cols(out, 1, 1 + cfg.message_scalars);
        auto agg_vec = tape.scatter_add_rows(tape.combine(rel, coef, 1, 1), recv, n_int);
        auto agg_m = tape.scatter_add_rows(m, recv, n_int);
        auto v_new = tape.add(tape.combine(v, binder.forward(params.phi_v, cur.h), 1, 1), agg_vec);
        if (cfg.subequivariant()) v_new = tape.add(v_new, tape.matmul(binder.forward(params.phi_g, cur.h), g_row));
        auto x_new = tape.add(x, v_new);
        next.z = tape.concat_cols({x_new, v_new});
        next.h = tape.add(cur.h, binder.forward(params.phi_h, tape.concat_cols({agg_m, cur.h})));
        break;
      }
      case BaselineKind::GMN:
      case BaselineKind::GMN_S: {
        const bool sub = cfg.subequivariant();
        auto rel = ominus_rows(tape, zi, 2, zj, 2);
        auto msg = scalarize(binder, rel, 3, tape.concat_cols({hi, hj}), g_dir, params.message,
                             sub ? &params.eta_msg : nullptr, cfg.gmn_message_options());
        auto agg_vec = tape.scatter_add_rows(msg.vectors, recv, n_int);
        auto agg_m = tape.scatter_add_rows(msg.scalars, recv, n_int);
        auto upd = scalarize(binder, tape.concat_cols({agg_vec, v}), cfg.message_channels + 1,
                             tape.concat_cols({agg_m, cur.h}), g_dir, params.update, sub ? &params.eta_upd : nullptr,
                             cfg.gmn_update_options());
        next.z = tape.add(cur.z, upd.vectors);
        next.h = tape.add(cur.h, upd.scalars);
        break;
      }
    }
    cur = next;
  }
  return cur;
}

SompState baseline_forward(const BaselineParams& params, const SompState& in, const std::vector<Edge>& edges,
                           const Gravity& g) {
  g.validate();
  Tape tape;
  MlpBinder binder(tape, false);
  NodeVars nv{tape.constant(stack_rows(in.z)), tape.constant(in.h)};
  auto out = baseline_forward(binder, params, nv, edges, g.direction);
  return {unstack_rows(tape.value(out.z)), tape.value(out.h)};
}

}  // namespace sgnn
