#include "sgnn/somp.hpp"

#include <string>

#include "sgnn/errors.hpp"

namespace sgnn {

int SompConfig::message_in_scalars() const {
  if (edge_override) return override_scalar_dim;
  return use_objects ? 2 * (scalar_dim + object_scalar_dim) : 2 * scalar_dim;
}

ScalarizeOptions SompConfig::message_options() const {
  ScalarizeOptions o;
  o.gravity = gravity;
  o.normalize = normalize;
  o.channel_mask = message_channel_mask;
  o.scalar_mask = message_scalar_mask;
  o.out_channels = message_channels;
  o.extra_scalars = message_scalars;
  return o;
}

ScalarizeOptions SompConfig::update_options() const {
  ScalarizeOptions o;
  o.gravity = gravity;
  o.normalize = normalize;
  o.channel_mask = update_channel_mask;
  o.scalar_mask = update_scalar_mask;
  o.out_channels = 2;
  o.extra_scalars = scalar_dim;
  return o;
}

std::vector<MLPParams*> SOMPParams::mlps() {
  std::vector<MLPParams*> out{&phi, &psi};
  if (config.gravity) {
    out.push_back(&eta_msg);
    out.push_back(&eta_upd);
  }
  return out;
}

std::vector<const MLPParams*> SOMPParams::mlps() const {
  std::vector<const MLPParams*> out{&phi, &psi};
  if (config.gravity) {
    out.push_back(&eta_msg);
    out.push_back(&eta_upd);
  }
  return out;
}

SOMPParams make_somp(const SompConfig& cfg, Rng& rng) {
  if (cfg.edge_override && cfg.use_objects) throw ShapeError("SOMP: edge override requires object-free messages");
  SOMPParams p;
  p.config = cfg;
  const auto mo = cfg.message_options();
  const auto uo = cfg.update_options();
  const auto width = static_cast<std::size_t>(cfg.hidden);
  p.phi = make_mlp3(scalarize_in_dim(cfg.message_in_channels(), cfg.message_in_scalars(), mo), width,
                    scalarize_out_dim(cfg.message_in_channels(), mo), cfg.activation, rng, true);
  p.psi = make_mlp3(scalarize_in_dim(cfg.update_in_channels(), cfg.update_in_scalars(), uo), width,
                    scalarize_out_dim(cfg.update_in_channels(), uo), cfg.activation, rng, true);
  if (cfg.gravity) {
    const auto gate = static_cast<std::size_t>(std::max(8, cfg.hidden / 4));
    p.eta_msg = make_mlp({static_cast<std::size_t>(cfg.message_in_scalars()), gate, 1}, cfg.activation, rng);
    p.eta_upd = make_mlp({static_cast<std::size_t>(cfg.update_in_scalars()), gate, 1}, cfg.activation, rng);
  }
  return p;
}

Tape::Var ominus_rows(Tape& tape, Tape::Var a, int a_channels, Tape::Var b, int b_channels) {
  std::vector<Tape::Var> parts{tape.sub(tape.slice_cols(a, 0, 3), tape.slice_cols(b, 0, 3))};
  if (a_channels > 1) parts.push_back(tape.slice_cols(a, 3, 3 * a_channels));
  if (b_channels > 1) parts.push_back(tape.slice_cols(b, 3, 3 * b_channels));
  return tape.concat_cols(parts);
}

NodeVars somp_forward(MlpBinder& binder, const SOMPParams& params, NodeVars in, const ObjectVars* objects,
                      const std::vector<Edge>& edges, const Vec3& g_dir, const EdgeOverride* override_) {
  Tape& tape = binder.tape();
  const SompConfig& cfg = params.config;
  const std::size_t n = tape.value(in.z).rows();
  if (tape.value(in.z).cols() != 6) throw ShapeError("SOMP: node geometry must be [x, v] (6 columns)");
  if (tape.value(in.h).rows() != n || tape.value(in.h).cols() != static_cast<std::size_t>(cfg.scalar_dim))
    throw ShapeError("SOMP: node scalars are " + std::to_string(tape.value(in.h).rows()) + "x" +
                     std::to_string(tape.value(in.h).cols()) + ", expected width " + std::to_string(cfg.scalar_dim));
  if (cfg.use_objects != (objects != nullptr)) throw ShapeError("SOMP: object features present/absent mismatch");
  if (cfg.edge_override != (override_ != nullptr)) throw ShapeError("SOMP: edge override present/absent mismatch");
  if (objects) {
    if (!objects->object_of || objects->object_of->size() != n) throw ShapeError("SOMP: object assignment size");
    if (tape.value(objects->c).cols() != static_cast<std::size_t>(cfg.object_scalar_dim))
      throw ShapeError("SOMP: object scalar width mismatch");
  }
  if (override_) {
    if (tape.value(override_->z).rows() != edges.size() || tape.value(override_->z).cols() != 9 ||
        tape.value(override_->h).cols() != static_cast<std::size_t>(cfg.override_scalar_dim))
      throw ShapeError("SOMP: edge override shape mismatch");
  }

  std::vector<int> recv, send;
  recv.reserve(edges.size());
  send.reserve(edges.size());
  std::vector<int> degree(n, 0);
  for (const Edge& e : edges) {
    if (e.i < 0 || e.j < 0 || static_cast<std::size_t>(e.i) >= n || static_cast<std::size_t>(e.j) >= n)
      throw ShapeError("SOMP: edge references a missing node");
    recv.push_back(e.i);
    send.push_back(e.j);
    ++degree[static_cast<std::size_t>(e.i)];
  }
  std::vector<double> active(n), inv_degree(n);
  for (std::size_t i = 0; i < n; ++i) {
    active[i] = (cfg.update_isolated || degree[i] > 0) ? 1.0 : 0.0;
    inv_degree[i] = degree[i] > 0 ? 1.0 / degree[i] : 0.0;
  }

  Tape::Var node_c, node_C;
  if (objects) {
    node_C = tape.gather_rows(objects->C, *objects->object_of);
    node_c = tape.gather_rows(objects->c, *objects->object_of);
  }
  const int n_int = static_cast<int>(n);
  const auto mo = cfg.message_options();
  const auto uo = cfg.update_options();

  NodeVars cur = in;
  for (int it = 0; it < cfg.iterations; ++it) {
    Tape::Var z_minus_c;
    if (objects) z_minus_c = ominus_rows(tape, cur.z, 2, node_C, 2);

    // Edge geometry and scalars.
    std::vector<Tape::Var> zparts, hparts;
    if (objects) {
      zparts.push_back(tape.gather_rows(z_minus_c, recv));
      zparts.push_back(tape.gather_rows(z_minus_c, send));
    }
    if (override_) {
      zparts.push_back(override_->z);
      hparts.push_back(override_->h);
    } else {
      auto zi = tape.gather_rows(cur.z, recv);
      auto zj = tape.gather_rows(cur.z, send);
      zparts.push_back(ominus_rows(tape, zi, 2, zj, 2));
      hparts.push_back(tape.gather_rows(cur.h, recv));
      if (objects) hparts.push_back(tape.gather_rows(node_c, recv));
      hparts.push_back(tape.gather_rows(cur.h, send));
      if (objects) hparts.push_back(tape.gather_rows(node_c, send));
    }
    auto zij = tape.concat_cols(zparts);
    auto hij = tape.concat_cols(hparts);
    auto msg = scalarize(binder, zij, cfg.message_in_channels(), hij, g_dir, params.phi,
                         cfg.gravity ? &params.eta_msg : nullptr, mo);

    auto agg_z = tape.scatter_add_rows(msg.vectors, recv, n_int);
    auto agg_h = tape.scatter_add_rows(msg.scalars, recv, n_int);
    if (cfg.aggregation == Aggregation::Mean) {
      agg_z = tape.scale_rows(agg_z, inv_degree);
      agg_h = tape.scale_rows(agg_h, inv_degree);
    }

    std::vector<Tape::Var> uz{agg_z}, uh{agg_h, cur.h};
    if (objects) {
      uz.push_back(z_minus_c);
      uh.push_back(node_c);
    }
    auto upd = scalarize(binder, tape.concat_cols(uz), cfg.update_in_channels(), tape.concat_cols(uh), g_dir,
                         params.psi, cfg.gravity ? &params.eta_upd : nullptr, uo);
    NodeVars next;
    next.z = tape.add(cur.z, tape.scale_rows(upd.vectors, active));
    next.h = tape.add(cur.h, tape.scale_rows(upd.scalars, active));
    cur = next;
  }
  return cur;
}

Mat stack_rows(const std::vector<GeoTensor>& z) {
  const std::size_t w = z.empty() ? 0 : 3 * z.front().size();
  Mat out(z.size(), w);
  for (std::size_t r = 0; r < z.size(); ++r) {
    if (3 * z[r].size() != w) throw ShapeError("stack_rows: ragged channel counts");
    for (std::size_t c = 0; c < z[r].size(); ++c)
      for (int k = 0; k < 3; ++k) out(r, 3 * c + k) = z[r][c][k];
  }
  return out;
}

std::vector<GeoTensor> unstack_rows(const Mat& m) {
  std::vector<GeoTensor> out;
  for (std::size_t r = 0; r < m.rows(); ++r) out.push_back(GeoTensor::from_row(m, r));
  return out;
}

SompState somp_forward(const SOMPParams& params, const SompState& in, const ObjectFeatures* objects,
                       const std::vector<int>& object_of, const std::vector<Edge>& edges, const Gravity& g) {
  g.validate();
  Tape tape;
  MlpBinder binder(tape, false);
  NodeVars nv{tape.constant(stack_rows(in.z)), tape.constant(in.h)};
  ObjectVars ov;
  if (objects) {
    ov.C = tape.constant(stack_rows(objects->C));
    ov.c = tape.constant(objects->c);
    ov.object_of = &object_of;
  }
  auto out = somp_forward(binder, params, nv, objects ? &ov : nullptr, edges, g.direction);
  return {unstack_rows(tape.value(out.z)), tape.value(out.h)};
}

}  // namespace sgnn
