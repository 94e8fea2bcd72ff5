#include "sgnn/model.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <map>
#include <sstream>

#include "sgnn/errors.hpp"

namespace sgnn {

const char* variant_name(Variant v) {
  switch (v) {
    case Variant::SGNN: return "sgnn";
    case Variant::GNS: return "gns";
    case Variant::EGNN: return "egnn";
    case Variant::EGNN_S: return "egnn_s";
    case Variant::GMN: return "gmn";
    case Variant::GMN_S: return "gmn_s";
  }
  return "?";
}

Variant parse_variant(const std::string& name) {
  for (Variant v : {Variant::SGNN, Variant::GNS, Variant::EGNN, Variant::EGNN_S, Variant::GMN, Variant::GMN_S})
    if (name == variant_name(v)) return v;
  throw ContractViolation("unknown model variant '" + name + "'");
}

void ModelConfig::validate() const {
  gravity.validate();
  if (attr_dim < 1) throw ContractViolation("model: attr_dim must be at least 1 (the height attribute)");
  if (hidden < 1 || message_scalars < 0 || iterations < 0) throw ContractViolation("model: non-positive layer sizes");
  if (!(radius > 0.0) || !(height_scale > 0.0) || !(length_scale > 0.0) || !std::isfinite(length_scale))
    throw ContractViolation("model: radius, height_scale and length_scale must be positive");
  if (variant != Variant::SGNN && ablation.any()) throw ContractViolation("model: ablations apply to sgnn only");
}

std::string ModelConfig::describe() const {
  std::ostringstream os;
  os.precision(17);
  os << "variant=" << variant_name(variant) << " attr_dim=" << attr_dim << " hidden=" << hidden
     << " iterations=" << effective_iterations() << " message_scalars=" << message_scalars
     << " activation=" << activation_name(activation) << " radius=" << radius << " gravity=(" << gravity.direction[0]
     << "," << gravity.direction[1] << "," << gravity.direction[2] << ")x" << gravity.magnitude
     << " ground=" << ground << " height_scale=" << height_scale
     << " length_scale=" << length_scale << " stage3_from_stage1=" << stage3_from_stage1
     << " no_hierarchy=" << ablation.no_hierarchy << " no_object_aware=" << ablation.no_object_aware
     << " no_edge_separation=" << ablation.no_edge_separation << " full_equivariance=" << ablation.full_equivariance;
  return os.str();
}

namespace {

SompConfig particle_stage(const ModelConfig& cfg) {
  SompConfig s;
  s.scalar_dim = cfg.attr_dim;
  s.object_scalar_dim = cfg.attr_dim;
  s.use_objects = !cfg.ablation.no_object_aware;
  s.gravity = !cfg.ablation.full_equivariance;
  s.hidden = cfg.hidden;
  s.iterations = cfg.effective_iterations();
  s.message_scalars = cfg.message_scalars;
  s.activation = cfg.activation;
  return s;
}

}  // namespace

SompConfig stage1_config(const ModelConfig& cfg) { return particle_stage(cfg); }
SompConfig stage3_config(const ModelConfig& cfg) { return particle_stage(cfg); }

SompConfig stage2_config(const ModelConfig& cfg) {
  SompConfig s = particle_stage(cfg);
  s.use_objects = false;
  s.edge_override = true;
  s.object_scalar_dim = cfg.attr_dim;
  s.override_scalar_dim = 2 * cfg.attr_dim;
  return s;
}

BaselineConfig baseline_config(const ModelConfig& cfg) {
  BaselineConfig b;
  switch (cfg.variant) {
    case Variant::GNS: b.kind = BaselineKind::GNS; break;
    case Variant::EGNN: b.kind = BaselineKind::EGNN; break;
    case Variant::EGNN_S: b.kind = BaselineKind::EGNN_S; break;
    case Variant::GMN: b.kind = BaselineKind::GMN; break;
    case Variant::GMN_S: b.kind = BaselineKind::GMN_S; break;
    case Variant::SGNN: throw ContractViolation("baseline_config: sgnn is not a baseline");
  }
  b.scalar_dim = cfg.attr_dim;
  b.hidden = cfg.hidden;
  b.iterations = cfg.effective_iterations();
  b.message_scalars = cfg.message_scalars;
  b.activation = cfg.activation;
  return b;
}

bool Model::uses_stage2() const {
  return config.variant == Variant::SGNN && !config.ablation.no_hierarchy && !config.ablation.no_object_aware;
}

bool Model::uses_stage3() const { return config.variant == Variant::SGNN && !config.ablation.no_hierarchy; }

std::vector<MLPParams*> Model::mlps() {
  if (config.variant != Variant::SGNN) return baseline.mlps();
  std::vector<MLPParams*> out = stage1.mlps();
  if (uses_stage2())
    for (MLPParams* p : stage2.mlps()) out.push_back(p);
  if (uses_stage3())
    for (MLPParams* p : stage3.mlps()) out.push_back(p);
  return out;
}

std::vector<const MLPParams*> Model::mlps() const {
  std::vector<const MLPParams*> out;
  for (MLPParams* p : const_cast<Model*>(this)->mlps()) out.push_back(p);
  return out;
}

std::size_t Model::parameter_count() const {
  std::size_t n = 0;
  for (const MLPParams* p : mlps()) n += p->parameter_count();
  return n;
}

Model make_model(const ModelConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  Model m;
  m.config = cfg;
  Rng rng(seed);
  if (cfg.variant != Variant::SGNN) {
    m.baseline = make_baseline(baseline_config(cfg), rng);
    return m;
  }
  m.stage1 = make_somp(stage1_config(cfg), rng);
  if (m.uses_stage2()) m.stage2 = make_somp(stage2_config(cfg), rng);
  if (m.uses_stage3()) m.stage3 = make_somp(stage3_config(cfg), rng);
  return m;
}

namespace {

std::vector<double> inverse_counts(const std::vector<int>& index, std::size_t rows) {
  std::vector<double> count(rows, 0.0);
  for (int k : index) count[static_cast<std::size_t>(k)] += 1.0;
  for (double& c : count) c = c > 0.0 ? 1.0 / c : 0.0;
  return count;
}

}  // namespace

Tape::Var model_forward(MlpBinder& binder, const Model& model, Tape::Var z, Tape::Var h,
                        const std::vector<int>& object_of, int objects, const EdgeSets& edges) {
  Tape& tape = binder.tape();
  const ModelConfig& cfg = model.config;
  const Vec3& g = cfg.gravity.direction;
  const std::size_t n = tape.value(z).rows();
  if (tape.value(z).cols() != 6 || tape.value(h).rows() != n ||
      tape.value(h).cols() != static_cast<std::size_t>(cfg.attr_dim) || object_of.size() != n)
    throw ShapeError("model: particle layout does not match the model (attr_dim " + std::to_string(cfg.attr_dim) +
                     ")");

  // Work in units of length_scale; a uniform scale commutes with every O and t.
  const bool rescale = cfg.length_scale != 1.0;
  if (rescale) z = tape.scale(z, 1.0 / cfg.length_scale);
  auto readout = [&](Tape::Var out) {
    const auto x = tape.slice_cols(out, 0, 3);
    return rescale ? tape.scale(x, cfg.length_scale) : x;
  };

  if (cfg.variant != Variant::SGNN) return readout(baseline_forward(binder, model.baseline, {z, h}, edges.all(), g).z);

  const auto M = static_cast<std::size_t>(objects);
  ObjectVars pooled;
  pooled.object_of = &object_of;
  pooled.C = tape.scale_rows(tape.scatter_add_rows(z, object_of, objects), inverse_counts(object_of, M));
  pooled.c = tape.scatter_add_rows(h, object_of, objects);
  // Without object terms the particle stages are plain message passing.
  const ObjectVars* obj1 = cfg.ablation.no_object_aware ? nullptr : &pooled;

  if (cfg.ablation.no_hierarchy) {
    return readout(somp_forward(binder, model.stage1, {z, h}, obj1, edges.all(), g).z);
  }

  const std::vector<Edge> all = cfg.ablation.no_edge_separation ? edges.all() : std::vector<Edge>{};
  const auto& e1 = cfg.ablation.no_edge_separation ? all : edges.inter;
  const auto& e3 = cfg.ablation.no_edge_separation ? all : edges.inner;

  const NodeVars s1 = somp_forward(binder, model.stage1, {z, h}, obj1, e1, g);

  ObjectVars updated = pooled;
  if (model.uses_stage2() && !edges.obj.empty()) {
    // Mean of Z'_i ⊖ Z'_j and h'_i ‖ h'_j over the inter edges behind each object edge.
    std::vector<int> recv, send, slot;
    for (const Edge& e : edges.inter) {
      const Edge key{object_of[static_cast<std::size_t>(e.i)], object_of[static_cast<std::size_t>(e.j)]};
      const auto it = std::lower_bound(edges.obj.begin(), edges.obj.end(), key);
      if (it == edges.obj.end() || *it != key) throw ShapeError("model: object edges do not cover the inter edges");
      recv.push_back(e.i);
      send.push_back(e.j);
      slot.push_back(static_cast<int>(it - edges.obj.begin()));
    }
    const auto K = static_cast<int>(edges.obj.size());
    const auto inv = inverse_counts(slot, edges.obj.size());
    auto pair_z = ominus_rows(tape, tape.gather_rows(s1.z, recv), 2, tape.gather_rows(s1.z, send), 2);
    auto pair_h = tape.concat_cols({tape.gather_rows(s1.h, recv), tape.gather_rows(s1.h, send)});
    EdgeOverride ov{tape.scale_rows(tape.scatter_add_rows(pair_z, slot, K), inv),
                    tape.scale_rows(tape.scatter_add_rows(pair_h, slot, K), inv)};
    const NodeVars s2 = somp_forward(binder, model.stage2, {pooled.C, pooled.c}, nullptr, edges.obj, g, &ov);
    updated.C = s2.z;
    updated.c = s2.h;
  }

  // Without object features stage 3 could not see other objects at all, so it
  // takes the stage-1 states in that ablation.
  const bool chain = cfg.stage3_from_stage1 || cfg.ablation.no_object_aware;
  const NodeVars in3 = chain ? s1 : NodeVars{z, h};
  return readout(somp_forward(binder, model.stage3, in3, obj1 ? &updated : nullptr, e3, g).z);
}

std::vector<Vec3> predict_step(const Model& model, const ParticleSystem& sys, const EdgeSets& edges) {
  sys.validate();
  Tape tape;
  MlpBinder binder(tape, false);
  Mat z(sys.size(), 6);
  for (std::size_t i = 0; i < sys.size(); ++i)
    for (int d = 0; d < 3; ++d) {
      z(i, static_cast<std::size_t>(d)) = sys.x[i][d];
      z(i, 3 + static_cast<std::size_t>(d)) = sys.v[i][d];
    }
  const auto out = model_forward(binder, model, tape.constant(std::move(z)), tape.constant(sys.attrs), sys.object_of,
                                 sys.objects, edges);
  const Mat& x = tape.value(out);
  std::vector<Vec3> next(sys.size());
  for (std::size_t i = 0; i < sys.size(); ++i) next[i] = {x(i, 0), x(i, 1), x(i, 2)};
  return next;
}

std::vector<Vec3> predict_step(const Model& model, const ParticleSystem& sys) {
  return predict_step(model, sys, build_edges(sys, model.config.radius));
}

Mat featurize(const ModelConfig& cfg, const Mat& static_attrs, const std::vector<Vec3>& x) {
  const std::size_t s = static_attrs.cols();
  if (static_attrs.rows() != x.size() || s + 1 != static_cast<std::size_t>(cfg.attr_dim))
    throw ShapeError("featurize: static attributes are " + std::to_string(static_attrs.rows()) + "x" +
                     std::to_string(s) + ", model expects " + std::to_string(cfg.attr_dim - 1) + " columns");
  Mat out(x.size(), s + 1);
  const Vec3 up = -cfg.gravity.direction;
  for (std::size_t i = 0; i < x.size(); ++i) {
    for (std::size_t a = 0; a < s; ++a) out(i, a) = static_attrs(i, a);
    out(i, s) = std::clamp((dot(x[i], up) - cfg.ground) / cfg.height_scale, 0.0, 1.0);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Checkpoints

namespace {

std::vector<std::pair<std::string, MLPParams*>> named_mlps(Model& m) {
  std::vector<std::pair<std::string, MLPParams*>> out;
  auto stage = [&](const std::string& prefix, SOMPParams& s) {
    out.emplace_back(prefix + ".phi", &s.phi);
    out.emplace_back(prefix + ".psi", &s.psi);
    if (s.config.gravity) {
      out.emplace_back(prefix + ".eta_msg", &s.eta_msg);
      out.emplace_back(prefix + ".eta_upd", &s.eta_upd);
    }
  };
  if (m.config.variant == Variant::SGNN) {
    stage("stage1", m.stage1);
    if (m.uses_stage2()) stage("stage2", m.stage2);
    if (m.uses_stage3()) stage("stage3", m.stage3);
    return out;
  }
  BaselineParams& b = m.baseline;
  for (auto [name, p] : {std::pair<const char*, MLPParams*>{"message", &b.message}, {"update", &b.update},
                         {"phi_v", &b.phi_v}, {"phi_h", &b.phi_h}, {"phi_g", &b.phi_g}, {"eta_msg", &b.eta_msg},
                         {"eta_upd", &b.eta_upd}})
    if (!p->layers.empty()) out.emplace_back(std::string("baseline.") + name, p);
  return out;
}

Mat scalar(double v) { return Mat(1, 1, v); }

}  // namespace

NamedTensors model_to_tensors(const Model& model) {
  const ModelConfig& c = model.config;
  NamedTensors out;
  out.emplace_back("config.variant", scalar(static_cast<double>(c.variant)));
  out.emplace_back("config.attr_dim", scalar(c.attr_dim));
  out.emplace_back("config.hidden", scalar(c.hidden));
  out.emplace_back("config.iterations", scalar(c.iterations));
  out.emplace_back("config.message_scalars", scalar(c.message_scalars));
  out.emplace_back("config.activation", scalar(static_cast<double>(c.activation)));
  out.emplace_back("config.radius", scalar(c.radius));
  out.emplace_back("config.gravity", Mat(1, 4, {c.gravity.direction[0], c.gravity.direction[1],
                                                c.gravity.direction[2], c.gravity.magnitude}));
  out.emplace_back("config.stage3_from_stage1", scalar(c.stage3_from_stage1));
  out.emplace_back("config.height", Mat(1, 2, {c.ground, c.height_scale}));
  out.emplace_back("config.length_scale", scalar(c.length_scale));
  out.emplace_back("config.ablation", Mat(1, 4, {double(c.ablation.no_hierarchy), double(c.ablation.no_object_aware),
                                                 double(c.ablation.no_edge_separation),
                                                 double(c.ablation.full_equivariance)}));
  for (const auto& [name, p] : named_mlps(const_cast<Model&>(model)))
    for (std::size_t l = 0; l < p->layers.size(); ++l) {
      out.emplace_back(name + ".w" + std::to_string(l), p->layers[l].weight);
      out.emplace_back(name + ".b" + std::to_string(l), p->layers[l].bias);
    }
  return out;
}

Model model_from_tensors(const NamedTensors& tensors) {
  std::map<std::string, const Mat*> by_name;
  for (const auto& [name, m] : tensors)
    if (!by_name.emplace(name, &m).second) throw FormatError("checkpoint: duplicate tensor " + name);
  auto get = [&](const std::string& name, std::size_t rows, std::size_t cols) -> const Mat& {
    const auto it = by_name.find(name);
    if (it == by_name.end()) throw FormatError("checkpoint: missing tensor " + name);
    if (it->second->rows() != rows || it->second->cols() != cols)
      throw FormatError("checkpoint: tensor " + name + " has shape " + std::to_string(it->second->rows()) + "x" +
                        std::to_string(it->second->cols()) + ", expected " + std::to_string(rows) + "x" +
                        std::to_string(cols));
    return *it->second;
  };
  auto integer = [&](const std::string& name, int lo, int hi) {
    const double v = get(name, 1, 1)[0];
    if (!(v >= lo && v <= hi) || v != std::floor(v)) throw FormatError("checkpoint: bad value for " + name);
    return static_cast<int>(v);
  };

  ModelConfig c;
  c.variant = static_cast<Variant>(integer("config.variant", 0, 5));
  c.attr_dim = integer("config.attr_dim", 1, 1 << 20);
  c.hidden = integer("config.hidden", 1, 1 << 20);
  c.iterations = integer("config.iterations", 0, 1 << 20);
  c.message_scalars = integer("config.message_scalars", 0, 1 << 20);
  c.activation = static_cast<Activation>(integer("config.activation", 0, 2));
  c.radius = get("config.radius", 1, 1)[0];
  const Mat& g = get("config.gravity", 1, 4);
  c.gravity.direction = {g[0], g[1], g[2]};
  c.gravity.magnitude = g[3];
  c.stage3_from_stage1 = integer("config.stage3_from_stage1", 0, 1) != 0;
  const Mat& hgt = get("config.height", 1, 2);
  c.ground = hgt[0];
  c.height_scale = hgt[1];
  c.length_scale = get("config.length_scale", 1, 1)[0];
  const Mat& ab = get("config.ablation", 1, 4);
  c.ablation = {ab[0] != 0.0, ab[1] != 0.0, ab[2] != 0.0, ab[3] != 0.0};
  try {
    c.validate();
  } catch (const ContractViolation& e) {
    throw FormatError(std::string("checkpoint: inconsistent config: ") + e.what());
  }

  Model m = make_model(c, 0);
  std::size_t used = 12;
  for (const auto& [name, p] : named_mlps(m))
    for (std::size_t l = 0; l < p->layers.size(); ++l) {
      DenseLayer& layer = p->layers[l];
      layer.weight = get(name + ".w" + std::to_string(l), layer.weight.rows(), layer.weight.cols());
      layer.bias = get(name + ".b" + std::to_string(l), 1, layer.bias.cols());
      used += 2;
    }
  if (used != tensors.size()) throw FormatError("checkpoint: unexpected extra tensors for this model layout");
  return m;
}

void save_model(const Model& model, const std::filesystem::path& path) {
  save_checkpoint(model_to_tensors(model), path);
}

Model load_model(const std::filesystem::path& path) { return model_from_tensors(load_checkpoint(path)); }

// ---------------------------------------------------------------------------
// Rigid projection

namespace {

Vec3 centroid(const std::vector<Vec3>& p, const std::vector<std::size_t>& idx) {
  Vec3 s{0, 0, 0};
  for (std::size_t i : idx) s += p[i];
  return (1.0 / static_cast<double>(idx.size())) * s;
}

RigidFit fit_subset(const std::vector<Vec3>& pred, const std::vector<Vec3>& ref, const std::vector<std::size_t>& idx) {
  RigidFit fit;
  const Vec3 cp = centroid(pred, idx), cr = centroid(ref, idx);
  Eigen::Matrix3d H = Eigen::Matrix3d::Zero();
  Eigen::Matrix3d S = Eigen::Matrix3d::Zero();
  for (std::size_t i : idx) {
    const Vec3 a = ref[i] - cr, b = pred[i] - cp;
    const Eigen::Vector3d ea(a[0], a[1], a[2]), eb(b[0], b[1], b[2]);
    H += ea * eb.transpose();
    S += ea * ea.transpose();
  }
  // A reference spread along fewer than two directions leaves the rotation undetermined.
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> spread(S);
  const Eigen::Vector3d ev = spread.eigenvalues();  // ascending
  if (!(ev[2] > 0.0) || ev[1] <= 1e-12 * ev[2]) {
    fit.translation_only = true;
    fit.t = cp - cr;
    return fit;
  }
  Eigen::JacobiSVD<Eigen::Matrix3d> svd(H, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const Eigen::Matrix3d U = svd.matrixU(), V = svd.matrixV();
  Eigen::Matrix3d D = Eigen::Matrix3d::Identity();
  if ((V * U.transpose()).determinant() < 0.0) D(2, 2) = -1.0;
  const Eigen::Matrix3d R = V * D * U.transpose();
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) fit.R[r][c] = R(r, c);
  fit.t = cp - fit.R * cr;
  return fit;
}

}  // namespace

RigidFit rigid_project(const std::vector<Vec3>& predicted, const std::vector<Vec3>& reference, bool ransac,
                       std::uint64_t seed, const RansacOptions& opt) {
  const std::size_t n = predicted.size();
  if (reference.size() != n) throw ShapeError("rigid_project: predicted and reference sizes differ");
  if (n < 3) throw ContractViolation("rigid_project: needs at least 3 points");
  std::vector<std::size_t> all(n);
  for (std::size_t i = 0; i < n; ++i) all[i] = i;

  auto inliers_of = [&](const RigidFit& f) {
    std::vector<std::size_t> in;
    for (std::size_t i = 0; i < n; ++i)
      if (norm(f.R * reference[i] + f.t - predicted[i]) < opt.threshold) in.push_back(i);
    return in;
  };

  RigidFit fit;
  if (ransac) {
    if (opt.iterations < 1 || opt.subset < 3 || !(opt.threshold > 0.0))
      throw ContractViolation("rigid_project: invalid RANSAC options");
    Rng rng(seed);
    const std::size_t k = std::min<std::size_t>(static_cast<std::size_t>(opt.subset), n);
    std::vector<std::size_t> best;
    for (int it = 0; it < opt.iterations; ++it) {
      std::vector<std::size_t> pool = all;
      for (std::size_t s = 0; s < k; ++s) std::swap(pool[s], pool[s + rng.below(n - s)]);
      pool.resize(k);
      const auto in = inliers_of(fit_subset(predicted, reference, pool));
      if (in.size() > best.size()) best = in;
    }
    fit = fit_subset(predicted, reference, best.size() >= 3 ? best : all);
  } else {
    fit = fit_subset(predicted, reference, all);
  }
  fit.points.resize(n);
  for (std::size_t i = 0; i < n; ++i) fit.points[i] = fit.R * reference[i] + fit.t;
  fit.inliers = static_cast<int>(inliers_of(fit).size());
  return fit;
}

// ---------------------------------------------------------------------------
// Rollout

std::vector<std::vector<Vec3>> rollout(const Model& model, const RolloutStart& start, int steps,
                                       const RolloutOptions& opt) {
  if (steps < 1) throw ContractViolation("rollout: steps must be at least 1");
  const std::size_t n = start.current.size();
  if (start.previous.size() != n || start.object_of.size() != n)
    throw ShapeError("rollout: start frames and object assignment differ in length");
  if (opt.rigid && (start.reference.size() != n || start.rigid.size() != static_cast<std::size_t>(start.objects)))
    throw ShapeError("rollout: rigid projection needs a reference layout and per-object rigid flags");

  std::vector<std::vector<std::size_t>> members(static_cast<std::size_t>(start.objects));
  for (std::size_t i = 0; i < n; ++i) members.at(static_cast<std::size_t>(start.object_of[i])).push_back(i);

  ParticleSystem sys;
  sys.object_of = start.object_of;
  sys.objects = start.objects;
  std::vector<Vec3> prev = start.previous, cur = start.current;
  const EdgeSets frozen =
      opt.freeze_edges ? separate_edges(radius_edges(cur, model.config.radius), start.object_of) : EdgeSets{};
  std::vector<std::vector<Vec3>> frames;
  frames.reserve(static_cast<std::size_t>(steps));
  for (int step = 0; step < steps; ++step) {
    sys.x = cur;
    sys.v.resize(n);
    for (std::size_t i = 0; i < n; ++i) sys.v[i] = cur[i] - prev[i];
    sys.attrs = featurize(model.config, start.static_attrs, cur);
    std::vector<Vec3> next =
        opt.freeze_edges ? predict_step(model, sys, frozen) : predict_step(model, sys, build_edges(sys, model.config.radius));
    for (std::size_t i = 0; i < n; ++i)
      if (!std::isfinite(next[i][0]) || !std::isfinite(next[i][1]) || !std::isfinite(next[i][2]))
        throw RolloutError("rollout: non-finite position for particle " + std::to_string(i) + " at step " +
                               std::to_string(step),
                           step);
    if (opt.rigid)
      for (std::size_t k = 0; k < members.size(); ++k) {
        if (!start.rigid[k] || members[k].size() < 3) continue;
        std::vector<Vec3> p, r;
        for (std::size_t i : members[k]) {
          p.push_back(next[i]);
          r.push_back(start.reference[i]);
        }
        const auto fit = rigid_project(p, r, opt.ransac, opt.seed + static_cast<std::uint64_t>(step) * members.size() + k);
        for (std::size_t a = 0; a < members[k].size(); ++a) next[members[k][a]] = fit.points[a];
      }
    prev = std::move(cur);
    cur = next;
    frames.push_back(std::move(next));
  }
  return frames;
}

}  // namespace sgnn
