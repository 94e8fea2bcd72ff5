#include "sgnn/reduction.hpp"

#include "sgnn/errors.hpp"

namespace sgnn {

SOMPParams somp_masked_as_gmn(const BaselineParams& gmn, int object_scalar_dim) {
  const BaselineConfig& g = gmn.config;
  if (g.kind != BaselineKind::GMN) throw ContractViolation("somp_masked_as_gmn: expects a plain GMN");
  const int n = g.scalar_dim, nc = object_scalar_dim, K = g.message_channels, S = g.message_scalars;
  SompConfig c;
  c.scalar_dim = n;
  c.object_scalar_dim = nc;
  c.use_objects = true;
  c.gravity = false;
  c.normalize = g.normalize;
  c.message_channels = K;
  c.message_scalars = S;
  c.hidden = g.hidden;
  c.iterations = g.iterations;
  c.activation = g.activation;
  c.update_isolated = true;
  // Message basis: the (Z_i ⊖ Z_j) block sits after the two object blocks.
  if (g.message_channel_mask.empty()) {
    c.message_channel_mask = {6, 7, 8};
  } else {
    for (int ch : g.message_channel_mask) c.message_channel_mask.push_back(6 + ch);
  }
  // Message scalars h_i ‖ c_i ‖ h_j ‖ c_j → h_i ‖ h_j.
  for (int a = 0; a < n; ++a) c.message_scalar_mask.push_back(a);
  for (int a = 0; a < n; ++a) c.message_scalar_mask.push_back(n + nc + a);
  // Update basis [ΣM, Z_i − C, v_i, v_c] → [ΣM, v_i].
  for (int k = 0; k < K; ++k) c.update_channel_mask.push_back(k);
  c.update_channel_mask.push_back(K + 1);
  // Update scalars Σm ‖ h_i ‖ c → Σm ‖ h_i.
  for (int a = 0; a < S + n; ++a) c.update_scalar_mask.push_back(a);

  SOMPParams p;
  p.config = c;
  p.phi = gmn.message;
  p.psi = gmn.update;
  return p;
}

namespace {

// Column block copy helper: dst[r0.., c0..] = src.
void place(Mat& dst, const Mat& src, std::size_t r0, std::size_t c0) {
  for (std::size_t r = 0; r < src.rows(); ++r)
    for (std::size_t c = 0; c < src.cols(); ++c) dst(r0 + r, c0 + c) = src(r, c);
}

}  // namespace

BaselineParams gmn_masked_as_egnn(const BaselineParams& egnn) {
  const BaselineConfig& e = egnn.config;
  if (e.kind != BaselineKind::EGNN) throw ContractViolation("gmn_masked_as_egnn: expects a plain EGNN");
  if (egnn.phi_v.layers.size() != 3 || egnn.phi_h.layers.size() != 3)
    throw ContractViolation("gmn_masked_as_egnn: expects three-layer velocity and feature networks");
  const std::size_t n = static_cast<std::size_t>(e.scalar_dim), S = static_cast<std::size_t>(e.message_scalars);

  BaselineParams p;
  p.config = e;
  p.config.kind = BaselineKind::GMN;
  p.config.message_channels = 1;
  p.config.normalize = false;
  p.config.message_channel_mask = {0};
  p.message = egnn.message;

  // Update σ input: [Gram of (ΣM, v) (4), Σm (S), h (n)];
  // output: V = [[1, 1], [φ_v, φ_v − 1]] row-major, then Δh = φ_h(Σm, h).
  const auto& v = egnn.phi_v.layers;
  const auto& h = egnn.phi_h.layers;
  const std::size_t hv0 = v[0].weight.cols(), hh0 = h[0].weight.cols();
  const std::size_t hv1 = v[1].weight.cols(), hh1 = h[1].weight.cols();
  MLPParams u;
  DenseLayer l0{Mat(4 + S + n, hv0 + hh0), Mat(1, hv0 + hh0), v[0].activation};
  place(l0.weight, v[0].weight, 4 + S, 0);
  place(l0.weight, h[0].weight, 4, hv0);
  place(l0.bias, v[0].bias, 0, 0);
  place(l0.bias, h[0].bias, 0, hv0);
  DenseLayer l1{Mat(hv0 + hh0, hv1 + hh1), Mat(1, hv1 + hh1), v[1].activation};
  place(l1.weight, v[1].weight, 0, 0);
  place(l1.weight, h[1].weight, hv0, hv1);
  place(l1.bias, v[1].bias, 0, 0);
  place(l1.bias, h[1].bias, 0, hv1);
  DenseLayer l2{Mat(hv1 + hh1, 4 + n), Mat(1, 4 + n), Activation::Linear};
  l2.bias[0] = 1.0;
  l2.bias[1] = 1.0;
  for (std::size_t r = 0; r < hv1; ++r) {
    l2.weight(r, 2) = v[2].weight(r, 0);
    l2.weight(r, 3) = v[2].weight(r, 0);
  }
  l2.bias[2] = v[2].bias[0];
  l2.bias[3] = v[2].bias[0] - 1.0;
  place(l2.weight, h[2].weight, hv1, 4);
  place(l2.bias, h[2].bias, 0, 4);
  u.layers = {l0, l1, l2};
  for (const Mat* t : std::as_const(u).tensors()) {
    u.m.emplace_back(t->rows(), t->cols());
    u.v.emplace_back(t->rows(), t->cols());
  }
  p.update = std::move(u);
  return p;
}

}  // namespace sgnn
