#include "sgnn/subequivariance.hpp"

#include <cmath>
#include <numbers>
#include <string>

#include "sgnn/errors.hpp"

namespace sgnn {

Mat GeoTensor::to_row() const {
  Mat out(1, 3 * channels.size());
  for (std::size_t c = 0; c < channels.size(); ++c)
    for (int k = 0; k < 3; ++k) out[3 * c + k] = channels[c][k];
  return out;
}

GeoTensor GeoTensor::from_row(const Mat& row, std::size_t r) {
  if (row.cols() % 3 != 0) throw ShapeError("GeoTensor::from_row: width is not a multiple of 3");
  GeoTensor z;
  for (std::size_t c = 0; c < row.cols() / 3; ++c) z.channels.push_back({row(r, 3 * c), row(r, 3 * c + 1), row(r, 3 * c + 2)});
  return z;
}

void Gravity::validate() const {
  const double n = norm(direction);
  if (!(std::fabs(n - 1.0) <= 1e-12))
    throw ContractViolation("gravity direction must be a unit vector (norm " + std::to_string(n) + ")");
  if (!std::isfinite(magnitude)) throw ContractViolation("gravity magnitude must be finite");
}

GeoTensor SubgroupTransform::apply(const GeoTensor& z, const std::vector<std::size_t>& positional) const {
  GeoTensor out;
  out.channels.reserve(z.size());
  for (const Vec3& v : z.channels) out.channels.push_back(O * v);
  for (std::size_t c : positional) out.channels.at(c) += t;
  return out;
}

std::pair<Vec3, Vec3> horizontal_basis(const Vec3& g_dir) {
  // Seed with the coordinate axis least aligned with g.
  int k = 0;
  for (int i = 1; i < 3; ++i)
    if (std::fabs(g_dir[i]) < std::fabs(g_dir[k])) k = i;
  Vec3 a{0, 0, 0};
  a[k] = 1.0;
  Vec3 e1 = a - dot(a, g_dir) * g_dir;
  e1 = (1.0 / norm(e1)) * e1;
  const Vec3 e2 = cross(-g_dir, e1);
  return {e1, e2};
}

SubgroupTransform make_subgroup_transform(const Gravity& g, double theta, bool reflect, const Vec3& t) {
  g.validate();
  SubgroupTransform T;
  T.O = axis_angle(-g.direction, theta);
  if (reflect) {
    const Vec3 n = horizontal_basis(g.direction).second;
    Mat3 H = identity3();
    for (int r = 0; r < 3; ++r)
      for (int c = 0; c < 3; ++c) H[r][c] -= 2.0 * n[r] * n[c];
    T.O = T.O * H;
  }
  T.t = t;
  return T;
}

SubgroupTransform sample_subgroup_transform(Rng& rng, const Gravity& g, double translation_scale) {
  const double theta = rng.uniform(0.0, 2.0 * std::numbers::pi);
  const bool reflect = rng.uniform() < 0.5;
  Vec3 t{0, 0, 0};
  if (translation_scale > 0.0)
    for (double& x : t) x = translation_scale * rng.normal();
  return make_subgroup_transform(g, theta, reflect, t);
}

SubgroupTransform sample_subgroup_transform(std::uint64_t seed, const Gravity& g, double translation_scale) {
  Rng rng(seed);
  return sample_subgroup_transform(rng, g, translation_scale);
}

Mat3 sample_orthogonal(Rng& rng) {
  double q[4];
  double n = 0.0;
  do {
    n = 0.0;
    for (double& x : q) {
      x = rng.normal();
      n += x * x;
    }
  } while (n < 1e-12);
  n = std::sqrt(n);
  const double w = q[0] / n, x = q[1] / n, y = q[2] / n, z = q[3] / n;
  Mat3 R{{{1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)},
          {2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)},
          {2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)}}};
  if (rng.uniform() < 0.5)
    for (auto& row : R)
      for (double& v : row) v = -v;
  return R;
}

Mat3 horizontal_axis_rotation(const Gravity& g, double azimuth, double angle) {
  const auto [e1, e2] = horizontal_basis(g.direction);
  const Vec3 axis = std::cos(azimuth) * e1 + std::sin(azimuth) * e2;
  return axis_angle(axis, angle);
}

GeoTensor ominus(const GeoTensor& zi, const GeoTensor& zj) {
  if (zi.size() == 0 || zj.size() == 0) throw ShapeError("ominus: operands need a position channel");
  GeoTensor out;
  out.channels.push_back(zi[0] - zj[0]);
  for (std::size_t c = 1; c < zi.size(); ++c) out.channels.push_back(zi[c]);
  for (std::size_t c = 1; c < zj.size(); ++c) out.channels.push_back(zj[c]);
  return out;
}

int scalarize_basis(int channels, const ScalarizeOptions& opt) {
  const int kept = opt.channel_mask.empty() ? channels : static_cast<int>(opt.channel_mask.size());
  return kept + (opt.gravity ? 1 : 0);
}

std::size_t scalarize_in_dim(int channels, int scalar_dim, const ScalarizeOptions& opt) {
  const int b = scalarize_basis(channels, opt);
  const int s = opt.scalar_mask.empty() ? scalar_dim : static_cast<int>(opt.scalar_mask.size());
  return static_cast<std::size_t>(b * b + s);
}

std::size_t scalarize_out_dim(int channels, const ScalarizeOptions& opt) {
  return static_cast<std::size_t>(scalarize_basis(channels, opt) * opt.out_channels + opt.extra_scalars);
}

namespace {

std::vector<int> mask_columns(const std::vector<int>& mask) {
  std::vector<int> cols;
  for (int c : mask)
    for (int k = 0; k < 3; ++k) cols.push_back(3 * c + k);
  return cols;
}

// Masked, gravity-augmented basis: B×3·basis.
Tape::Var basis_of(MlpBinder& binder, Tape::Var z, int channels, Tape::Var h, const Vec3& g_dir,
                   const MLPParams* eta, const ScalarizeOptions& opt) {
  Tape& tape = binder.tape();
  if (tape.value(z).cols() != static_cast<std::size_t>(3 * channels))
    throw ShapeError("scalarize: vector input has " + std::to_string(tape.value(z).cols()) + " columns, expected " +
                     std::to_string(3 * channels));
  if (tape.value(h).rows() != tape.value(z).rows()) throw ShapeError("scalarize: scalar batch size mismatch");
  for (int c : opt.channel_mask)
    if (c < 0 || c >= channels) throw ShapeError("scalarize: channel mask out of range");
  Tape::Var basis = opt.channel_mask.empty() ? z : tape.select_cols(z, mask_columns(opt.channel_mask));
  if (!opt.gravity) return basis;
  if (eta == nullptr) throw ShapeError("scalarize: gravity augmentation needs a gate network");
  if (eta->out_dim() != 1) throw ShapeError("scalarize: gate network must output one value");
  auto gate = binder.forward(*eta, h);
  auto gcol = tape.matmul(gate, tape.constant(Mat::row_vector(g_dir)));
  return tape.concat_cols({basis, gcol});
}

}  // namespace

Tape::Var scalarize_gram(MlpBinder& binder, Tape::Var z, int channels, Tape::Var h, const Vec3& g_dir,
                         const MLPParams* eta, const ScalarizeOptions& opt) {
  Tape& tape = binder.tape();
  auto basis = basis_of(binder, z, channels, h, g_dir, eta, opt);
  auto gram = tape.gram(basis, scalarize_basis(channels, opt));
  return opt.normalize ? tape.normalize_rows(gram, kGramEps) : gram;
}

ScalarizeResult scalarize(MlpBinder& binder, Tape::Var z, int channels, Tape::Var h, const Vec3& g_dir,
                          const MLPParams& sigma, const MLPParams* eta, const ScalarizeOptions& opt) {
  Tape& tape = binder.tape();
  const int basis_channels = scalarize_basis(channels, opt);
  const int scalar_dim = static_cast<int>(tape.value(h).cols());
  for (int s : opt.scalar_mask)
    if (s < 0 || s >= scalar_dim) throw ShapeError("scalarize: scalar mask out of range");
  if (sigma.in_dim() != scalarize_in_dim(channels, scalar_dim, opt))
    throw ShapeError("scalarize: σ expects " + std::to_string(sigma.in_dim()) + " inputs, layout gives " +
                     std::to_string(scalarize_in_dim(channels, scalar_dim, opt)));
  if (sigma.out_dim() != scalarize_out_dim(channels, opt))
    throw ShapeError("scalarize: σ produces " + std::to_string(sigma.out_dim()) + " outputs, layout needs " +
                     std::to_string(scalarize_out_dim(channels, opt)));

  auto basis = basis_of(binder, z, channels, h, g_dir, eta, opt);
  auto gram = tape.gram(basis, basis_channels);
  if (opt.normalize) gram = tape.normalize_rows(gram, kGramEps);
  auto hs = opt.scalar_mask.empty() ? h : tape.select_cols(h, opt.scalar_mask);
  auto out = binder.forward(sigma, tape.concat_cols({gram, hs}));
  const int nv = basis_channels * opt.out_channels;
  ScalarizeResult r;
  r.vectors = tape.combine(basis, tape.slice_cols(out, 0, nv), basis_channels, opt.out_channels);
  if (opt.extra_scalars > 0) r.scalars = tape.slice_cols(out, nv, nv + opt.extra_scalars);
  return r;
}

GeoTensor scalarize_equivariant(const GeoTensor& z, const std::vector<double>& h, const MLPParams& sigma,
                                int out_channels, bool normalize) {
  Tape tape;
  MlpBinder binder(tape, false);
  ScalarizeOptions opt;
  opt.gravity = false;
  opt.normalize = normalize;
  opt.out_channels = out_channels;
  const int m = static_cast<int>(z.size());
  auto r = scalarize(binder, tape.constant(z.to_row()), m, tape.constant(Mat::row_vector(h)), {0, 0, -1}, sigma,
                     nullptr, opt);
  return GeoTensor::from_row(tape.value(r.vectors));
}

SubequivariantOutput scalarize_subequivariant(const GeoTensor& z, const std::vector<double>& h, const Gravity& g,
                                              const MLPParams& sigma, const MLPParams& eta, int out_channels,
                                              int extra_scalars, bool normalize) {
  g.validate();
  Tape tape;
  MlpBinder binder(tape, false);
  ScalarizeOptions opt;
  opt.normalize = normalize;
  opt.out_channels = out_channels;
  opt.extra_scalars = extra_scalars;
  const int m = static_cast<int>(z.size());
  auto r = scalarize(binder, tape.constant(z.to_row()), m, tape.constant(Mat::row_vector(h)), g.direction, sigma,
                     &eta, opt);
  SubequivariantOutput out;
  out.vectors = GeoTensor::from_row(tape.value(r.vectors));
  if (extra_scalars > 0) out.scalars = tape.value(r.scalars).storage();
  return out;
}

SubgroupTransform lemma5_witness(const GeoTensor& z1, const GeoTensor& z2, const Gravity& g) {
  g.validate();
  if (z1.size() != z2.size()) throw PreconditionError("lemma5_witness: channel counts differ");
  const std::size_t m = z1.size();
  const Vec3& gd = g.direction;

  // Compare the gravity-augmented Gram matrices.
  auto augmented = [&](const GeoTensor& z) {
    std::vector<Vec3> cols = z.channels;
    cols.push_back(gd);
    return cols;
  };
  const auto a1 = augmented(z1), a2 = augmented(z2);
  double scale = 1.0, worst = 0.0;
  for (std::size_t i = 0; i <= m; ++i)
    for (std::size_t j = 0; j <= m; ++j) {
      const double g1 = dot(a1[i], a1[j]), g2 = dot(a2[i], a2[j]);
      scale = std::fmax(scale, std::fabs(g1));
      worst = std::fmax(worst, std::fabs(g1 - g2));
    }
  if (worst > 1e-8 * scale)
    throw PreconditionError("lemma5_witness: augmented Gram matrices differ by " + std::to_string(worst));

  // Horizontal coordinates β (2×m) of both stacks, then 2×2 Procrustes.
  const auto [e1, e2] = horizontal_basis(gd);
  double A[2][2] = {{0, 0}, {0, 0}};
  for (std::size_t c = 0; c < m; ++c) {
    const double b1[2] = {dot(e1, z1[c]), dot(e2, z1[c])};
    const double b2[2] = {dot(e1, z2[c]), dot(e2, z2[c])};
    for (int r = 0; r < 2; ++r)
      for (int s = 0; s < 2; ++s) A[r][s] += b1[r] * b2[s];
  }
  const double rot_score = std::hypot(A[0][0] + A[1][1], A[1][0] - A[0][1]);
  const double ref_score = std::hypot(A[0][0] - A[1][1], A[0][1] + A[1][0]);
  double P[2][2];
  if (rot_score >= ref_score) {
    const double th = std::atan2(A[1][0] - A[0][1], A[0][0] + A[1][1]);
    const double c = std::cos(th), s = std::sin(th);
    P[0][0] = c, P[0][1] = -s, P[1][0] = s, P[1][1] = c;
  } else {
    const double ph = std::atan2(A[0][1] + A[1][0], A[0][0] - A[1][1]);
    const double c = std::cos(ph), s = std::sin(ph);
    P[0][0] = c, P[0][1] = s, P[1][0] = s, P[1][1] = -c;
  }

  // O = g gᵀ + G⊥ O′ G⊥ᵀ
  const Vec3 basis[2] = {e1, e2};
  SubgroupTransform T;
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) {
      double v = gd[r] * gd[c];
      for (int a = 0; a < 2; ++a)
        for (int b = 0; b < 2; ++b) v += basis[a][r] * P[a][b] * basis[b][c];
      T.O[r][c] = v;
    }
  double err = 0.0;
  for (std::size_t c = 0; c < m; ++c) {
    const Vec3 d = T.O * z2[c] - z1[c];
    for (double x : d) err = std::fmax(err, std::fabs(x));
  }
  if (!(err < 1e-6)) throw PreconditionError("lemma5_witness: alignment residual " + std::to_string(err));
  return T;
}

const char* group_name(Group g) {
  switch (g) {
    case Group::O3: return "O(3)";
    case Group::Og3: return "O_g(3)";
    case Group::Translation: return "translation";
    case Group::E3: return "E(3)";
    case Group::Og3Translation: return "O_g(3)+translation";
  }
  return "?";
}

EquivariantIO transform_io(const EquivariantIO& io, const SubgroupTransform& T) {
  EquivariantIO out = io;
  for (GeoTensor& z : out.vectors)
    for (Vec3& v : z.channels) v = T.O * v;
  for (const auto& [tensor, channel] : io.positional) out.vectors.at(tensor).channels.at(channel) += T.t;
  return out;
}

SubgroupTransform sample_group_element(Rng& rng, Group group, const Gravity& g, double translation_scale) {
  SubgroupTransform T;
  auto translation = [&] {
    Vec3 t;
    for (double& x : t) x = translation_scale * rng.normal();
    return t;
  };
  switch (group) {
    case Group::O3: T.O = sample_orthogonal(rng); break;
    case Group::Og3: T = sample_subgroup_transform(rng, g); break;
    case Group::Translation: T.t = translation(); break;
    case Group::E3:
      T.O = sample_orthogonal(rng);
      T.t = translation();
      break;
    case Group::Og3Translation:
      T = sample_subgroup_transform(rng, g);
      T.t = translation();
      break;
  }
  return T;
}

double equivariance_deviation(const EquivariantFn& fn, const EquivariantIO& input, const SubgroupTransform& T) {
  const EquivariantIO base = fn(input);
  const EquivariantIO moved = fn(transform_io(input, T));
  const EquivariantIO expect = transform_io(base, T);
  if (moved.vectors.size() != expect.vectors.size() || moved.scalars.size() != expect.scalars.size())
    throw ShapeError("check_equivariance: output structure changed under transform");
  double worst = 0.0;
  for (std::size_t i = 0; i < moved.vectors.size(); ++i) {
    if (moved.vectors[i].size() != expect.vectors[i].size()) throw ShapeError("check_equivariance: channel count changed");
    for (std::size_t c = 0; c < moved.vectors[i].size(); ++c)
      for (int k = 0; k < 3; ++k)
        worst = std::fmax(worst, std::fabs(moved.vectors[i][c][k] - expect.vectors[i][c][k]));
  }
  for (std::size_t i = 0; i < moved.scalars.size(); ++i) {
    if (moved.scalars[i].size() != expect.scalars[i].size()) throw ShapeError("check_equivariance: scalar width changed");
    for (std::size_t k = 0; k < moved.scalars[i].size(); ++k)
      worst = std::fmax(worst, std::fabs(moved.scalars[i][k] - expect.scalars[i][k]));
  }
  return worst;
}

double check_equivariance(const EquivariantFn& fn, const EquivariantIO& input, Group group, int trials,
                          std::uint64_t seed, const Gravity& g) {
  Rng rng(seed);
  double worst = 0.0;
  for (int t = 0; t < trials; ++t) {
    const SubgroupTransform T = sample_group_element(rng, group, g);
    worst = std::fmax(worst, equivariance_deviation(fn, input, T));
  }
  return worst;
}

}  // namespace sgnn
