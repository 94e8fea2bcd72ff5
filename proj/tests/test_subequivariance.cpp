#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <numbers>

#include "sgnn/errors.hpp"
#include "sgnn/subequivariance.hpp"

using namespace sgnn;

namespace {

GeoTensor random_geo(Rng& rng, int m) {
  GeoTensor z;
  for (int c = 0; c < m; ++c) z.channels.push_back({rng.normal(), rng.normal(), rng.normal()});
  return z;
}

std::vector<double> random_vec(Rng& rng, int n) {
  std::vector<double> h(n);
  for (double& x : h) x = rng.normal();
  return h;
}

MLPParams random_mlp(Rng& rng, std::size_t in, std::size_t out) {
  auto p = make_mlp3(in, 16, out, Activation::SiLU, rng);
  for (auto& l : p.layers)
    for (double& b : l.bias.values()) b = 0.5 * rng.normal();
  return p;
}

MLPParams constant_mlp(std::size_t in, std::vector<double> value) {
  Rng rng(0);
  auto p = make_mlp({in, value.size()}, Activation::SiLU, rng, true);
  p.layers[0].bias = Mat::row_vector(value);
  return p;
}

double max_diff(const GeoTensor& a, const GeoTensor& b) {
  double w = 0.0;
  for (std::size_t c = 0; c < a.size(); ++c)
    for (int k = 0; k < 3; ++k) w = std::fmax(w, std::fabs(a[c][k] - b[c][k]));
  return w;
}

GeoTensor rotate(const Mat3& O, const GeoTensor& z) {
  SubgroupTransform T;
  T.O = O;
  return T.apply(z);
}

}  // namespace

TEST_CASE("ominus reads off the definition") {
  GeoTensor zi({{1, 0, 0}, {0, 1, 0}});
  GeoTensor zj({{0, 0, 0}, {0, 0, 1}});
  CHECK(ominus(zi, zj) == GeoTensor({{1, 0, 0}, {0, 1, 0}, {0, 0, 1}}));
  GeoTensor z({{0.3, -2, 5}, {1, 2, 3}});
  CHECK(ominus(z, z) == GeoTensor({{0, 0, 0}, {1, 2, 3}, {1, 2, 3}}));
  CHECK_THROWS_AS(ominus(GeoTensor{}, z), ShapeError);
}

TEST_CASE("ominus is exactly translation invariant") {
  Rng rng(1);
  for (int trial = 0; trial < 100; ++trial) {
    auto zi = random_geo(rng, 2), zj = random_geo(rng, 3);
    SubgroupTransform T;
    T.t = {rng.normal(), rng.normal(), rng.normal()};
    // Round-trip-safe translation: powers of two keep subtraction exact.
    for (double& x : T.t) x = std::ldexp(std::round(x * 8), -3);
    for (auto& c : zi.channels)
      for (double& x : c) x = std::ldexp(std::round(x * 1024), -10);
    for (auto& c : zj.channels)
      for (double& x : c) x = std::ldexp(std::round(x * 1024), -10);
    CHECK(ominus(T.apply(zi, {0}), T.apply(zj, {0})) == ominus(zi, zj));
  }
}

TEST_CASE("equivariant scalarization: selector and zero input") {
  GeoTensor z({{1, 2, 3}, {4, 5, 6}});
  auto sigma = constant_mlp(4 + 1, {1.0, 0.0});
  const auto out = scalarize_equivariant(z, {0.7}, sigma);
  CHECK(out == GeoTensor({{1, 2, 3}}));

  Rng rng(2);
  auto rs = random_mlp(rng, 4 + 1, 2);
  const auto zero = scalarize_equivariant(GeoTensor({{0, 0, 0}, {0, 0, 0}}), {0.3}, rs);
  CHECK(max_diff(zero, GeoTensor({{0, 0, 0}})) == 0.0);
}

TEST_CASE("equivariant scalarization is O(3)-equivariant") {
  Rng rng(3);
  for (int trial = 0; trial < 200; ++trial) {
    auto z = random_geo(rng, 3);
    auto h = random_vec(rng, 2);
    auto sigma = random_mlp(rng, 9 + 2, 3 * 2);
    const Mat3 O = sample_orthogonal(rng);
    const auto lhs = scalarize_equivariant(rotate(O, z), h, sigma, 2);
    const auto rhs = rotate(O, scalarize_equivariant(z, h, sigma, 2));
    CHECK(max_diff(lhs, rhs) < 1e-9);
  }
}

TEST_CASE("subequivariant scalarization expresses pure gravity from an empty basis") {
  Gravity g;
  Rng rng(4);
  auto eta = random_mlp(rng, 2, 1);
  auto sigma = constant_mlp(1 + 2, {1.0});
  const std::vector<double> h{0.2, -0.5};
  const auto out = scalarize_subequivariant(GeoTensor{}, h, g, sigma, eta);
  const double gate = mlp_forward(eta, h)[0];
  REQUIRE(out.vectors.size() == 1);
  CHECK(out.vectors[0][0] == 0.0);
  CHECK(out.vectors[0][1] == 0.0);
  CHECK(out.vectors[0][2] == doctest::Approx(-gate).epsilon(1e-15));
}

TEST_CASE("subequivariant scalarization selecting the first channel") {
  Gravity g;
  Rng rng(5);
  auto eta = random_mlp(rng, 1, 1);
  auto sigma = constant_mlp(4 + 1, {1.0, 0.0});
  const auto out = scalarize_subequivariant(GeoTensor({{1, 0, 0}}), {0.4}, g, sigma, eta);
  CHECK(out.vectors == GeoTensor({{1, 0, 0}}));
}

TEST_CASE("subequivariant scalarization: O_g(3) passes, tilts fail") {
  Gravity g;
  Rng rng(6);
  double worst = 0.0, tilt_best = 0.0;
  for (int trial = 0; trial < 200; ++trial) {
    auto z = random_geo(rng, 2);
    auto h = random_vec(rng, 3);
    auto sigma = random_mlp(rng, 9 + 3, 3 * 2 + 4);
    auto eta = random_mlp(rng, 3, 1);
    const auto T = sample_subgroup_transform(rng, g);
    const auto base = scalarize_subequivariant(z, h, g, sigma, eta, 2, 4);
    const auto moved = scalarize_subequivariant(T.apply(z), h, g, sigma, eta, 2, 4);
    worst = std::fmax(worst, max_diff(moved.vectors, T.apply(base.vectors)));
    for (std::size_t k = 0; k < 4; ++k) worst = std::fmax(worst, std::fabs(moved.scalars[k] - base.scalars[k]));

    const Mat3 tilt = horizontal_axis_rotation(g, rng.uniform(0, 6.28), rng.uniform(0.5, 2.5));
    const auto tilted = scalarize_subequivariant(rotate(tilt, z), h, g, sigma, eta, 2, 4);
    tilt_best = std::fmax(tilt_best, max_diff(tilted.vectors, rotate(tilt, base.vectors)));
  }
  CHECK(worst < 1e-9);
  CHECK(tilt_best > 1e-3);
}

TEST_CASE("non-unit gravity is a contract violation") {
  Gravity g;
  g.direction = {0, 0, -1.001};
  Rng rng(7);
  auto eta = random_mlp(rng, 1, 1);
  auto sigma = constant_mlp(4 + 1, {1.0, 0.0});
  CHECK_THROWS_AS(scalarize_subequivariant(GeoTensor({{1, 0, 0}}), {0.4}, g, sigma, eta), ContractViolation);
}

TEST_CASE("shape mismatch in σ is a shape error") {
  Rng rng(8);
  auto sigma = random_mlp(rng, 7, 2);
  CHECK_THROWS_AS(scalarize_equivariant(GeoTensor({{1, 0, 0}, {0, 1, 0}}), {0.1}, sigma), ShapeError);
}

TEST_CASE("normalized Gram is invariant to a common positive scale") {
  Gravity g;
  Rng rng(9);
  for (int trial = 0; trial < 50; ++trial) {
    auto z = random_geo(rng, 3);
    auto eta = random_mlp(rng, 2, 1);
    const double c = std::exp(rng.uniform(-3, 3));
    auto eta_scaled = eta;
    eta_scaled.layers.back().weight = c * eta_scaled.layers.back().weight;
    eta_scaled.layers.back().bias = c * eta_scaled.layers.back().bias;
    auto zc = z;
    for (auto& ch : zc.channels) ch = c * ch;
    const auto h = random_vec(rng, 2);
    auto gram = [&](const GeoTensor& zz, const MLPParams& e) {
      Tape tape;
      MlpBinder binder(tape, false);
      ScalarizeOptions opt;
      auto v = scalarize_gram(binder, tape.constant(zz.to_row()), 3, tape.constant(Mat::row_vector(h)), g.direction,
                              &e, opt);
      return tape.value(v);
    };
    CHECK(max_abs_diff(gram(z, eta), gram(zc, eta_scaled)) < 1e-12);
  }
}

TEST_CASE("subgroup sampler") {
  Gravity g;
  const auto id = make_subgroup_transform(g, 0.0, false);
  CHECK(id.O == identity3());
  const auto quarter = make_subgroup_transform(g, std::numbers::pi / 2, false);
  const Vec3 ex = quarter.O * Vec3{1, 0, 0};
  CHECK(std::fabs(ex[0]) < 1e-15);
  CHECK(std::fabs(ex[1] - 1.0) < 1e-15);
  CHECK(std::fabs(ex[2]) < 1e-15);

  Rng rng(10);
  for (int i = 0; i < 1000; ++i) {
    Gravity gi;
    if (i % 2) {
      Vec3 d{rng.normal(), rng.normal(), rng.normal()};
      gi.direction = (1.0 / norm(d)) * d;
    }
    const auto T = sample_subgroup_transform(rng, gi);
    CHECK(orthogonality_error(T.O) < 1e-12);
    const Vec3 moved = T.O * gi.direction - gi.direction;
    CHECK(norm(moved) < 1e-12);
  }
}

TEST_CASE("lemma-5 witness") {
  Gravity g;
  Rng rng(11);
  auto z = random_geo(rng, 3);
  auto same = lemma5_witness(z, z, g);
  CHECK(max_diff(same.apply(z), z) < 1e-12);

  double worst = 0.0;
  for (int i = 0; i < 1000; ++i) {
    auto z2 = random_geo(rng, 1 + static_cast<int>(rng.below(4)));
    if (i % 10 == 0) z2.channels[0] = 2.0 * Vec3{0, 0, 1};  // partly vertical
    const auto truth = sample_subgroup_transform(rng, g);
    const auto z1 = truth.apply(z2);
    const auto T = lemma5_witness(z1, z2, g);
    worst = std::fmax(worst, max_diff(T.apply(z2), z1));
    CHECK(norm(T.O * g.direction - g.direction) < 1e-12);
  }
  CHECK(worst < 1e-6);

  auto z1 = random_geo(rng, 2);
  auto z2 = z1;
  z2.channels[0][2] += 0.5;  // different vertical projection
  CHECK_THROWS_AS(lemma5_witness(z1, z2, g), PreconditionError);
  // Same Gram but mirrored through a horizontal plane: not reachable within O_g(3).
  auto flipped = z1;
  for (auto& c : flipped.channels) c[2] = -c[2];
  CHECK_THROWS_AS(lemma5_witness(flipped, z1, g), PreconditionError);
}

TEST_CASE("check_equivariance on the identity map") {
  Rng rng(12);
  EquivariantIO io;
  io.vectors = {random_geo(rng, 2), random_geo(rng, 1)};
  io.scalars = {random_vec(rng, 3)};
  io.positional = {{0, 0}};
  const EquivariantFn id = [](const EquivariantIO& in) { return in; };
  for (Group grp : {Group::O3, Group::Og3, Group::Translation, Group::E3, Group::Og3Translation})
    CHECK(check_equivariance(id, io, grp, 20, 1) == 0.0);
}
