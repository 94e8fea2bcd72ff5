#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <set>

#include "sgnn/errors.hpp"
#include "sgnn/graph.hpp"

using namespace sgnn;

namespace {

ParticleSystem random_system(Rng& rng, int n, int objects, double spread) {
  ParticleSystem s;
  s.objects = objects;
  s.attrs = Mat(static_cast<std::size_t>(n), 2);
  for (int i = 0; i < n; ++i) {
    s.x.push_back({spread * rng.uniform(), spread * rng.uniform(), spread * rng.uniform()});
    s.v.push_back({rng.normal(), rng.normal(), rng.normal()});
    s.object_of.push_back(i < objects ? i : static_cast<int>(rng.below(static_cast<std::uint64_t>(objects))));
    s.attrs(static_cast<std::size_t>(i), 0) = rng.normal();
    s.attrs(static_cast<std::size_t>(i), 1) = rng.normal();
  }
  return s;
}

EdgeSets brute_force(const ParticleSystem& s, double r) {
  EdgeSets e;
  std::set<Edge> obj;
  for (std::size_t i = 0; i < s.size(); ++i)
    for (std::size_t j = 0; j < s.size(); ++j) {
      if (i == j) continue;
      const Vec3 d = s.x[i] - s.x[j];
      if (d[0] * d[0] + d[1] * d[1] + d[2] * d[2] >= r * r) continue;
      const Edge edge{static_cast<int>(i), static_cast<int>(j)};
      if (s.object_of[i] == s.object_of[j]) {
        e.inner.push_back(edge);
      } else {
        e.inter.push_back(edge);
        obj.insert({s.object_of[i], s.object_of[j]});
      }
    }
  e.obj.assign(obj.begin(), obj.end());
  return e;
}

}  // namespace

TEST_CASE("far-apart particles have no edges") {
  ParticleSystem s;
  s.x = {{0, 0, 0}, {0.16, 0, 0}};
  s.v = {{0, 0, 0}, {0, 0, 0}};
  s.attrs = Mat(2, 1);
  s.object_of = {0, 1};
  s.objects = 2;
  const auto e = build_edges(s, 0.08);
  CHECK(e.all().empty());
  CHECK(e.obj.empty());
}

TEST_CASE("close particles of different objects form inter and object edges") {
  const double r = 0.08;
  ParticleSystem s;
  s.x = {{0, 0, 0}, {0, 0, r / 2}};
  s.v = {{0, 0, 0}, {0, 0, 0}};
  s.attrs = Mat(2, 1);
  s.object_of = {0, 1};
  s.objects = 2;
  const auto e = build_edges(s, r);
  CHECK(e.inter == std::vector<Edge>{{0, 1}, {1, 0}});
  CHECK(e.inner.empty());
  CHECK(e.obj == std::vector<Edge>{{0, 1}, {1, 0}});
}

TEST_CASE("cell list equals the brute-force scan") {
  Rng rng(1);
  for (int trial = 0; trial < 30; ++trial) {
    auto s = random_system(rng, 64, 4, 0.3);
    // Negative coordinates exercise the floor in the cell index.
    for (auto& p : s.x) p[0] -= 0.15;
    const auto fast = build_edges(s, 0.08);
    const auto slow = brute_force(s, 0.08);
    CHECK(fast.inter == slow.inter);
    CHECK(fast.inner == slow.inner);
    CHECK(fast.obj == slow.obj);
    for (const Edge& e : fast.all()) CHECK(std::binary_search(fast.all().begin(), fast.all().end(), Edge{e.j, e.i}));
  }
}

TEST_CASE("edges are invariant under rigid motions") {
  Rng rng(2);
  for (int trial = 0; trial < 20; ++trial) {
    auto s = random_system(rng, 64, 3, 0.3);
    const auto before = build_edges(s, 0.08);
    const Mat3 O = sample_orthogonal(rng);
    const Vec3 t{rng.normal(), rng.normal(), rng.normal()};
    for (auto& p : s.x) p = O * p + t;
    const auto after = build_edges(s, 0.08);
    CHECK(after.all() == before.all());
    CHECK(after.obj == before.obj);
  }
}

TEST_CASE("pool_objects") {
  ParticleSystem s;
  s.x = {{0, 0, 0}, {2, 0, 0}, {5, 5, 5}};
  s.v = {{0, 0, 0}, {0, 0, 0}, {1, 2, 3}};
  s.attrs = Mat::from_rows({{1, 0}, {2, 1}, {7, 7}});
  s.object_of = {0, 0, 1};
  s.objects = 2;
  const auto f = pool_objects(s);
  CHECK(f.C[0] == GeoTensor({{1, 0, 0}, {0, 0, 0}}));
  CHECK(f.C[1] == GeoTensor({{5, 5, 5}, {1, 2, 3}}));
  CHECK(f.c == Mat::from_rows({{3, 1}, {7, 7}}));

  s.objects = 3;
  CHECK_THROWS_AS(pool_objects(s), ContractViolation);
}

TEST_CASE("pool_objects matches a per-object loop and commutes with transforms") {
  Rng rng(3);
  auto s = random_system(rng, 30, 3, 1.0);
  const auto f = pool_objects(s);
  for (int k = 0; k < 3; ++k) {
    Vec3 xs{0, 0, 0}, vs{0, 0, 0};
    double a0 = 0, n = 0;
    for (std::size_t i = 0; i < s.size(); ++i)
      if (s.object_of[i] == k) {
        xs += s.x[i];
        vs += s.v[i];
        a0 += s.attrs(i, 0);
        n += 1;
      }
    for (int d = 0; d < 3; ++d) {
      CHECK(std::fabs(f.C[static_cast<std::size_t>(k)][0][d] - xs[d] / n) < 1e-12);
      CHECK(std::fabs(f.C[static_cast<std::size_t>(k)][1][d] - vs[d] / n) < 1e-12);
    }
    CHECK(std::fabs(f.c(static_cast<std::size_t>(k), 0) - a0) < 1e-12);
  }
  const auto T = sample_subgroup_transform(rng, Gravity{}, 1.0);
  auto moved = s;
  for (std::size_t i = 0; i < s.size(); ++i) {
    moved.x[i] = T.apply_point(s.x[i]);
    moved.v[i] = T.apply_vector(s.v[i]);
  }
  const auto g = pool_objects(moved);
  for (int k = 0; k < 3; ++k) {
    const auto expect = T.apply(f.C[static_cast<std::size_t>(k)], {0});
    for (int c = 0; c < 2; ++c)
      for (int d = 0; d < 3; ++d) CHECK(std::fabs(g.C[static_cast<std::size_t>(k)][c][d] - expect[c][d]) < 1e-12);
  }
}

TEST_CASE("object-level ominus") {
  // One contributing edge: equals that edge's ominus.
  std::vector<GeoTensor> z = {GeoTensor({{0, 0, 0}, {1, 0, 0}}), GeoTensor({{0.05, 0, 0}, {0, 1, 0}}),
                              GeoTensor({{-0.05, 0, 0}, {1, 0, 0}})};
  std::vector<int> obj = {0, 1, 1};
  EdgeSets one;
  one.inter = {{0, 1}, {1, 0}};
  one.obj = {{0, 1}, {1, 0}};
  CHECK(object_level_ominus(z, one, obj, 0, 1) == ominus(z[0], z[1]));

  // Opposite offsets, equal velocities: relative-position channel vanishes.
  std::vector<GeoTensor> z2 = {GeoTensor({{0, 0, 0}, {1, 0, 0}}), GeoTensor({{0.05, 0, 0}, {0, 1, 0}}),
                               GeoTensor({{-0.05, 0, 0}, {0, 1, 0}})};
  EdgeSets two;
  two.inter = {{0, 1}, {0, 2}};
  const auto d = object_level_ominus(z2, two, obj, 0, 1);
  CHECK(d[0] == Vec3{0, 0, 0});
  CHECK(d[2] == Vec3{0, 1, 0});
  CHECK_THROWS_AS(object_level_ominus(z2, two, obj, 1, 0), ContractViolation);
}

TEST_CASE("object-level ominus matches enumeration") {
  Rng rng(4);
  auto s = random_system(rng, 40, 3, 0.25);
  const auto e = build_edges(s, 0.08);
  std::vector<GeoTensor> z;
  for (std::size_t i = 0; i < s.size(); ++i) z.push_back(s.state(i));
  REQUIRE(!e.obj.empty());
  for (const Edge& kl : e.obj) {
    GeoTensor acc({{0, 0, 0}, {0, 0, 0}, {0, 0, 0}});
    std::vector<double> hs(4, 0.0);
    int n = 0;
    for (const Edge& ij : e.inter) {
      const auto i = static_cast<std::size_t>(ij.i), j = static_cast<std::size_t>(ij.j);
      if (s.object_of[i] != kl.i || s.object_of[j] != kl.j) continue;
      acc[0] += s.x[i] - s.x[j];
      acc[1] += s.v[i];
      acc[2] += s.v[j];
      hs[0] += s.attrs(i, 0), hs[1] += s.attrs(i, 1), hs[2] += s.attrs(j, 0), hs[3] += s.attrs(j, 1);
      ++n;
    }
    for (auto& c : acc.channels) c = (1.0 / n) * c;
    for (double& h : hs) h /= n;
    CHECK(object_level_ominus(z, e, s.object_of, kl.i, kl.j) == acc);
    CHECK(object_level_scalars(s.attrs, e, s.object_of, kl.i, kl.j) == hs);
  }
}
