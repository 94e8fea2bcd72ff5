#include "sgnn/graph.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <unordered_map>

#include "sgnn/errors.hpp"

namespace sgnn {

void ParticleSystem::validate() const {
  const std::size_t n = x.size();
  if (v.size() != n || object_of.size() != n) throw ShapeError("ParticleSystem: per-particle arrays differ in length");
  if (attrs.rows() != n) throw ShapeError("ParticleSystem: attrs must have one row per particle");
  if (objects < 0) throw ContractViolation("ParticleSystem: negative object count");
  std::vector<int> count(static_cast<std::size_t>(objects), 0);
  for (std::size_t i = 0; i < n; ++i) {
    const int o = object_of[i];
    if (o < 0 || o >= objects)
      throw ContractViolation("ParticleSystem: particle " + std::to_string(i) + " has object index " +
                              std::to_string(o) + " outside [0, " + std::to_string(objects) + ")");
    ++count[static_cast<std::size_t>(o)];
    for (int k = 0; k < 3; ++k)
      if (!std::isfinite(x[i][k]) || !std::isfinite(v[i][k]))
        throw ContractViolation("ParticleSystem: particle " + std::to_string(i) + " has a non-finite state");
  }
  for (int k = 0; k < objects; ++k)
    if (count[static_cast<std::size_t>(k)] == 0) throw ContractViolation("ParticleSystem: object " + std::to_string(k) + " is empty");
}

std::vector<int> ParticleSystem::object_sizes() const {
  std::vector<int> count(static_cast<std::size_t>(objects), 0);
  for (int o : object_of) ++count[static_cast<std::size_t>(o)];
  return count;
}

std::vector<Edge> EdgeSets::all() const {
  std::vector<Edge> out;
  out.reserve(inter.size() + inner.size());
  std::merge(inter.begin(), inter.end(), inner.begin(), inner.end(), std::back_inserter(out));
  return out;
}

namespace {

struct CellKey {
  long long a, b, c;
  bool operator==(const CellKey&) const = default;
};

struct CellHash {
  std::size_t operator()(const CellKey& k) const {
    std::size_t h = static_cast<std::size_t>(k.a) * 73856093u;
    h ^= static_cast<std::size_t>(k.b) * 19349663u;
    h ^= static_cast<std::size_t>(k.c) * 83492791u;
    return h;
  }
};

}  // namespace

std::vector<Edge> radius_edges(const std::vector<Vec3>& x, double r) {
  if (!(r > 0.0)) throw ContractViolation("radius_edges: cutoff must be positive");
  const double r2 = r * r;
  auto cell_of = [&](const Vec3& p) {
    return CellKey{static_cast<long long>(std::floor(p[0] / r)), static_cast<long long>(std::floor(p[1] / r)),
                   static_cast<long long>(std::floor(p[2] / r))};
  };
  std::unordered_map<CellKey, std::vector<int>, CellHash> cells;
  for (std::size_t i = 0; i < x.size(); ++i) cells[cell_of(x[i])].push_back(static_cast<int>(i));

  std::vector<Edge> edges;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const CellKey k = cell_of(x[i]);
    for (long long da = -1; da <= 1; ++da)
      for (long long db = -1; db <= 1; ++db)
        for (long long dc = -1; dc <= 1; ++dc) {
          auto it = cells.find({k.a + da, k.b + db, k.c + dc});
          if (it == cells.end()) continue;
          for (int j : it->second) {
            if (j == static_cast<int>(i)) continue;
            if (squared_norm(x[i] - x[static_cast<std::size_t>(j)]) < r2) edges.push_back({static_cast<int>(i), j});
          }
        }
  }
  std::sort(edges.begin(), edges.end());
  return edges;
}

EdgeSets separate_edges(const std::vector<Edge>& edges, const std::vector<int>& object_of) {
  EdgeSets out;
  for (const Edge& e : edges) {
    const int oi = object_of.at(static_cast<std::size_t>(e.i)), oj = object_of.at(static_cast<std::size_t>(e.j));
    if (oi == oj) {
      out.inner.push_back(e);
    } else {
      out.inter.push_back(e);
      out.obj.push_back({oi, oj});
    }
  }
  std::sort(out.obj.begin(), out.obj.end());
  out.obj.erase(std::unique(out.obj.begin(), out.obj.end()), out.obj.end());
  return out;
}

EdgeSets build_edges(const ParticleSystem& sys, double r) {
  return separate_edges(radius_edges(sys.x, r), sys.object_of);
}

ObjectFeatures pool_objects(const ParticleSystem& sys) {
  sys.validate();
  const std::size_t M = static_cast<std::size_t>(sys.objects);
  ObjectFeatures f;
  f.C.assign(M, GeoTensor({{0, 0, 0}, {0, 0, 0}}));
  f.c = Mat(M, sys.attrs.cols());
  std::vector<int> count(M, 0);
  for (std::size_t i = 0; i < sys.size(); ++i) {
    const std::size_t k = static_cast<std::size_t>(sys.object_of[i]);
    f.C[k][0] += sys.x[i];
    f.C[k][1] += sys.v[i];
    for (std::size_t a = 0; a < sys.attrs.cols(); ++a) f.c(k, a) += sys.attrs(i, a);
    ++count[k];
  }
  for (std::size_t k = 0; k < M; ++k) {
    const double inv = 1.0 / count[k];
    f.C[k][0] = inv * f.C[k][0];
    f.C[k][1] = inv * f.C[k][1];
  }
  return f;
}

GeoTensor object_level_ominus(const std::vector<GeoTensor>& zp, const EdgeSets& edges,
                              const std::vector<int>& object_of, int k, int l) {
  GeoTensor sum;
  int n = 0;
  for (const Edge& e : edges.inter) {
    if (object_of[static_cast<std::size_t>(e.i)] != k || object_of[static_cast<std::size_t>(e.j)] != l) continue;
    const GeoTensor d = ominus(zp[static_cast<std::size_t>(e.i)], zp[static_cast<std::size_t>(e.j)]);
    if (n == 0) sum = d;
    else
      for (std::size_t c = 0; c < d.size(); ++c) sum[c] += d[c];
    ++n;
  }
  if (n == 0)
    throw ContractViolation("object_level_ominus: no inter edges between objects " + std::to_string(k) + " and " +
                            std::to_string(l));
  for (Vec3& c : sum.channels) c = (1.0 / n) * c;
  return sum;
}

std::vector<double> object_level_scalars(const Mat& hp, const EdgeSets& edges, const std::vector<int>& object_of,
                                         int k, int l) {
  const std::size_t w = hp.cols();
  std::vector<double> sum(2 * w, 0.0);
  int n = 0;
  for (const Edge& e : edges.inter) {
    if (object_of[static_cast<std::size_t>(e.i)] != k || object_of[static_cast<std::size_t>(e.j)] != l) continue;
    for (std::size_t a = 0; a < w; ++a) {
      sum[a] += hp(static_cast<std::size_t>(e.i), a);
      sum[w + a] += hp(static_cast<std::size_t>(e.j), a);
    }
    ++n;
  }
  if (n == 0)
    throw ContractViolation("object_level_scalars: no inter edges between objects " + std::to_string(k) + " and " +
                            std::to_string(l));
  for (double& s : sum) s /= n;
  return sum;
}

}  // namespace sgnn
