#pragma once

#include <compare>
#include <vector>

#include "sgnn/mat.hpp"
#include "sgnn/subequivariance.hpp"
#include "sgnn/vec3.hpp"

namespace sgnn {

/// Directed edge: node `i` receives a message from node `j`.
struct Edge {
  int i = 0;
  int j = 0;
  auto operator<=>(const Edge&) const = default;
};

struct ParticleSystem {
  std::vector<Vec3> x;
  std::vector<Vec3> v;
  Mat attrs;  // N×n
  std::vector<int> object_of;
  int objects = 0;

  std::size_t size() const { return x.size(); }
  /// Throws ContractViolation / ShapeError on malformed systems.
  void validate() const;
  /// [x_i, v_i]
  GeoTensor state(std::size_t i) const { return GeoTensor({x[i], v[i]}); }
  std::vector<int> object_sizes() const;
};

struct EdgeSets {
  std::vector<Edge> inter;
  std::vector<Edge> inner;
  std::vector<Edge> obj;

  /// inter ∪ inner in lexicographic order.
  std::vector<Edge> all() const;
};

/// All ordered pairs i ≠ j with ‖x_i − x_j‖ < r, sorted; cell-list search.
std::vector<Edge> radius_edges(const std::vector<Vec3>& x, double r);
EdgeSets separate_edges(const std::vector<Edge>& edges, const std::vector<int>& object_of);
EdgeSets build_edges(const ParticleSystem& sys, double r);

struct ObjectFeatures {
  std::vector<GeoTensor> C;  // per object [mean x, mean v]
  Mat c;                     // M×n, summed attributes
};

ObjectFeatures pool_objects(const ParticleSystem& sys);

/// Mean of Z'_i ⊖ Z'_j over inter edges (i,j) with o(i)=k, o(j)=l.
GeoTensor object_level_ominus(const std::vector<GeoTensor>& zp, const EdgeSets& edges,
                              const std::vector<int>& object_of, int k, int l);
/// Mean of h'_i ‖ h'_j over the same edges.
std::vector<double> object_level_scalars(const Mat& hp, const EdgeSets& edges, const std::vector<int>& object_of,
                                         int k, int l);

}  // namespace sgnn
