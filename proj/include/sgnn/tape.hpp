#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "sgnn/mat.hpp"

namespace sgnn {

/// Matrix-valued reverse-mode tape.
///
/// Every operation evaluates eagerly and appends a node holding its value;
/// `backward` sweeps the nodes in reverse and accumulates adjoints into the
/// nodes that (transitively) depend on a `variable` leaf. Geometric batches use
/// the channel-major layout of a B×3m matrix: row b holds m three-vectors, and
/// channel c occupies columns [3c, 3c+3).
class Tape {
 public:
  struct Var {
    int id = -1;
    bool valid() const { return id >= 0; }
  };

  /// Leaf without gradient.
  Var constant(Mat value);
  /// Leaf whose gradient is tracked.
  Var variable(Mat value);

  Var matmul(Var a, Var b);
  Var add(Var a, Var b);
  Var sub(Var a, Var b);
  Var mul(Var a, Var b);
  /// a + row broadcast (row is 1×cols).
  Var add_row(Var a, Var row);
  Var scale(Var a, double s);
  Var silu(Var a);
  Var relu(Var a);

  Var concat_cols(std::span<const Var> parts);
  Var concat_cols(std::initializer_list<Var> parts) {
    return concat_cols(std::span<const Var>(parts.begin(), parts.size()));
  }
  Var select_cols(Var a, std::vector<int> cols);
  Var slice_cols(Var a, int begin, int end);
  Var gather_rows(Var a, std::vector<int> rows);
  /// out[index[r]] += a[r]; out has `out_rows` rows. Rows are summed in input order.
  Var scatter_add_rows(Var a, std::vector<int> index, int out_rows);
  Var scale_rows(Var a, std::vector<double> factors);

  /// Per-row Gram matrix of a B×3m batch: B×m², entry (c1, c2) at c1·m + c2.
  Var gram(Var z, int channels);
  /// Divide each row by its L2 norm; rows with norm < eps pass through unchanged.
  Var normalize_rows(Var a, double eps);
  /// Per-row Z·V with Z of `channels` vectors and V a channels×out_channels
  /// matrix stored row-major: B×3m, B×(m·k) → B×3k.
  Var combine(Var z, Var v, int channels, int out_channels);

  Var sum(Var a);
  Var mean(Var a);

  const Mat& value(Var v) const;
  std::size_t size() const { return nodes_.size(); }
  bool requires_grad(Var v) const;

  /// Reverse sweep seeded with d(output) = seed. May be called once per tape.
  void backward(Var output, const Mat& seed);
  /// Reverse sweep for a 1×1 output.
  void backward(Var output);
  bool has_gradients() const { return backward_done_; }
  /// Gradient w.r.t. `v`; a zero matrix if no path reaches it.
  Mat grad(Var v) const;

  /// Recompute every node value from the recorded leaves and ops.
  std::vector<Mat> replay() const;

 private:
  enum class Op {
    Leaf, MatMul, Add, Sub, Mul, AddRow, Scale, SiLU, ReLU, Concat, SelectCols,
    GatherRows, ScatterAddRows, ScaleRows, Gram, NormalizeRows, Combine, Sum, Mean,
  };

  struct Node {
    Op op = Op::Leaf;
    std::vector<int> inputs;
    std::vector<int> index;
    std::vector<double> factors;
    int p0 = 0;
    int p1 = 0;
    double scalar = 0.0;
    bool needs_grad = false;
    Mat value;
  };

  Var push(Node node);
  const Node& node(Var v) const;
  Mat evaluate(const Node& n, const std::vector<const Mat*>& in) const;
  void accumulate(int id, const Mat& g);
  void propagate(const Node& n, const Mat& g);

  std::vector<Node> nodes_;
  std::vector<Mat> grads_;
  bool backward_done_ = false;
};

}  // namespace sgnn
