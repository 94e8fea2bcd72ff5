#include "sgnn/tape.hpp"

#include <cmath>
#include <string>

#include "sgnn/errors.hpp"

namespace sgnn {

namespace {

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

void require(bool ok, const std::string& what) {
  if (!ok) throw ShapeError(what);
}

}  // namespace

Tape::Var Tape::push(Node n) {
  std::vector<const Mat*> in;
  in.reserve(n.inputs.size());
  for (int id : n.inputs) {
    in.push_back(&nodes_[static_cast<std::size_t>(id)].value);
    n.needs_grad = n.needs_grad || nodes_[static_cast<std::size_t>(id)].needs_grad;
  }
  if (n.op != Op::Leaf) n.value = evaluate(n, in);
  nodes_.push_back(std::move(n));
  return Var{static_cast<int>(nodes_.size()) - 1};
}

const Tape::Node& Tape::node(Var v) const {
  if (v.id < 0 || static_cast<std::size_t>(v.id) >= nodes_.size())
    throw StateError("tape: variable does not belong to this tape");
  return nodes_[static_cast<std::size_t>(v.id)];
}

Tape::Var Tape::constant(Mat value) {
  Node n;
  n.value = std::move(value);
  return push(std::move(n));
}

Tape::Var Tape::variable(Mat value) {
  Node n;
  n.value = std::move(value);
  n.needs_grad = true;
  return push(std::move(n));
}

#define SGNN_NODE(OP, ...)          \
  Node n;                           \
  n.op = Op::OP;                    \
  n.inputs = {__VA_ARGS__};         \
  for (int id : n.inputs) node(Var{id});

Tape::Var Tape::matmul(Var a, Var b) { SGNN_NODE(MatMul, a.id, b.id) return push(std::move(n)); }
Tape::Var Tape::add(Var a, Var b) { SGNN_NODE(Add, a.id, b.id) return push(std::move(n)); }
Tape::Var Tape::sub(Var a, Var b) { SGNN_NODE(Sub, a.id, b.id) return push(std::move(n)); }
Tape::Var Tape::mul(Var a, Var b) { SGNN_NODE(Mul, a.id, b.id) return push(std::move(n)); }
Tape::Var Tape::add_row(Var a, Var row) { SGNN_NODE(AddRow, a.id, row.id) return push(std::move(n)); }
Tape::Var Tape::silu(Var a) { SGNN_NODE(SiLU, a.id) return push(std::move(n)); }
Tape::Var Tape::relu(Var a) { SGNN_NODE(ReLU, a.id) return push(std::move(n)); }
Tape::Var Tape::sum(Var a) { SGNN_NODE(Sum, a.id) return push(std::move(n)); }
Tape::Var Tape::mean(Var a) { SGNN_NODE(Mean, a.id) return push(std::move(n)); }

Tape::Var Tape::scale(Var a, double s) {
  SGNN_NODE(Scale, a.id)
  n.scalar = s;
  return push(std::move(n));
}

Tape::Var Tape::concat_cols(std::span<const Var> parts) {
  Node n;
  n.op = Op::Concat;
  for (Var p : parts) {
    node(p);
    n.inputs.push_back(p.id);
  }
  if (n.inputs.empty()) throw ShapeError("concat_cols: no operands");
  return push(std::move(n));
}

Tape::Var Tape::select_cols(Var a, std::vector<int> cols) {
  SGNN_NODE(SelectCols, a.id)
  n.index = std::move(cols);
  return push(std::move(n));
}

Tape::Var Tape::slice_cols(Var a, int begin, int end) {
  if (begin < 0 || end < begin) throw ShapeError("slice_cols: bad range");
  std::vector<int> cols;
  for (int c = begin; c < end; ++c) cols.push_back(c);
  return select_cols(a, std::move(cols));
}

Tape::Var Tape::gather_rows(Var a, std::vector<int> rows) {
  SGNN_NODE(GatherRows, a.id)
  n.index = std::move(rows);
  return push(std::move(n));
}

Tape::Var Tape::scatter_add_rows(Var a, std::vector<int> index, int out_rows) {
  SGNN_NODE(ScatterAddRows, a.id)
  n.index = std::move(index);
  n.p0 = out_rows;
  return push(std::move(n));
}

Tape::Var Tape::scale_rows(Var a, std::vector<double> factors) {
  SGNN_NODE(ScaleRows, a.id)
  n.factors = std::move(factors);
  return push(std::move(n));
}

Tape::Var Tape::gram(Var z, int channels) {
  SGNN_NODE(Gram, z.id)
  n.p0 = channels;
  return push(std::move(n));
}

Tape::Var Tape::normalize_rows(Var a, double eps) {
  SGNN_NODE(NormalizeRows, a.id)
  n.scalar = eps;
  return push(std::move(n));
}

Tape::Var Tape::combine(Var z, Var v, int channels, int out_channels) {
  SGNN_NODE(Combine, z.id, v.id)
  n.p0 = channels;
  n.p1 = out_channels;
  return push(std::move(n));
}

#undef SGNN_NODE

const Mat& Tape::value(Var v) const { return node(v).value; }
bool Tape::requires_grad(Var v) const { return node(v).needs_grad; }

Mat Tape::evaluate(const Node& n, const std::vector<const Mat*>& in) const {
  switch (n.op) {
    case Op::Leaf:
      return n.value;
    case Op::MatMul:
      return sgnn::matmul(*in[0], *in[1]);
    case Op::Add:
      return *in[0] + *in[1];
    case Op::Sub:
      return *in[0] - *in[1];
    case Op::Mul:
      return hadamard(*in[0], *in[1]);
    case Op::AddRow:
      return sgnn::add_row(*in[0], *in[1]);
    case Op::Scale:
      return n.scalar * *in[0];
    case Op::SiLU: {
      Mat out = *in[0];
      for (double& x : out.values()) x = x * sigmoid(x);
      return out;
    }
    case Op::ReLU: {
      Mat out = *in[0];
      for (double& x : out.values()) x = x > 0.0 ? x : 0.0;
      return out;
    }
    case Op::Concat: {
      const std::size_t rows = in[0]->rows();
      std::size_t cols = 0;
      for (const Mat* m : in) {
        require(m->rows() == rows, "concat_cols: row count mismatch");
        cols += m->cols();
      }
      Mat out(rows, cols);
      for (std::size_t r = 0; r < rows; ++r) {
        double* o = out.row(r);
        for (const Mat* m : in) {
          const double* src = m->row(r);
          for (std::size_t c = 0; c < m->cols(); ++c) *o++ = src[c];
        }
      }
      return out;
    }
    case Op::SelectCols: {
      const Mat& a = *in[0];
      for (int c : n.index)
        require(c >= 0 && static_cast<std::size_t>(c) < a.cols(), "select_cols: column out of range");
      Mat out(a.rows(), n.index.size());
      for (std::size_t r = 0; r < a.rows(); ++r)
        for (std::size_t j = 0; j < n.index.size(); ++j) out(r, j) = a(r, static_cast<std::size_t>(n.index[j]));
      return out;
    }
    case Op::GatherRows: {
      const Mat& a = *in[0];
      Mat out(n.index.size(), a.cols());
      for (std::size_t r = 0; r < n.index.size(); ++r) {
        const int src = n.index[r];
        require(src >= 0 && static_cast<std::size_t>(src) < a.rows(), "gather_rows: row out of range");
        const double* s = a.row(static_cast<std::size_t>(src));
        std::copy(s, s + a.cols(), out.row(r));
      }
      return out;
    }
    case Op::ScatterAddRows: {
      const Mat& a = *in[0];
      require(a.rows() == n.index.size(), "scatter_add_rows: index length != rows");
      Mat out(static_cast<std::size_t>(n.p0), a.cols());
      for (std::size_t r = 0; r < a.rows(); ++r) {
        const int dst = n.index[r];
        require(dst >= 0 && dst < n.p0, "scatter_add_rows: destination out of range");
        double* o = out.row(static_cast<std::size_t>(dst));
        const double* s = a.row(r);
        for (std::size_t c = 0; c < a.cols(); ++c) o[c] += s[c];
      }
      return out;
    }
    case Op::ScaleRows: {
      Mat out = *in[0];
      require(out.rows() == n.factors.size(), "scale_rows: factor count != rows");
      for (std::size_t r = 0; r < out.rows(); ++r) {
        double* o = out.row(r);
        for (std::size_t c = 0; c < out.cols(); ++c) o[c] *= n.factors[r];
      }
      return out;
    }
    case Op::Gram: {
      const Mat& z = *in[0];
      const std::size_t m = static_cast<std::size_t>(n.p0);
      require(z.cols() == 3 * m, "gram: expected 3*channels columns");
      Mat out(z.rows(), m * m);
      for (std::size_t b = 0; b < z.rows(); ++b) {
        const double* zr = z.row(b);
        double* o = out.row(b);
        for (std::size_t c1 = 0; c1 < m; ++c1)
          for (std::size_t c2 = 0; c2 < m; ++c2)
            o[c1 * m + c2] = zr[3 * c1] * zr[3 * c2] + zr[3 * c1 + 1] * zr[3 * c2 + 1] +
                             zr[3 * c1 + 2] * zr[3 * c2 + 2];
      }
      return out;
    }
    case Op::NormalizeRows: {
      Mat out = *in[0];
      for (std::size_t r = 0; r < out.rows(); ++r) {
        double* o = out.row(r);
        double s = 0.0;
        for (std::size_t c = 0; c < out.cols(); ++c) s += o[c] * o[c];
        const double norm = std::sqrt(s);
        if (norm < n.scalar) continue;
        for (std::size_t c = 0; c < out.cols(); ++c) o[c] /= norm;
      }
      return out;
    }
    case Op::Combine: {
      const Mat& z = *in[0];
      const Mat& v = *in[1];
      const std::size_t m = static_cast<std::size_t>(n.p0), k = static_cast<std::size_t>(n.p1);
      require(z.cols() == 3 * m, "combine: Z columns != 3*channels");
      require(v.cols() == m * k && v.rows() == z.rows(), "combine: V shape mismatch");
      Mat out(z.rows(), 3 * k);
      for (std::size_t b = 0; b < z.rows(); ++b) {
        const double* zr = z.row(b);
        const double* vr = v.row(b);
        double* o = out.row(b);
        for (std::size_t c = 0; c < m; ++c)
          for (std::size_t j = 0; j < k; ++j) {
            const double w = vr[c * k + j];
            o[3 * j] += zr[3 * c] * w;
            o[3 * j + 1] += zr[3 * c + 1] * w;
            o[3 * j + 2] += zr[3 * c + 2] * w;
          }
      }
      return out;
    }
    case Op::Sum: {
      double s = 0.0;
      for (double v : in[0]->values()) s += v;
      return Mat(1, 1, s);
    }
    case Op::Mean: {
      double s = 0.0;
      for (double v : in[0]->values()) s += v;
      const std::size_t count = in[0]->size();
      return Mat(1, 1, count == 0 ? 0.0 : s / static_cast<double>(count));
    }
  }
  throw StateError("tape: unknown op");
}

void Tape::accumulate(int id, const Mat& g) {
  Node& target = nodes_[static_cast<std::size_t>(id)];
  if (!target.needs_grad) return;
  Mat& slot = grads_[static_cast<std::size_t>(id)];
  if (slot.empty() && !target.value.empty())
    slot = g;
  else if (!target.value.empty())
    slot += g;
}

void Tape::propagate(const Node& n, const Mat& g) {
  auto in = [&](std::size_t k) -> const Mat& { return nodes_[static_cast<std::size_t>(n.inputs[k])].value; };
  auto wants = [&](std::size_t k) { return nodes_[static_cast<std::size_t>(n.inputs[k])].needs_grad; };
  switch (n.op) {
    case Op::Leaf:
      return;
    case Op::MatMul:
      if (wants(0)) accumulate(n.inputs[0], matmul_nt(g, in(1)));
      if (wants(1)) accumulate(n.inputs[1], matmul_tn(in(0), g));
      return;
    case Op::Add:
      accumulate(n.inputs[0], g);
      accumulate(n.inputs[1], g);
      return;
    case Op::Sub:
      accumulate(n.inputs[0], g);
      if (wants(1)) accumulate(n.inputs[1], -1.0 * g);
      return;
    case Op::Mul:
      if (wants(0)) accumulate(n.inputs[0], hadamard(g, in(1)));
      if (wants(1)) accumulate(n.inputs[1], hadamard(g, in(0)));
      return;
    case Op::AddRow:
      accumulate(n.inputs[0], g);
      if (wants(1)) accumulate(n.inputs[1], column_sums(g));
      return;
    case Op::Scale:
      accumulate(n.inputs[0], n.scalar * g);
      return;
    case Op::SiLU: {
      Mat d = g;
      const Mat& x = in(0);
      for (std::size_t i = 0; i < d.size(); ++i) {
        const double s = sigmoid(x[i]);
        d[i] *= s * (1.0 + x[i] * (1.0 - s));
      }
      accumulate(n.inputs[0], d);
      return;
    }
    case Op::ReLU: {
      Mat d = g;
      const Mat& x = in(0);
      for (std::size_t i = 0; i < d.size(); ++i)
        if (!(x[i] > 0.0)) d[i] = 0.0;
      accumulate(n.inputs[0], d);
      return;
    }
    case Op::Concat: {
      std::size_t offset = 0;
      for (std::size_t k = 0; k < n.inputs.size(); ++k) {
        const Mat& part = in(k);
        if (wants(k)) {
          Mat d(part.rows(), part.cols());
          for (std::size_t r = 0; r < part.rows(); ++r)
            for (std::size_t c = 0; c < part.cols(); ++c) d(r, c) = g(r, offset + c);
          accumulate(n.inputs[k], d);
        }
        offset += part.cols();
      }
      return;
    }
    case Op::SelectCols: {
      const Mat& a = in(0);
      Mat d(a.rows(), a.cols());
      for (std::size_t r = 0; r < a.rows(); ++r)
        for (std::size_t j = 0; j < n.index.size(); ++j) d(r, static_cast<std::size_t>(n.index[j])) += g(r, j);
      accumulate(n.inputs[0], d);
      return;
    }
    case Op::GatherRows: {
      const Mat& a = in(0);
      Mat d(a.rows(), a.cols());
      for (std::size_t r = 0; r < n.index.size(); ++r) {
        double* o = d.row(static_cast<std::size_t>(n.index[r]));
        const double* s = g.row(r);
        for (std::size_t c = 0; c < a.cols(); ++c) o[c] += s[c];
      }
      accumulate(n.inputs[0], d);
      return;
    }
    case Op::ScatterAddRows: {
      const Mat& a = in(0);
      Mat d(a.rows(), a.cols());
      for (std::size_t r = 0; r < a.rows(); ++r) {
        const double* s = g.row(static_cast<std::size_t>(n.index[r]));
        std::copy(s, s + a.cols(), d.row(r));
      }
      accumulate(n.inputs[0], d);
      return;
    }
    case Op::ScaleRows: {
      Mat d = g;
      for (std::size_t r = 0; r < d.rows(); ++r) {
        double* o = d.row(r);
        for (std::size_t c = 0; c < d.cols(); ++c) o[c] *= n.factors[r];
      }
      accumulate(n.inputs[0], d);
      return;
    }
    case Op::Gram: {
      const Mat& z = in(0);
      const std::size_t m = static_cast<std::size_t>(n.p0);
      Mat d(z.rows(), z.cols());
      for (std::size_t b = 0; b < z.rows(); ++b) {
        const double* zr = z.row(b);
        const double* gr = g.row(b);
        double* o = d.row(b);
        for (std::size_t c1 = 0; c1 < m; ++c1)
          for (std::size_t c2 = 0; c2 < m; ++c2) {
            const double w = gr[c1 * m + c2];
            for (std::size_t k = 0; k < 3; ++k) {
              o[3 * c1 + k] += w * zr[3 * c2 + k];
              o[3 * c2 + k] += w * zr[3 * c1 + k];
            }
          }
      }
      accumulate(n.inputs[0], d);
      return;
    }
    case Op::NormalizeRows: {
      const Mat& x = in(0);
      const Mat& y = n.value;
      Mat d = g;
      for (std::size_t r = 0; r < x.rows(); ++r) {
        const double* xr = x.row(r);
        double s = 0.0;
        for (std::size_t c = 0; c < x.cols(); ++c) s += xr[c] * xr[c];
        const double norm = std::sqrt(s);
        if (norm < n.scalar) continue;
        const double* yr = y.row(r);
        double* dr = d.row(r);
        double proj = 0.0;
        for (std::size_t c = 0; c < x.cols(); ++c) proj += yr[c] * dr[c];
        for (std::size_t c = 0; c < x.cols(); ++c) dr[c] = (dr[c] - yr[c] * proj) / norm;
      }
      accumulate(n.inputs[0], d);
      return;
    }
    case Op::Combine: {
      const Mat& z = in(0);
      const Mat& v = in(1);
      const std::size_t m = static_cast<std::size_t>(n.p0), k = static_cast<std::size_t>(n.p1);
      Mat dz(z.rows(), z.cols()), dv(v.rows(), v.cols());
      for (std::size_t b = 0; b < z.rows(); ++b) {
        const double* zr = z.row(b);
        const double* vr = v.row(b);
        const double* gr = g.row(b);
        double* dzr = dz.row(b);
        double* dvr = dv.row(b);
        for (std::size_t c = 0; c < m; ++c)
          for (std::size_t j = 0; j < k; ++j) {
            const double w = vr[c * k + j];
            dzr[3 * c] += gr[3 * j] * w;
            dzr[3 * c + 1] += gr[3 * j + 1] * w;
            dzr[3 * c + 2] += gr[3 * j + 2] * w;
            dvr[c * k + j] += gr[3 * j] * zr[3 * c] + gr[3 * j + 1] * zr[3 * c + 1] + gr[3 * j + 2] * zr[3 * c + 2];
          }
      }
      if (wants(0)) accumulate(n.inputs[0], dz);
      if (wants(1)) accumulate(n.inputs[1], dv);
      return;
    }
    case Op::Sum: {
      const Mat& a = in(0);
      accumulate(n.inputs[0], Mat(a.rows(), a.cols(), g[0]));
      return;
    }
    case Op::Mean: {
      const Mat& a = in(0);
      const double w = a.size() == 0 ? 0.0 : g[0] / static_cast<double>(a.size());
      accumulate(n.inputs[0], Mat(a.rows(), a.cols(), w));
      return;
    }
  }
}

void Tape::backward(Var output, const Mat& seed) {
  if (nodes_.empty()) throw StateError("backward: nothing has been recorded on this tape");
  const Node& out = node(output);
  if (backward_done_) throw StateError("backward: gradients were already computed on this tape");
  if (!seed.same_shape(out.value)) throw ShapeError("backward: seed shape does not match output");
  grads_.assign(nodes_.size(), Mat());
  backward_done_ = true;
  if (!out.needs_grad) return;
  grads_[static_cast<std::size_t>(output.id)] = seed;
  for (int id = output.id; id >= 0; --id) {
    const Node& n = nodes_[static_cast<std::size_t>(id)];
    const Mat& g = grads_[static_cast<std::size_t>(id)];
    if (!n.needs_grad || g.empty() || n.op == Op::Leaf) continue;
    propagate(n, g);
  }
}

void Tape::backward(Var output) {
  if (nodes_.empty()) throw StateError("backward: nothing has been recorded on this tape");
  const Mat& v = node(output).value;
  if (v.rows() != 1 || v.cols() != 1) throw ShapeError("backward: output is not a scalar; pass a seed");
  backward(output, Mat(1, 1, 1.0));
}

Mat Tape::grad(Var v) const {
  if (!backward_done_) throw StateError("grad: backward has not been run");
  const Node& n = node(v);
  const Mat& g = grads_[static_cast<std::size_t>(v.id)];
  if (g.empty()) return Mat(n.value.rows(), n.value.cols());
  return g;
}

std::vector<Mat> Tape::replay() const {
  std::vector<Mat> values;
  values.reserve(nodes_.size());
  for (const Node& n : nodes_) {
    if (n.op == Op::Leaf) {
      values.push_back(n.value);
      continue;
    }
    std::vector<const Mat*> in;
    for (int id : n.inputs) in.push_back(&values[static_cast<std::size_t>(id)]);
    values.push_back(evaluate(n, in));
  }
  return values;
}

}  // namespace sgnn
