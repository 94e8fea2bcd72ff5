#include "sgnn/mlp.hpp"

#include <cmath>

#include "sgnn/errors.hpp"

namespace sgnn {

const char* activation_name(Activation a) {
  switch (a) {
    case Activation::Linear: return "linear";
    case Activation::SiLU: return "silu";
    case Activation::ReLU: return "relu";
  }
  return "?";
}

Activation parse_activation(const std::string& name) {
  if (name == "linear") return Activation::Linear;
  if (name == "silu") return Activation::SiLU;
  if (name == "relu") return Activation::ReLU;
  throw ContractViolation("unknown activation '" + name + "'");
}

std::size_t MLPParams::in_dim() const { return layers.empty() ? 0 : layers.front().weight.rows(); }
std::size_t MLPParams::out_dim() const { return layers.empty() ? 0 : layers.back().weight.cols(); }

std::vector<Mat*> MLPParams::tensors() {
  std::vector<Mat*> out;
  for (DenseLayer& l : layers) {
    out.push_back(&l.weight);
    out.push_back(&l.bias);
  }
  return out;
}

std::vector<const Mat*> MLPParams::tensors() const {
  std::vector<const Mat*> out;
  for (const DenseLayer& l : layers) {
    out.push_back(&l.weight);
    out.push_back(&l.bias);
  }
  return out;
}

std::size_t MLPParams::parameter_count() const {
  std::size_t n = 0;
  for (const Mat* t : tensors()) n += t->size();
  return n;
}

void MLPParams::validate() const {
  if (layers.empty()) throw ShapeError("MLP has no layers");
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const DenseLayer& l = layers[i];
    if (l.bias.rows() != 1 || l.bias.cols() != l.weight.cols())
      throw ShapeError("MLP layer " + std::to_string(i) + ": bias does not match weight");
    if (i > 0 && layers[i - 1].weight.cols() != l.weight.rows())
      throw ShapeError("MLP layer " + std::to_string(i) + ": dimensions do not chain");
  }
  const auto ts = tensors();
  if (m.size() != ts.size() || v.size() != ts.size())
    throw ShapeError("MLP: moment buffers do not match parameters");
  for (std::size_t i = 0; i < ts.size(); ++i)
    if (!m[i].same_shape(*ts[i]) || !v[i].same_shape(*ts[i]))
      throw ShapeError("MLP: moment buffer " + std::to_string(i) + " shape mismatch");
}

MLPParams make_mlp(const std::vector<std::size_t>& dims, Activation hidden, Rng& rng, bool zero_last) {
  if (dims.size() < 2) throw ShapeError("make_mlp: need at least input and output dims");
  MLPParams p;
  for (std::size_t i = 0; i + 1 < dims.size(); ++i) {
    DenseLayer l;
    l.weight = Mat(dims[i], dims[i + 1]);
    l.bias = Mat(1, dims[i + 1]);
    const bool last = i + 2 == dims.size();
    l.activation = last ? Activation::Linear : hidden;
    if (!(last && zero_last)) {
      const double fan = static_cast<double>(dims[i] + dims[i + 1]);
      const double limit = fan > 0 ? std::sqrt(6.0 / fan) : 0.0;
      for (double& w : l.weight.values()) w = rng.uniform(-limit, limit);
    }
    p.layers.push_back(std::move(l));
  }
  for (const Mat* t : std::as_const(p).tensors()) {
    p.m.emplace_back(t->rows(), t->cols());
    p.v.emplace_back(t->rows(), t->cols());
  }
  return p;
}

MLPParams make_mlp3(std::size_t in, std::size_t width, std::size_t out, Activation hidden, Rng& rng,
                    bool zero_last) {
  return make_mlp({in, width, width, out}, hidden, rng, zero_last);
}

std::vector<double> mlp_forward(const MLPParams& params, std::span<const double> input) {
  const Mat out = mlp_forward(params, Mat::row_vector(input));
  return out.storage();
}

Mat mlp_forward(const MLPParams& params, const Mat& input) {
  Tape tape;
  MlpBinder binder(tape, false);
  return tape.value(binder.forward(params, tape.constant(input)));
}

Tape::Var mlp_forward(Tape& tape, const BoundMLP& mlp, Tape::Var input) {
  const Mat& x = tape.value(input);
  if (x.cols() != mlp.in_dim)
    throw ShapeError("mlp_forward: input width " + std::to_string(x.cols()) + " != " + std::to_string(mlp.in_dim));
  Tape::Var h = input;
  for (const auto& l : mlp.layers) {
    h = tape.add_row(tape.matmul(h, l.weight), l.bias);
    if (l.activation == Activation::SiLU) h = tape.silu(h);
    else if (l.activation == Activation::ReLU) h = tape.relu(h);
  }
  return h;
}

const BoundMLP& MlpBinder::bind(const MLPParams& params) {
  auto it = bound_.find(&params);
  if (it != bound_.end()) return it->second;
  if (params.layers.empty()) throw ShapeError("MLP has no layers");
  BoundMLP b;
  b.in_dim = params.in_dim();
  for (const DenseLayer& l : params.layers) {
    BoundMLP::Layer bl;
    bl.weight = trainable_ ? tape_.variable(l.weight) : tape_.constant(l.weight);
    bl.bias = trainable_ ? tape_.variable(l.bias) : tape_.constant(l.bias);
    bl.activation = l.activation;
    b.layers.push_back(bl);
  }
  return bound_.emplace(&params, std::move(b)).first->second;
}

std::vector<Mat> MlpBinder::grads(const MLPParams& params) const {
  std::vector<Mat> out;
  auto it = bound_.find(&params);
  for (std::size_t i = 0; i < params.layers.size(); ++i) {
    const DenseLayer& l = params.layers[i];
    if (it == bound_.end()) {
      out.emplace_back(l.weight.rows(), l.weight.cols());
      out.emplace_back(l.bias.rows(), l.bias.cols());
    } else {
      out.push_back(tape_.grad(it->second.layers[i].weight));
      out.push_back(tape_.grad(it->second.layers[i].bias));
    }
  }
  return out;
}

void adam_step(MLPParams& params, const std::vector<Mat>& grads, const AdamConfig& cfg) {
  auto ts = params.tensors();
  if (grads.size() != ts.size()) throw ShapeError("adam_step: gradient count does not match parameters");
  if (params.m.size() != ts.size() || params.v.size() != ts.size()) {
    params.m.clear();
    params.v.clear();
    for (const Mat* t : ts) {
      params.m.emplace_back(t->rows(), t->cols());
      params.v.emplace_back(t->rows(), t->cols());
    }
  }
  std::size_t flat = 0;
  for (std::size_t k = 0; k < ts.size(); ++k) {
    if (!grads[k].same_shape(*ts[k])) throw ShapeError("adam_step: gradient " + std::to_string(k) + " shape mismatch");
    for (std::size_t i = 0; i < grads[k].size(); ++i, ++flat)
      if (!std::isfinite(grads[k][i])) throw TrainingError("adam_step: non-finite gradient", flat);
  }
  params.step += 1;
  const double t = static_cast<double>(params.step);
  const double c1 = 1.0 - std::pow(cfg.beta1, t);
  const double c2 = 1.0 - std::pow(cfg.beta2, t);
  for (std::size_t k = 0; k < ts.size(); ++k) {
    Mat& w = *ts[k];
    Mat& m = params.m[k];
    Mat& v = params.v[k];
    const Mat& g = grads[k];
    for (std::size_t i = 0; i < w.size(); ++i) {
      m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g[i];
      v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g[i] * g[i];
      const double mhat = m[i] / c1;
      const double vhat = v[i] / c2;
      w[i] -= cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps);
    }
  }
}

}  // namespace sgnn
