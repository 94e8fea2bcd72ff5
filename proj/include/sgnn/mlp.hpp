#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "sgnn/mat.hpp"
#include "sgnn/rng.hpp"
#include "sgnn/tape.hpp"

namespace sgnn {

enum class Activation { Linear, SiLU, ReLU };

const char* activation_name(Activation a);
Activation parse_activation(const std::string& name);

/// y = act(x·W + b) with W stored in×out and b as a 1×out row.
struct DenseLayer {
  Mat weight;
  Mat bias;
  Activation activation = Activation::Linear;
};

struct MLPParams {
  std::vector<DenseLayer> layers;
  /// Adam first/second moments, one per tensor in `tensors()` order.
  std::vector<Mat> m;
  std::vector<Mat> v;
  std::int64_t step = 0;

  std::size_t in_dim() const;
  std::size_t out_dim() const;
  /// weight0, bias0, weight1, bias1, ...
  std::vector<Mat*> tensors();
  std::vector<const Mat*> tensors() const;
  std::size_t parameter_count() const;
  /// Throws ShapeError when layer dimensions do not chain or moments mismatch.
  void validate() const;
};

/// Layers dims[0]→dims[1]→…; hidden layers use `hidden`, the last is linear.
/// Xavier-uniform weights, zero biases. `zero_last` zeroes the final layer.
MLPParams make_mlp(const std::vector<std::size_t>& dims, Activation hidden, Rng& rng, bool zero_last = false);

/// Three projection layers: in → width → width → out.
MLPParams make_mlp3(std::size_t in, std::size_t width, std::size_t out, Activation hidden, Rng& rng,
                    bool zero_last = false);

std::vector<double> mlp_forward(const MLPParams& params, std::span<const double> input);
/// Row-batched forward without a tape.
Mat mlp_forward(const MLPParams& params, const Mat& input);

struct BoundMLP {
  struct Layer {
    Tape::Var weight;
    Tape::Var bias;
    Activation activation;
  };
  std::vector<Layer> layers;
  std::size_t in_dim = 0;
};

Tape::Var mlp_forward(Tape& tape, const BoundMLP& mlp, Tape::Var input);

/// Puts parameter bundles on a tape on first use and remembers their leaves.
class MlpBinder {
 public:
  MlpBinder(Tape& tape, bool trainable) : tape_(tape), trainable_(trainable) {}

  const BoundMLP& bind(const MLPParams& params);
  Tape::Var forward(const MLPParams& params, Tape::Var input) { return mlp_forward(tape_, bind(params), input); }
  Tape& tape() { return tape_; }

  /// Gradients for every tensor of `params`, in `tensors()` order. Bundles
  /// that never reached the tape get zeros.
  std::vector<Mat> grads(const MLPParams& params) const;

 private:
  Tape& tape_;
  bool trainable_;
  std::map<const MLPParams*, BoundMLP> bound_;
};

struct AdamConfig {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Bias-corrected Adam. Non-finite gradients throw TrainingError carrying the
/// flat index of the first offending scalar; parameters are left untouched.
void adam_step(MLPParams& params, const std::vector<Mat>& grads, const AdamConfig& cfg);

}  // namespace sgnn
