#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "sgnn/model.hpp"

namespace sgnn {

/// Outcome of one property over many random trials.
struct PropertyResult {
  std::string suite;
  std::string name;
  /// Worst value seen (largest deviation, or smallest witness when `above`).
  double value = 0.0;
  double threshold = 0.0;
  /// The property asks for value > threshold (a failure witness) instead of value < threshold.
  bool above = false;
  bool pass = false;
  /// Trial seed that produced `value`; rerunning that trial reproduces it.
  std::uint64_t seed = 0;
  int trials = 0;
};

/// "PASS suite/name value=… (< threshold) trials=… seed=…".
std::string format_result(const PropertyResult& r);

/// Objects laid out along x, `spacing` apart, each a jittered blob of `per`
/// particles with small random velocities and N(0,1) attributes (attr_dim columns).
ParticleSystem random_particle_system(Rng& rng, int objects, int per, double spacing, int attr_dim = 2);
/// Fan-in scaled N(0,1) weights, 0.1·scale biases, including zero-initialized layers.
void randomize_parameters(Model& m, Rng& rng, double scale = 1.0);
/// [x_i, v_i] per particle, position channels marked as points.
EquivariantIO system_io(const ParticleSystem& s);
/// predict_step as a map on [x, v] with the attributes of `base` held fixed;
/// outputs are the predicted positions. `model` must outlive the function.
EquivariantFn model_function(const Model& model, const ParticleSystem& base);
/// Small SGNN/baseline layouts (hidden 12, two rounds) for property checks:
/// every variant, every ablation and the stage-3 wiring switch.
std::vector<ModelConfig> property_layouts();

/// Trial t uses the seed `seed + t`.
std::vector<PropertyResult> verify_equivariance(int trials, std::uint64_t seed);
std::vector<PropertyResult> verify_gradients(int trials, std::uint64_t seed);
std::vector<PropertyResult> verify_lemma5(int trials, std::uint64_t seed);
std::vector<PropertyResult> verify_reduction(int trials, std::uint64_t seed);

struct ExpressivityResult {
  /// Mean squared error of the gravity-aware block on its training set.
  double subequivariant_loss = 0.0;
  /// RMS over held-out inputs of the least-squares residual of g_dir against
  /// span(Z), a lower bound for every fully equivariant block (‖g_dir‖ = 1).
  double equivariant_residual = 0.0;
  /// RMS held-out residual of the trained fully equivariant block.
  double equivariant_trained_residual = 0.0;
  int steps = 0;
};

/// Fit the constant target g_dir from horizontal channels Z with a gravity-aware
/// scalarization block and with a fully O(3)-equivariant one, each trained by
/// full-batch Adam.
ExpressivityResult expressivity_separation(std::uint64_t seed, int steps = 8000);
std::vector<PropertyResult> verify_expressivity(int trials, std::uint64_t seed);

/// equivariance, gradients, lemma5, reduction, expressivity.
const std::vector<std::string>& verify_suite_names();
/// One named suite or "all"; throws ContractViolation on unknown names or trials < 1.
std::vector<PropertyResult> run_verify_suite(const std::string& suite, int trials, std::uint64_t seed);

}  // namespace sgnn
