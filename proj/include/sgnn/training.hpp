#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "sgnn/model.hpp"
#include "sgnn/scenes.hpp"

namespace sgnn {

enum class NoiseMode {
  /// Standard deviation = noise × per-coordinate std of training velocities.
  Relative,
  /// Standard deviation = noise, in metres.
  Absolute,
};

struct TrainConfig {
  AdamConfig adam;
  /// Epochs without validation improvement before the learning rate decays.
  int plateau_patience = 3;
  double decay = 0.8;
  int early_stop = 10;
  double noise = 0.3;
  NoiseMode noise_mode = NoiseMode::Relative;
  /// Samples whose gradients are averaged per Adam step.
  int batch_size = 1;
  int max_epochs = 100;
  /// Cap on training samples drawn per epoch (0 = all of them).
  int samples_per_epoch = 0;
  /// Cap on validation samples (0 = all), taken in a fixed order.
  int validation_samples = 0;
  double train_fraction = 0.9;
  std::uint64_t seed = 0;

  /// Throws ContractViolation naming the offending field.
  void validate() const;
  std::string describe() const;
};

/// One supervision pair: frames t−1 and t in, frame t+1 out.
struct Sample {
  int trajectory = 0;
  int frame = 0;  // t
};

struct Split {
  std::vector<int> train;
  std::vector<int> validation;
};

/// Deterministic split by trajectory. With a single trajectory both sides
/// hold it; otherwise validation gets at least one.
Split split_trajectories(int count, double train_fraction, std::uint64_t seed);

/// Every (t−1, t, t+1) window of the listed trajectories.
std::vector<Sample> make_samples(const std::vector<Trajectory>& data, const std::vector<int>& trajectories);

/// Per-coordinate standard deviation of the one-frame velocities.
Vec3 velocity_std(const std::vector<Trajectory>& data, const std::vector<int>& trajectories);

/// Isotropic length unit for the model: RMS over coordinates of velocity_std
/// (1 when the data does not move).
double suggest_length_scale(const std::vector<Trajectory>& data, const std::vector<int>& trajectories);

/// Model input for sample s. `noise` (per coordinate, may be zero) perturbs x^t
/// only; the velocity is recomputed as x̃^t − x^{t−1}.
ParticleSystem sample_input(const Model& model, const Trajectory& traj, int frame, const Vec3& noise_std, Rng* rng);

/// Mean over particles of ‖prediction − x^{t+1}‖² (no noise, no gradient).
double sample_loss(const Model& model, const Trajectory& traj, int frame);

struct EpochRecord {
  int epoch = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;
  double lr = 0.0;
};

struct TrainResult {
  /// Parameters of the epoch with the lowest validation loss.
  Model best;
  int best_epoch = 0;
  /// Validation loss of the model passed in (epoch 0).
  double initial_val_loss = 0.0;
  double best_val_loss = 0.0;
  std::vector<EpochRecord> history;
  bool stopped_early = false;
};

/// Called after every epoch.
using EpochCallback = std::function<void(const EpochRecord&)>;

/// Next-step regression with Adam, plateau decay and early stopping. Throws
/// TrainingError (index = global batch number) on a non-finite loss.
TrainResult train(const Model& initial, const std::vector<Trajectory>& data, const TrainConfig& cfg,
                  const EpochCallback& on_epoch = {});

/// "epoch,train_loss,val_loss,lr" plus one row per epoch.
std::string history_csv(const std::vector<EpochRecord>& history);

struct EvalConfig {
  /// Frame indices at which the rollout error is reported.
  std::vector<int> horizons{10, 20, 30, 40};
  bool rigid = false;
  bool ransac = false;
  std::vector<std::pair<int, int>> contact_pairs{{0, 1}, {0, 2}, {1, 2}};
  /// Contact distance; ≤ 0 means the model's cutoff radius.
  double contact_threshold = 0.0;
  std::uint64_t seed = 0;
};

/// Rollout error of one trajectory at every horizon (+inf once it diverges).
struct TrajectoryErrors {
  std::vector<double> mse;
  bool diverged = false;
};

struct HorizonRow {
  int horizon = 0;
  double mse_mean = 0.0;
  double mse_std = 0.0;
  /// Mean over the configured pairs of the contact accuracy on frames 0..horizon.
  double contact_accuracy = 0.0;
};

struct EvalResult {
  std::vector<HorizonRow> rows;
  std::vector<TrajectoryErrors> per_trajectory;
  int diverged = 0;
};

/// Rollouts seeded with frames 0 and 1 of every trajectory.
std::vector<Trajectory> predict_trajectories(const Model& model, const std::vector<Trajectory>& truth,
                                             const EvalConfig& cfg, std::vector<bool>* diverged = nullptr);
/// Metrics of given predictions (frames past a divergence may be missing).
EvalResult score_predictions(const std::vector<Trajectory>& pred, const std::vector<Trajectory>& truth,
                             const EvalConfig& cfg, double contact_threshold,
                             const std::vector<bool>& diverged = {});
EvalResult evaluate(const Model& model, const std::vector<Trajectory>& truth, const EvalConfig& cfg);

/// The same O_g(3) element applied to every trajectory, or one random element per
/// trajectory drawn from `seed`.
std::vector<Trajectory> rotate_trajectories(const std::vector<Trajectory>& data, const Gravity& g,
                                            std::optional<double> theta, std::uint64_t seed);

/// Fixed header: horizon,mse_mean,mse_std,contact_accuracy,rotated_mse_mean,
/// rotated_mse_std,rotated_contact_accuracy,gap,trajectories,diverged.
/// Rotated columns hold "nan" when `rotated` is absent; gap = rotated − plain mean.
std::string metrics_csv(const EvalResult& plain, const EvalResult* rotated);
/// trajectory,horizon,mse,rotated_mse,gap.
std::string per_trajectory_csv(const EvalConfig& cfg, const EvalResult& plain, const EvalResult* rotated);

/// Calls fn(i) for i in [0, n) on up to `threads` workers; results must be
/// written to per-index slots so the outcome does not depend on scheduling.
/// The first exception (lowest index) is rethrown.
void parallel_for(std::size_t n, int threads, const std::function<void(std::size_t)>& fn);
/// SGNN_THREADS if set and positive, else the hardware concurrency.
int worker_threads();

}  // namespace sgnn
