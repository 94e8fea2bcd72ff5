#include "sgnn/training.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <exception>
#include <limits>
#include <sstream>
#include <thread>

#include "sgnn/errors.hpp"

namespace sgnn {

namespace {

void require(bool ok, const char* field, const char* rule) {
  if (!ok) throw ContractViolation(std::string("train config: ") + field + " " + rule);
}

Mat state_matrix(const ParticleSystem& sys) {
  Mat z(sys.size(), 6);
  for (std::size_t i = 0; i < sys.size(); ++i)
    for (std::size_t d = 0; d < 3; ++d) {
      z(i, d) = sys.x[i][d];
      z(i, 3 + d) = sys.v[i][d];
    }
  return z;
}

Mat position_matrix(const std::vector<Vec3>& x) {
  Mat m(x.size(), 3);
  for (std::size_t i = 0; i < x.size(); ++i)
    for (std::size_t d = 0; d < 3; ++d) m(i, d) = x[i][d];
  return m;
}

/// Loss of one sample and, when `grads` is given, its parameter gradients
/// added to the running sums.
double forward_loss(const Model& model, const ParticleSystem& sys, const std::vector<Vec3>& target,
                    std::vector<std::vector<Mat>>* grads) {
  Tape tape;
  MlpBinder binder(tape, grads != nullptr);
  const EdgeSets edges = build_edges(sys, model.config.radius);
  const auto out = model_forward(binder, model, tape.constant(state_matrix(sys)), tape.constant(sys.attrs),
                                 sys.object_of, sys.objects, edges);
  const auto diff = tape.sub(out, tape.constant(position_matrix(target)));
  const auto loss = tape.scale(tape.sum(tape.mul(diff, diff)), 1.0 / static_cast<double>(sys.size()));
  const double value = tape.value(loss)(0, 0);
  if (grads == nullptr || !std::isfinite(value)) return value;
  tape.backward(loss);
  const auto mlps = model.mlps();
  for (std::size_t p = 0; p < mlps.size(); ++p) {
    std::vector<Mat> g = binder.grads(*mlps[p]);
    auto& acc = (*grads)[p];
    if (acc.empty())
      acc = std::move(g);
    else
      for (std::size_t t = 0; t < g.size(); ++t) acc[t] += g[t];
  }
  return value;
}

double validation_loss(const Model& model, const std::vector<Trajectory>& data, const std::vector<Sample>& samples) {
  double s = 0.0;
  for (const Sample& v : samples) s += sample_loss(model, data[static_cast<std::size_t>(v.trajectory)], v.frame);
  return s / static_cast<double>(samples.size());
}

std::vector<Sample> spread(const std::vector<Sample>& all, int cap) {
  if (cap <= 0 || static_cast<std::size_t>(cap) >= all.size()) return all;
  std::vector<Sample> out;
  for (int k = 0; k < cap; ++k) out.push_back(all[static_cast<std::size_t>(k) * all.size() / static_cast<std::size_t>(cap)]);
  return out;
}

std::string num(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

void TrainConfig::validate() const {
  require(adam.lr > 0.0 && std::isfinite(adam.lr), "lr", "must be positive");
  require(adam.beta1 >= 0.0 && adam.beta1 < 1.0 && adam.beta2 >= 0.0 && adam.beta2 < 1.0, "betas", "must lie in [0, 1)");
  require(adam.eps > 0.0, "eps", "must be positive");
  require(plateau_patience >= 1, "plateau_patience", "must be at least 1");
  require(decay > 0.0 && decay < 1.0, "decay", "must lie in (0, 1)");
  require(early_stop >= 1, "early_stop", "must be at least 1");
  require(noise >= 0.0 && std::isfinite(noise), "noise", "must be non-negative");
  require(batch_size >= 1, "batch_size", "must be at least 1");
  require(max_epochs >= 0, "max_epochs", "must be non-negative");
  require(samples_per_epoch >= 0 && validation_samples >= 0, "samples_per_epoch/validation_samples",
          "must be non-negative");
  require(train_fraction > 0.0 && train_fraction <= 1.0, "train_fraction", "must lie in (0, 1]");
}

std::string TrainConfig::describe() const {
  std::ostringstream os;
  os.precision(17);
  os << "lr=" << adam.lr << " beta1=" << adam.beta1 << " beta2=" << adam.beta2 << " plateau_patience=" << plateau_patience
     << " decay=" << decay << " early_stop=" << early_stop << " noise=" << noise
     << " noise_mode=" << (noise_mode == NoiseMode::Relative ? "relative" : "absolute") << " batch_size=" << batch_size
     << " max_epochs=" << max_epochs << " samples_per_epoch=" << samples_per_epoch
     << " validation_samples=" << validation_samples << " train_fraction=" << train_fraction << " seed=" << seed;
  return os.str();
}

Split split_trajectories(int count, double train_fraction, std::uint64_t seed) {
  if (count < 1) throw ContractViolation("split: need at least one trajectory");
  std::vector<int> order(static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i) order[static_cast<std::size_t>(i)] = i;
  Rng rng(seed);
  for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
  Split s;
  if (count == 1) {
    s.train = s.validation = order;
    return s;
  }
  auto n_train = static_cast<std::size_t>(std::llround(train_fraction * count));
  n_train = std::clamp<std::size_t>(n_train, 1, order.size() - 1);
  s.train.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_train));
  s.validation.assign(order.begin() + static_cast<std::ptrdiff_t>(n_train), order.end());
  std::sort(s.train.begin(), s.train.end());
  std::sort(s.validation.begin(), s.validation.end());
  return s;
}

std::vector<Sample> make_samples(const std::vector<Trajectory>& data, const std::vector<int>& trajectories) {
  std::vector<Sample> out;
  for (int k : trajectories) {
    const auto frames = static_cast<int>(data.at(static_cast<std::size_t>(k)).frames.size());
    for (int t = 1; t + 1 < frames; ++t) out.push_back({k, t});
  }
  return out;
}

Vec3 velocity_std(const std::vector<Trajectory>& data, const std::vector<int>& trajectories) {
  Vec3 sum{0, 0, 0}, sq{0, 0, 0};
  double count = 0.0;
  for (int k : trajectories) {
    const auto& frames = data.at(static_cast<std::size_t>(k)).frames;
    for (std::size_t t = 1; t < frames.size(); ++t)
      for (std::size_t i = 0; i < frames[t].size(); ++i) {
        const Vec3 v = frames[t][i] - frames[t - 1][i];
        for (int d = 0; d < 3; ++d) {
          sum[d] += v[d];
          sq[d] += v[d] * v[d];
        }
        count += 1.0;
      }
  }
  Vec3 out{0, 0, 0};
  if (count == 0.0) return out;
  for (int d = 0; d < 3; ++d) {
    const double mean = sum[d] / count;
    out[d] = std::sqrt(std::max(0.0, sq[d] / count - mean * mean));
  }
  return out;
}

double suggest_length_scale(const std::vector<Trajectory>& data, const std::vector<int>& trajectories) {
  const Vec3 s = velocity_std(data, trajectories);
  const double rms = std::sqrt(dot(s, s) / 3.0);
  return rms > 0.0 ? rms : 1.0;
}

ParticleSystem sample_input(const Model& model, const Trajectory& traj, int frame, const Vec3& noise_std, Rng* rng) {
  if (frame < 1 || static_cast<std::size_t>(frame) + 1 >= traj.frames.size())
    throw ContractViolation("sample: frame " + std::to_string(frame) + " has no previous or next frame");
  const auto& prev = traj.frames[static_cast<std::size_t>(frame) - 1];
  ParticleSystem sys;
  sys.x = traj.frames[static_cast<std::size_t>(frame)];
  if (rng != nullptr)
    for (Vec3& x : sys.x)
      for (int d = 0; d < 3; ++d) x[d] += noise_std[d] * rng->normal();
  sys.v.resize(sys.x.size());
  for (std::size_t i = 0; i < sys.x.size(); ++i) sys.v[i] = sys.x[i] - prev[i];
  sys.object_of = traj.object_of;
  sys.objects = traj.objects();
  sys.attrs = featurize(model.config, traj.attrs, sys.x);
  return sys;
}

double sample_loss(const Model& model, const Trajectory& traj, int frame) {
  const ParticleSystem sys = sample_input(model, traj, frame, {0, 0, 0}, nullptr);
  return forward_loss(model, sys, traj.frames[static_cast<std::size_t>(frame) + 1], nullptr);
}

TrainResult train(const Model& initial, const std::vector<Trajectory>& data, const TrainConfig& cfg,
                  const EpochCallback& on_epoch) {
  cfg.validate();
  initial.config.validate();
  if (data.empty()) throw ContractViolation("train: no trajectories");
  for (const Trajectory& t : data) {
    t.validate();
    if (t.frames.size() < 3) throw ContractViolation("train: every trajectory needs at least 3 frames");
  }

  const Split split = split_trajectories(static_cast<int>(data.size()), cfg.train_fraction, cfg.seed);
  const std::vector<Sample> train_samples = make_samples(data, split.train);
  const std::vector<Sample> val_samples = spread(make_samples(data, split.validation), cfg.validation_samples);
  Vec3 sigma{cfg.noise, cfg.noise, cfg.noise};
  if (cfg.noise_mode == NoiseMode::Relative && cfg.noise > 0.0) sigma = cfg.noise * velocity_std(data, split.train);
  const bool noisy = sigma[0] > 0.0 || sigma[1] > 0.0 || sigma[2] > 0.0;

  Model model = initial;
  Rng rng(cfg.seed);
  TrainResult result;
  result.initial_val_loss = validation_loss(model, data, val_samples);
  if (!std::isfinite(result.initial_val_loss)) throw TrainingError("train: non-finite validation loss before training", 0);
  result.best = model;
  result.best_val_loss = result.initial_val_loss;

  AdamConfig adam = cfg.adam;
  int plateau = 0, since_best = 0;
  std::size_t batch_id = 0;
  const std::size_t mlp_count = model.mlps().size();
  for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    std::vector<Sample> order = train_samples;
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
    if (cfg.samples_per_epoch > 0 && order.size() > static_cast<std::size_t>(cfg.samples_per_epoch))
      order.resize(static_cast<std::size_t>(cfg.samples_per_epoch));

    double loss_sum = 0.0;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(cfg.batch_size), ++batch_id) {
      const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
      std::vector<std::vector<Mat>> grads(mlp_count);
      for (std::size_t s = start; s < end; ++s) {
        const Sample& smp = order[s];
        const Trajectory& traj = data[static_cast<std::size_t>(smp.trajectory)];
        const ParticleSystem sys = sample_input(model, traj, smp.frame, sigma, noisy ? &rng : nullptr);
        const double loss = forward_loss(model, sys, traj.frames[static_cast<std::size_t>(smp.frame) + 1], &grads);
        if (!std::isfinite(loss))
          throw TrainingError("train: non-finite loss in batch " + std::to_string(batch_id) + " (epoch " +
                                  std::to_string(epoch) + ", trajectory " + std::to_string(smp.trajectory) +
                                  ", frame " + std::to_string(smp.frame) + ")",
                              batch_id);
        loss_sum += loss;
      }
      const double inv = 1.0 / static_cast<double>(end - start);
      const auto mlps = model.mlps();
      for (std::size_t p = 0; p < mlp_count; ++p) {
        if (grads[p].empty()) continue;
        for (Mat& g : grads[p]) g = inv * g;
        adam_step(*mlps[p], grads[p], adam);
      }
    }

    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = order.empty() ? 0.0 : loss_sum / static_cast<double>(order.size());
    rec.val_loss = validation_loss(model, data, val_samples);
    if (!std::isfinite(rec.val_loss))
      throw TrainingError("train: non-finite validation loss after epoch " + std::to_string(epoch), batch_id);
    rec.lr = adam.lr;
    if (rec.val_loss < result.best_val_loss) {
      result.best = model;
      result.best_val_loss = rec.val_loss;
      result.best_epoch = epoch;
      plateau = since_best = 0;
    } else {
      ++since_best;
      if (++plateau >= cfg.plateau_patience) {
        adam.lr *= cfg.decay;
        plateau = 0;
      }
    }
    result.history.push_back(rec);
    if (on_epoch) on_epoch(rec);
    if (since_best >= cfg.early_stop) {
      result.stopped_early = true;
      break;
    }
  }
  return result;
}

std::string history_csv(const std::vector<EpochRecord>& history) {
  std::string out = "epoch,train_loss,val_loss,lr\n";
  for (const EpochRecord& r : history)
    out += std::to_string(r.epoch) + "," + num(r.train_loss) + "," + num(r.val_loss) + "," + num(r.lr) + "\n";
  return out;
}

// ---------------------------------------------------------------------------
// Evaluation

std::vector<Trajectory> predict_trajectories(const Model& model, const std::vector<Trajectory>& truth,
                                             const EvalConfig& cfg, std::vector<bool>* diverged) {
  if (cfg.horizons.empty()) throw ContractViolation("evaluate: no horizons");
  const int last = *std::max_element(cfg.horizons.begin(), cfg.horizons.end());
  for (const Trajectory& t : truth) {
    t.validate();
    if (t.frames.size() < 2 || last >= static_cast<int>(t.frames.size()))
      throw ContractViolation("evaluate: horizon " + std::to_string(last) + " exceeds a trajectory of " +
                              std::to_string(t.frames.size()) + " frames");
  }
  std::vector<Trajectory> pred(truth.size());
  std::vector<char> failed(truth.size(), 0);
  parallel_for(truth.size(), worker_threads(), [&](std::size_t k) {
    const Trajectory& t = truth[k];
    Trajectory p = t;
    p.frames.resize(2);
    if (last >= 2) {
      RolloutStart start;
      start.previous = t.frames[0];
      start.current = t.frames[1];
      start.static_attrs = t.attrs;
      start.object_of = t.object_of;
      start.objects = t.objects();
      start.rigid = t.rigid_objects();
      start.reference = t.frames[0];
      RolloutOptions opt;
      opt.rigid = cfg.rigid;
      opt.ransac = cfg.ransac;
      opt.seed = cfg.seed + k;
      try {
        for (auto& f : rollout(model, start, last - 1, opt)) p.frames.push_back(std::move(f));
      } catch (const RolloutError&) {
        failed[k] = 1;
      }
    }
    pred[k] = std::move(p);
  });
  if (diverged != nullptr) diverged->assign(failed.begin(), failed.end());
  return pred;
}

EvalResult score_predictions(const std::vector<Trajectory>& pred, const std::vector<Trajectory>& truth,
                             const EvalConfig& cfg, double contact_threshold, const std::vector<bool>& diverged) {
  if (pred.size() != truth.size() || truth.empty())
    throw ShapeError("evaluate: prediction and truth counts differ or are zero");
  const double inf = std::numeric_limits<double>::infinity();
  EvalResult r;
  r.per_trajectory.resize(truth.size());
  for (std::size_t k = 0; k < truth.size(); ++k) {
    auto& e = r.per_trajectory[k];
    e.diverged = k < diverged.size() && diverged[k];
    r.diverged += e.diverged;
    for (int h : cfg.horizons) {
      if (h < 0 || static_cast<std::size_t>(h) >= truth[k].frames.size())
        throw ContractViolation("evaluate: horizon " + std::to_string(h) + " outside the trajectory");
      e.mse.push_back(static_cast<std::size_t>(h) < pred[k].frames.size() ? rollout_mse(pred[k], truth[k], h) : inf);
    }
  }
  for (std::size_t c = 0; c < cfg.horizons.size(); ++c) {
    HorizonRow row;
    row.horizon = cfg.horizons[c];
    double sum = 0.0;
    for (const auto& e : r.per_trajectory) sum += e.mse[c];
    const double n = static_cast<double>(truth.size());
    row.mse_mean = sum / n;
    double var = 0.0;
    for (const auto& e : r.per_trajectory) var += (e.mse[c] - row.mse_mean) * (e.mse[c] - row.mse_mean);
    row.mse_std = std::isfinite(row.mse_mean) ? std::sqrt(var / n) : inf;

    std::vector<Trajectory> p_cut(pred.size()), t_cut(truth.size());
    const auto keep = static_cast<std::size_t>(row.horizon) + 1;
    for (std::size_t k = 0; k < truth.size(); ++k) {
      p_cut[k] = pred[k];
      p_cut[k].frames.resize(std::min(keep, pred[k].frames.size()));
      t_cut[k] = truth[k];
      t_cut[k].frames.resize(keep);
    }
    double acc = 0.0;
    for (const auto& pair : cfg.contact_pairs) acc += contact_accuracy(p_cut, t_cut, pair, contact_threshold);
    row.contact_accuracy = cfg.contact_pairs.empty() ? std::nan("") : acc / static_cast<double>(cfg.contact_pairs.size());
    r.rows.push_back(row);
  }
  return r;
}

EvalResult evaluate(const Model& model, const std::vector<Trajectory>& truth, const EvalConfig& cfg) {
  std::vector<bool> diverged;
  const auto pred = predict_trajectories(model, truth, cfg, &diverged);
  const double threshold = cfg.contact_threshold > 0.0 ? cfg.contact_threshold : model.config.radius;
  return score_predictions(pred, truth, cfg, threshold, diverged);
}

std::vector<Trajectory> rotate_trajectories(const std::vector<Trajectory>& data, const Gravity& g,
                                            std::optional<double> theta, std::uint64_t seed) {
  std::vector<Trajectory> out;
  Rng rng(seed);
  for (const Trajectory& t : data) {
    const SubgroupTransform T = theta ? make_subgroup_transform(g, *theta, false) : sample_subgroup_transform(rng, g);
    out.push_back(transform_trajectory(t, T));
  }
  return out;
}

std::string metrics_csv(const EvalResult& plain, const EvalResult* rotated) {
  std::string out =
      "horizon,mse_mean,mse_std,contact_accuracy,rotated_mse_mean,rotated_mse_std,rotated_contact_accuracy,gap,"
      "trajectories,diverged\n";
  const double nan = std::nan("");
  for (std::size_t c = 0; c < plain.rows.size(); ++c) {
    const HorizonRow& p = plain.rows[c];
    const HorizonRow* q = rotated ? &rotated->rows.at(c) : nullptr;
    out += std::to_string(p.horizon) + "," + num(p.mse_mean) + "," + num(p.mse_std) + "," + num(p.contact_accuracy) +
           "," + num(q ? q->mse_mean : nan) + "," + num(q ? q->mse_std : nan) + "," +
           num(q ? q->contact_accuracy : nan) + "," + num(q ? q->mse_mean - p.mse_mean : nan) + "," +
           std::to_string(plain.per_trajectory.size()) + "," +
           std::to_string(plain.diverged + (rotated ? rotated->diverged : 0)) + "\n";
  }
  return out;
}

std::string per_trajectory_csv(const EvalConfig& cfg, const EvalResult& plain, const EvalResult* rotated) {
  std::string out = "trajectory,horizon,mse,rotated_mse,gap\n";
  const double nan = std::nan("");
  for (std::size_t k = 0; k < plain.per_trajectory.size(); ++k)
    for (std::size_t c = 0; c < cfg.horizons.size(); ++c) {
      const double a = plain.per_trajectory[k].mse[c];
      const double b = rotated ? rotated->per_trajectory.at(k).mse[c] : nan;
      out += std::to_string(k) + "," + std::to_string(cfg.horizons[c]) + "," + num(a) + "," + num(b) + "," +
             num(rotated ? b - a : nan) + "\n";
    }
  return out;
}

void parallel_for(std::size_t n, int threads, const std::function<void(std::size_t)>& fn) {
  const auto workers = static_cast<std::size_t>(std::max(1, threads));
  std::vector<std::exception_ptr> errors(n);
  if (workers == 1 || n < 2) {
    for (std::size_t i = 0; i < n; ++i) try {
        fn(i);
      } catch (...) {
        errors[i] = std::current_exception();
        break;
      }
  } else {
    std::atomic<std::size_t> next{0};
    auto work = [&] {
      for (std::size_t i = next++; i < n; i = next++) try {
          fn(i);
        } catch (...) {
          errors[i] = std::current_exception();
        }
    };
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < std::min(workers, n); ++w) pool.emplace_back(work);
    for (auto& t : pool) t.join();
  }
  for (const auto& e : errors)
    if (e) std::rethrow_exception(e);
}

int worker_threads() {
  if (const char* env = std::getenv("SGNN_THREADS")) {
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (end == env || *end != '\0' || v < 1) throw ContractViolation("SGNN_THREADS must be a positive integer");
    return static_cast<int>(v);
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

}  // namespace sgnn
