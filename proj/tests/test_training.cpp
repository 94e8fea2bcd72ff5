#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <numbers>
#include <set>

#include "sgnn/errors.hpp"
#include "sgnn/training.hpp"
#include "support/models.hpp"

using namespace sgnn;
using namespace sgnn::testing;

namespace {

SceneConfig small_scene(std::uint64_t seed, int frames = 8) {
  SceneConfig c;
  c.objects = 2;
  c.frames = frames;
  c.seed = seed;
  return c;
}

std::vector<Trajectory> small_data(int count, int frames = 8) {
  std::vector<Trajectory> out;
  for (int s = 0; s < count; ++s) out.push_back(generate_scene(small_scene(static_cast<std::uint64_t>(s), frames)));
  return out;
}

TrainConfig quick_config() {
  TrainConfig c;
  c.max_epochs = 2;
  c.adam.lr = 1e-3;
  c.seed = 3;
  return c;
}

bool same_tensors(const Model& a, const Model& b) {
  const NamedTensors x = model_to_tensors(a), y = model_to_tensors(b);
  return x == y;
}

}  // namespace

TEST_CASE("train config validation") {
  CHECK_NOTHROW(TrainConfig{}.validate());
  TrainConfig c;
  c.decay = 1.0;
  CHECK_THROWS_AS(c.validate(), ContractViolation);
  c = {};
  c.plateau_patience = 0;
  CHECK_THROWS_AS(c.validate(), ContractViolation);
  c = {};
  c.adam.lr = -1.0;
  CHECK_THROWS_AS(c.validate(), ContractViolation);
  c = {};
  c.train_fraction = 0.0;
  CHECK_THROWS_AS(c.validate(), ContractViolation);
  const TrainConfig d;
  CHECK(d.adam.lr == 1e-4);
  CHECK(d.adam.beta1 == 0.9);
  CHECK(d.adam.beta2 == 0.999);
  CHECK(d.plateau_patience == 3);
  CHECK(d.decay == 0.8);
  CHECK(d.early_stop == 10);
  CHECK(d.batch_size == 1);
}

TEST_CASE("trajectory split is deterministic and disjoint") {
  const Split a = split_trajectories(50, 0.9, 11), b = split_trajectories(50, 0.9, 11);
  CHECK(a.train == b.train);
  CHECK(a.validation == b.validation);
  CHECK(a.train.size() == 45);
  CHECK(a.validation.size() == 5);
  std::set<int> all(a.train.begin(), a.train.end());
  for (int v : a.validation) CHECK(all.insert(v).second);
  CHECK(all.size() == 50);
  CHECK(split_trajectories(50, 0.9, 12).validation != a.validation);

  const Split one = split_trajectories(1, 0.9, 0);
  CHECK(one.train == std::vector<int>{0});
  CHECK(one.validation == std::vector<int>{0});
  CHECK(split_trajectories(2, 1.0, 0).validation.size() == 1);
  CHECK_THROWS_AS(split_trajectories(0, 0.9, 0), ContractViolation);
}

TEST_CASE("samples and velocity statistics") {
  const auto data = small_data(2, 6);
  const auto s = make_samples(data, {0, 1});
  REQUIRE(s.size() == 2 * (data[0].frames.size() - 2));
  CHECK(s.front().frame == 1);
  CHECK(s.back().frame == static_cast<int>(data[1].frames.size()) - 2);

  // Two-pass reference.
  const Vec3 got = velocity_std(data, {0, 1});
  for (int d = 0; d < 3; ++d) {
    std::vector<double> v;
    for (const auto& t : data)
      for (std::size_t f = 1; f < t.frames.size(); ++f)
        for (std::size_t i = 0; i < t.frames[f].size(); ++i) v.push_back(t.frames[f][i][d] - t.frames[f - 1][i][d]);
    double mean = 0.0;
    for (double x : v) mean += x;
    mean /= static_cast<double>(v.size());
    double var = 0.0;
    for (double x : v) var += (x - mean) * (x - mean);
    CHECK(got[d] == doctest::Approx(std::sqrt(var / static_cast<double>(v.size()))).epsilon(1e-9));
  }
}

TEST_CASE("noise perturbs the input positions only") {
  const auto data = small_data(1, 6);
  const Model m = make_model(small_config(), 1);
  Rng rng(5);
  const Vec3 sigma{0.01, 0.02, 0.005};
  Vec3 sum{0, 0, 0}, sq{0, 0, 0};
  double n = 0.0;
  for (int rep = 0; rep < 40; ++rep) {
    const ParticleSystem s = sample_input(m, data[0], 2, sigma, &rng);
    for (std::size_t i = 0; i < s.size(); ++i) {
      const Vec3 d = s.x[i] - data[0].frames[2][i];
      CHECK(s.v[i] == s.x[i] - data[0].frames[1][i]);
      for (int k = 0; k < 3; ++k) {
        sum[k] += d[k];
        sq[k] += d[k] * d[k];
      }
      n += 1.0;
    }
  }
  for (int k = 0; k < 3; ++k) {
    CHECK(std::fabs(sum[k] / n) < 0.1 * sigma[k]);
    CHECK(std::sqrt(sq[k] / n) == doctest::Approx(sigma[k]).epsilon(0.1));
  }
  const ParticleSystem clean = sample_input(m, data[0], 2, sigma, nullptr);
  CHECK(clean.x == data[0].frames[2]);
  CHECK_THROWS_AS(sample_input(m, data[0], 0, sigma, nullptr), ContractViolation);
  CHECK_THROWS_AS(sample_input(m, data[0], 6, sigma, nullptr), ContractViolation);
}

TEST_CASE("a model that already fits the data has zero loss and does not move") {
  // A fresh model predicts x^{t+1} = x^t, which is exact for a resting scene.
  Trajectory still = small_data(1, 6)[0];
  for (auto& f : still.frames) f = still.frames[0];
  const Model m = make_model(small_config(), 2);
  TrainConfig c = quick_config();
  c.noise = 0.0;
  c.max_epochs = 1;
  const TrainResult r = train(m, {still}, c);
  REQUIRE(r.history.size() == 1);
  CHECK(r.history[0].train_loss < 1e-20);
  CHECK(r.history[0].val_loss < 1e-20);
  CHECK(same_tensors(r.best, m));
}

TEST_CASE("training loss is the mean single-step rollout error") {
  const auto data = small_data(2, 6);
  Rng rng(8);
  const Model m = random_model(rng, small_config(), 0.3);
  double expected = 0.0;
  int count = 0;
  for (const auto& traj : data)
    for (int t = 1; t + 1 < static_cast<int>(traj.frames.size()); ++t) {
      ParticleSystem sys;
      sys.x = traj.frames[static_cast<std::size_t>(t)];
      for (std::size_t i = 0; i < sys.x.size(); ++i) sys.v.push_back(sys.x[i] - traj.frames[static_cast<std::size_t>(t) - 1][i]);
      sys.object_of = traj.object_of;
      sys.objects = traj.objects();
      sys.attrs = featurize(m.config, traj.attrs, sys.x);
      const std::vector<std::vector<Vec3>> pred{predict_step(m, sys)};
      const std::vector<std::vector<Vec3>> truth{traj.frames[static_cast<std::size_t>(t) + 1]};
      const double mse = rollout_mse(pred, truth, 0);
      CHECK(sample_loss(m, traj, t) == doctest::Approx(mse).epsilon(1e-12));
      expected += mse;
      ++count;
    }
  expected /= count;

  // One batch holding every sample: the epoch loss is measured before the only update.
  TrainConfig c = quick_config();
  c.noise = 0.0;
  c.max_epochs = 1;
  c.train_fraction = 1.0;
  c.batch_size = 1000;
  std::vector<Trajectory> both = data;
  const TrainResult r = train(m, both, c);
  const Split sp = split_trajectories(2, 1.0, c.seed);
  double train_expected = 0.0;
  int n = 0;
  for (const Sample& s : make_samples(both, sp.train)) {
    train_expected += sample_loss(m, both[static_cast<std::size_t>(s.trajectory)], s.frame);
    ++n;
  }
  CHECK(r.history[0].train_loss == doctest::Approx(train_expected / n).epsilon(1e-12));
  CHECK(r.initial_val_loss > 0.0);
  CHECK(expected > 0.0);
}

TEST_CASE("training is seed-deterministic and improves the fit") {
  const auto data = small_data(4, 8);
  const Model m = make_model(small_config(), 4);
  TrainConfig c = quick_config();
  c.max_epochs = 3;
  const TrainResult a = train(m, data, c), b = train(m, data, c);
  CHECK(same_tensors(a.best, b.best));
  REQUIRE(a.history.size() == b.history.size());
  for (std::size_t e = 0; e < a.history.size(); ++e) {
    CHECK(a.history[e].train_loss == b.history[e].train_loss);
    CHECK(a.history[e].val_loss == b.history[e].val_loss);
  }
  CHECK(a.best_val_loss < a.initial_val_loss);

  c.seed = 4;
  const TrainResult d = train(m, data, c);
  CHECK(!same_tensors(a.best, d.best));
}

TEST_CASE("plateau decay and early stopping follow the validation history") {
  const auto data = small_data(3, 6);
  Rng rng(21);
  const Model m = random_model(rng, small_config(), 0.3);
  TrainConfig c = quick_config();
  c.adam.lr = 3e-2;  // large enough that validation rarely improves
  c.max_epochs = 25;
  c.plateau_patience = 2;
  c.early_stop = 4;
  c.decay = 0.5;
  const TrainResult r = train(m, data, c);
  REQUIRE(!r.history.empty());

  double best = r.initial_val_loss, lr = c.adam.lr;
  int plateau = 0, since = 0, best_epoch = 0;
  for (const EpochRecord& e : r.history) {
    CHECK(e.lr == lr);
    if (e.val_loss < best) {
      best = e.val_loss;
      best_epoch = e.epoch;
      plateau = since = 0;
    } else {
      ++since;
      if (++plateau >= c.plateau_patience) {
        lr *= c.decay;
        plateau = 0;
      }
    }
  }
  for (std::size_t e = 1; e < r.history.size(); ++e) CHECK(r.history[e].lr <= r.history[e - 1].lr);
  CHECK(r.best_epoch == best_epoch);
  CHECK(r.best_val_loss == best);
  CHECK(r.stopped_early == (since >= c.early_stop));
  if (r.stopped_early) CHECK(static_cast<int>(r.history.size()) < c.max_epochs + 1);

  const std::string csv = history_csv(r.history);
  CHECK(csv.rfind("epoch,train_loss,val_loss,lr\n", 0) == 0);
  CHECK(static_cast<std::size_t>(std::count(csv.begin(), csv.end(), '\n')) == r.history.size() + 1);
}

TEST_CASE("non-finite loss raises a training error naming the batch") {
  auto data = small_data(2, 6);
  const Split sp = split_trajectories(2, 0.9, 3);
  REQUIRE(sp.train.size() == 1);
  data[static_cast<std::size_t>(sp.train[0])].frames[4][0] = {1e300, 0, 0};
  const Model m = make_model(small_config(), 5);
  TrainConfig c = quick_config();
  c.noise = 0.0;
  try {
    train(m, data, c);
    FAIL("expected a training error");
  } catch (const TrainingError& e) {
    CHECK(std::string(e.what()).find("batch") != std::string::npos);
    CHECK(e.index() < 3);
  }
  CHECK_THROWS_AS(train(m, {}, c), ContractViolation);
}

TEST_CASE("evaluating the truth against itself") {
  const auto data = small_data(3, 10);
  EvalConfig ec;
  ec.horizons = {2, 5, 10};
  ec.contact_pairs = {{0, 1}};
  const EvalResult r = score_predictions(data, data, ec, 0.08);
  REQUIRE(r.rows.size() == 3);
  for (const auto& row : r.rows) {
    CHECK(row.mse_mean == 0.0);
    CHECK(row.mse_std == 0.0);
    CHECK(row.contact_accuracy == 1.0);
  }
  const std::string csv = metrics_csv(r, nullptr);
  CHECK(csv.rfind("horizon,mse_mean,mse_std,contact_accuracy,rotated_mse_mean,rotated_mse_std,"
                  "rotated_contact_accuracy,gap,trajectories,diverged\n",
                  0) == 0);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 4);
  const std::string per = per_trajectory_csv(ec, r, nullptr);
  CHECK(std::count(per.begin(), per.end(), '\n') == 1 + 3 * 3);

  ec.horizons = {11};
  CHECK_THROWS_AS(score_predictions(data, data, ec, 0.08), ContractViolation);
}

TEST_CASE("a constant-position model on free fall") {
  SceneConfig c;
  c.objects = 1;
  c.spawn_height = 100.0;
  c.frames = 12;
  auto init = sample_initial_state(c);
  init[0].velocity = {0, 0, 0};
  init[0].angular_velocity = {0, 0, 0};
  const Trajectory truth = simulate(c, init);

  const Model still = make_model(small_config(), 6);  // fresh: x^{t+1} = x^t
  EvalConfig ec;
  ec.horizons = {3, 7, 12};
  ec.contact_pairs = {};
  const EvalResult r = evaluate(still, {truth}, ec);
  for (std::size_t k = 0; k < ec.horizons.size(); ++k) {
    const double t1 = c.frame_dt(), tk = c.frame_dt() * ec.horizons[k];
    const double drop = 0.5 * c.gravity * (tk * tk - t1 * t1);
    CHECK(r.rows[k].mse_mean == doctest::Approx(drop * drop).epsilon(1e-9));
  }
}

TEST_CASE("rotated test sets") {
  const auto data = small_data(3, 6);
  const Gravity g;
  const auto quarter = rotate_trajectories(data, g, std::numbers::pi / 2, 0);
  const SubgroupTransform T = make_subgroup_transform(g, std::numbers::pi / 2, false);
  for (std::size_t k = 0; k < data.size(); ++k) CHECK(quarter[k] == transform_trajectory(data[k], T));
  const auto a = rotate_trajectories(data, g, std::nullopt, 9), b = rotate_trajectories(data, g, std::nullopt, 9);
  CHECK(a == b);
  CHECK(!(a == rotate_trajectories(data, g, std::nullopt, 10)));
}

TEST_CASE("rollout error is invariant under test-set rotation for sgnn but not gns") {
  std::vector<Trajectory> data;
  for (int s = 0; s < 3; ++s) data.push_back(generate_scene(small_scene(static_cast<std::uint64_t>(40 + s), 10)));
  EvalConfig ec;
  ec.horizons = {5, 10};
  ec.contact_pairs = {{0, 1}};
  const auto rotated = rotate_trajectories(data, Gravity{}, std::nullopt, 2);
  Rng rng(12);
  for (Variant v : {Variant::SGNN, Variant::GNS}) {
    const Model m = random_model(rng, small_config(v), 0.3);
    const EvalResult a = evaluate(m, data, ec), b = evaluate(m, rotated, ec);
    double worst = 0.0;
    for (std::size_t k = 0; k < data.size(); ++k)
      for (std::size_t h = 0; h < ec.horizons.size(); ++h)
        worst = std::fmax(worst, std::fabs(a.per_trajectory[k].mse[h] - b.per_trajectory[k].mse[h]));
    if (v == Variant::SGNN)
      CHECK(worst < 1e-7);
    else
      CHECK(worst > 1e-7);
  }
}

TEST_CASE("diverging rollouts are reported, not thrown") {
  const auto data = small_data(2, 6);
  Model m = make_model(small_config(), 7);
  m.stage3.phi.layers.back().bias(0, 0) = std::nan("");
  m.stage1.phi.layers.back().bias(0, 0) = std::nan("");
  EvalConfig ec;
  ec.horizons = {3, 5};
  ec.contact_pairs = {{0, 1}};
  const EvalResult r = evaluate(m, data, ec);
  CHECK(r.diverged == 2);
  CHECK(std::isinf(r.rows[0].mse_mean));
}

TEST_CASE("parallel_for is schedule independent") {
  std::vector<double> a(100), b(100);
  parallel_for(100, 1, [&](std::size_t i) { a[i] = std::sin(static_cast<double>(i)); });
  parallel_for(100, 4, [&](std::size_t i) { b[i] = std::sin(static_cast<double>(i)); });
  CHECK(a == b);
  try {
    parallel_for(10, 3, [](std::size_t i) {
      if (i == 4 || i == 7) throw ContractViolation("item " + std::to_string(i));
    });
    FAIL("expected a throw");
  } catch (const ContractViolation& e) {
    CHECK(std::string(e.what()) == "item 4");
  }
  setenv("SGNN_THREADS", "3", 1);
  CHECK(worker_threads() == 3);
  setenv("SGNN_THREADS", "zero", 1);
  CHECK_THROWS_AS(worker_threads(), ContractViolation);
  unsetenv("SGNN_THREADS");
  CHECK(worker_threads() >= 1);
}
