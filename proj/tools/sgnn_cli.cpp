// sgnn: generate | train | eval | verify.
//
// Exit codes: 0 success, 1 runtime or verification failure, 2 usage error.
// The first line printed by every command is its full effective configuration.

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "sgnn/errors.hpp"
#include "sgnn/training.hpp"
#include "sgnn/verify.hpp"

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;
using namespace sgnn;

namespace {

constexpr int kUsage = 2;
constexpr int kFailure = 1;

/// Raised for bad paths or flag combinations that CLI11 cannot see.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::uint64_t fnv1a(const void* data, std::size_t n, std::uint64_t h = 0xcbf29ce484222325ULL) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  out << text;
  if (!out) throw IoError("cannot write " + path.string());
}

/// Creates `dir` if needed and checks that a file can be written there.
void prepare_out_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw IoError("cannot create output directory " + dir.string());
  const fs::path probe = dir / ".sgnn_write_test";
  {
    std::ofstream out(probe);
    if (!out) throw IoError("output directory is not writable: " + dir.string());
  }
  fs::remove(probe, ec);
}

void require_file(const fs::path& p, const char* what) {
  if (!fs::is_regular_file(p)) throw UsageError(std::string(what) + " not found: " + p.string());
}

void require_dir(const fs::path& p, const char* what) {
  if (!fs::is_directory(p)) throw UsageError(std::string(what) + " not found: " + p.string());
}

// ---------------------------------------------------------------------------
// generate

struct GenerateArgs {
  std::string config;
  int count = 1;
  std::optional<std::uint64_t> seed;
  std::string out;
};

int cmd_generate(const GenerateArgs& a) {
  SceneConfig cfg;
  if (!a.config.empty()) {
    require_file(a.config, "scene config");
    cfg = load_scene_config(a.config);
  }
  if (a.seed) cfg.seed = *a.seed;
  cfg.validate();
  if (a.count < 1) throw ContractViolation("--count must be at least 1");
  const std::string text = cfg.to_text();
  std::string echo = text.substr(0, text.find_last_not_of('\n') + 1);
  for (char& c : echo)
    if (c == '\n') c = ' ';
  std::cout << "config: command=generate count=" << a.count << " out=" << a.out << " " << echo << std::endl;

  prepare_out_dir(a.out);
  std::vector<std::vector<unsigned char>> files(static_cast<std::size_t>(a.count));
  parallel_for(files.size(), worker_threads(), [&](std::size_t k) {
    SceneConfig c = cfg;
    c.seed = cfg.seed + k;
    files[k] = encode_trajectory(generate_scene(c));
  });

  json manifest;
  manifest["format"] = "sgtj";
  manifest["config_hash"] = "fnv1a64:" + hex64(fnv1a(text.data(), text.size()));
  manifest["config"] = text;
  manifest["seed"] = cfg.seed;
  manifest["count"] = a.count;
  manifest["files"] = json::array();
  for (std::size_t k = 0; k < files.size(); ++k) {
    char name[32];
    std::snprintf(name, sizeof name, "traj_%05zu.sgtj", k);
    write_file(fs::path(a.out) / name, files[k]);
    manifest["files"].push_back({{"file", name},
                                 {"seed", cfg.seed + k},
                                 {"bytes", files[k].size()},
                                 {"fnv1a64", hex64(fnv1a(files[k].data(), files[k].size()))}});
  }
  write_text(fs::path(a.out) / "scene.cfg", text);
  write_text(fs::path(a.out) / "manifest.json", manifest.dump(2) + "\n");
  std::cout << "wrote " << a.count << " trajectories to " << a.out << std::endl;
  return 0;
}

/// Trajectories listed in DIR/manifest.json, in manifest order.
std::vector<Trajectory> load_dataset(const fs::path& dir) {
  const fs::path mpath = dir / "manifest.json";
  require_file(mpath, "dataset manifest");
  std::ifstream in(mpath);
  json manifest;
  try {
    manifest = json::parse(in);
  } catch (const json::exception& e) {
    throw FormatError("bad manifest " + mpath.string() + ": " + e.what());
  }
  std::vector<Trajectory> out;
  for (const auto& f : manifest.at("files")) out.push_back(load_trajectory(dir / f.at("file").get<std::string>()));
  if (out.empty()) throw FormatError("manifest lists no trajectories: " + mpath.string());
  return out;
}

// ---------------------------------------------------------------------------
// train

struct TrainArgs {
  std::string model = "sgnn";
  std::string data;
  std::string out;
  ModelConfig mc;
  TrainConfig tc;
  std::string noise_mode = "relative";
  std::string activation = "silu";
  /// 0 picks the RMS velocity std of the training split.
  double length_scale = 0.0;
  std::uint64_t init_seed = 0;
};

int cmd_train(TrainArgs a) {
  a.mc.variant = parse_variant(a.model);
  a.mc.activation = parse_activation(a.activation);
  if (a.noise_mode == "relative")
    a.tc.noise_mode = NoiseMode::Relative;
  else if (a.noise_mode == "absolute")
    a.tc.noise_mode = NoiseMode::Absolute;
  else
    throw ContractViolation("--noise-mode must be relative or absolute");
  if (a.length_scale < 0.0) throw ContractViolation("--length-scale must be positive (0 = automatic)");
  require_dir(a.data, "data directory");
  a.tc.validate();
  a.mc.validate();

  const std::vector<Trajectory> data = load_dataset(a.data);
  const Split split = split_trajectories(static_cast<int>(data.size()), a.tc.train_fraction, a.tc.seed);
  a.mc.length_scale = a.length_scale > 0.0 ? a.length_scale : suggest_length_scale(data, split.train);
  a.mc.attr_dim = static_cast<int>(data.front().attrs.cols()) + 1;
  a.mc.validate();

  std::cout << "config: command=train data=" << a.data << " out=" << a.out << " init_seed=" << a.init_seed << " "
            << a.mc.describe() << " " << a.tc.describe() << std::endl;
  prepare_out_dir(a.out);

  const Model initial = make_model(a.mc, a.init_seed);
  std::cout << "parameters=" << initial.parameter_count() << " trajectories=" << data.size()
            << " train=" << split.train.size() << " validation=" << split.validation.size() << std::endl;
  const auto t0 = std::chrono::steady_clock::now();
  const TrainResult r = train(initial, data, a.tc, [&](const EpochRecord& e) {
    const double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::printf("epoch %d train_loss %.6e val_loss %.6e lr %.3e elapsed %.1fs\n", e.epoch, e.train_loss, e.val_loss,
                e.lr, s);
    std::fflush(stdout);
  });
  save_model(r.best, fs::path(a.out) / "model.ckpt");
  write_text(fs::path(a.out) / "history.csv", history_csv(r.history));
  std::printf("initial_val_loss %.6e best_val_loss %.6e best_epoch %d stopped_early %d\n", r.initial_val_loss,
              r.best_val_loss, r.best_epoch, r.stopped_early ? 1 : 0);
  return 0;
}

// ---------------------------------------------------------------------------
// eval

struct EvalArgs {
  std::string checkpoint;
  bool playback = false;
  std::string data;
  std::string out;
  std::vector<int> horizons{10, 20, 30, 40};
  std::string rotate;  // "", "random" or an angle in radians
  bool rigid = false;
  bool ransac = false;
  double contact_threshold = 0.0;
  std::uint64_t seed = 0;
};

std::optional<double> parse_angle(const std::string& s) {
  if (s == "random") return std::nullopt;
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(s, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used != s.size() || !std::isfinite(v)) throw ContractViolation("--rotate-test must be 'random' or an angle in radians");
  return v;
}

int cmd_eval(const EvalArgs& a) {
  if (a.playback == !a.checkpoint.empty()) throw UsageError("exactly one of --checkpoint and --playback is required");
  if (!a.checkpoint.empty()) require_file(a.checkpoint, "checkpoint");
  require_dir(a.data, "data directory");
  std::optional<double> theta;
  if (!a.rotate.empty()) theta = parse_angle(a.rotate);

  EvalConfig cfg;
  cfg.horizons = a.horizons;
  cfg.rigid = a.rigid;
  cfg.ransac = a.ransac;
  cfg.contact_threshold = a.contact_threshold;
  cfg.seed = a.seed;
  std::optional<Model> model;
  if (!a.checkpoint.empty()) model = load_model(a.checkpoint);
  const Gravity g = model ? model->config.gravity : Gravity{};
  const double threshold =
      cfg.contact_threshold > 0.0 ? cfg.contact_threshold : (model ? model->config.radius : ModelConfig{}.radius);

  std::ostringstream hs;
  for (std::size_t i = 0; i < cfg.horizons.size(); ++i) hs << (i ? "," : "") << cfg.horizons[i];
  std::cout << "config: command=eval source=" << (a.playback ? std::string("playback") : a.checkpoint)
            << " data=" << a.data << " out=" << a.out << " horizons=" << hs.str()
            << " rotate_test=" << (a.rotate.empty() ? "none" : a.rotate) << " rigid=" << a.rigid
            << " ransac=" << a.ransac << " contact_threshold=" << threshold << " seed=" << a.seed;
  if (model) std::cout << " " << model->config.describe();
  std::cout << std::endl;

  const std::vector<Trajectory> truth = load_dataset(a.data);
  // Every pair of objects present in all trajectories.
  int objects = truth.front().objects();
  for (const Trajectory& t : truth) objects = std::min(objects, t.objects());
  cfg.contact_pairs.clear();
  for (int k = 0; k < objects; ++k)
    for (int l = k + 1; l < objects; ++l) cfg.contact_pairs.emplace_back(k, l);
  prepare_out_dir(a.out);
  auto run = [&](const std::vector<Trajectory>& t) {
    if (model) return evaluate(*model, t, cfg);
    // Ground-truth playback: the oracle itself as the predictor.
    return score_predictions(t, t, cfg, threshold);
  };
  const EvalResult plain = run(truth);
  std::optional<EvalResult> rotated;
  if (!a.rotate.empty()) rotated = run(rotate_trajectories(truth, g, theta, a.seed));

  const std::string metrics = metrics_csv(plain, rotated ? &*rotated : nullptr);
  write_text(fs::path(a.out) / "metrics.csv", metrics);
  write_text(fs::path(a.out) / "per_trajectory.csv", per_trajectory_csv(cfg, plain, rotated ? &*rotated : nullptr));
  std::cout << metrics;
  return 0;
}

// ---------------------------------------------------------------------------
// verify

struct VerifyArgs {
  std::string suite = "all";
  int trials = 100;
  std::uint64_t seed = 0;
  std::string out;
};

int cmd_verify(const VerifyArgs& a) {
  if (a.trials < 1) throw ContractViolation("--trials must be at least 1");
  std::cout << "config: command=verify suite=" << a.suite << " trials=" << a.trials << " seed=" << a.seed
            << " out=" << (a.out.empty() ? "-" : a.out) << std::endl;
  if (!a.out.empty()) prepare_out_dir(a.out);
  const auto results = run_verify_suite(a.suite, a.trials, a.seed);
  std::string report;
  int failed = 0;
  for (const auto& r : results) {
    report += format_result(r) + "\n";
    if (!r.pass) ++failed;
  }
  std::cout << report;
  std::cout << (failed ? "FAILED " : "OK ") << results.size() - static_cast<std::size_t>(failed) << "/"
            << results.size() << " properties" << std::endl;
  if (!a.out.empty()) write_text(fs::path(a.out) / "verify.txt", report);
  return failed ? kFailure : 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Subequivariant graph network simulator: data generation, training, evaluation, verification"};
  app.require_subcommand(1);

  GenerateArgs gen;
  auto* g = app.add_subcommand("generate", "Simulate falling-cube trajectories");
  g->add_option("--config", gen.config, "Scene config file (key=value lines); defaults otherwise");
  g->add_option("--count", gen.count, "Number of trajectories")->capture_default_str();
  g->add_option("--seed", gen.seed, "Seed of the first trajectory (overrides the config)");
  g->add_option("--out", gen.out, "Output directory")->required();

  TrainArgs tr;
  auto* t = app.add_subcommand("train", "Train a model on a generated dataset");
  t->add_option("--model", tr.model, "sgnn | gns | egnn | egnn_s | gmn | gmn_s")
      ->check(CLI::IsMember({"sgnn", "gns", "egnn", "egnn_s", "gmn", "gmn_s"}))
      ->capture_default_str();
  t->add_option("--data", tr.data, "Dataset directory (from generate)")->required();
  t->add_option("--out", tr.out, "Output directory")->required();
  t->add_option("--hidden", tr.mc.hidden, "MLP width")->capture_default_str();
  t->add_option("--iterations", tr.mc.iterations, "Message-passing rounds per block (0 = variant default)")
      ->capture_default_str();
  t->add_option("--message-scalars", tr.mc.message_scalars, "Invariant message width")->capture_default_str();
  t->add_option("--activation", tr.activation, "silu | relu | linear")->capture_default_str();
  t->add_option("--radius", tr.mc.radius, "Interaction cutoff radius")->capture_default_str();
  t->add_option("--height-scale", tr.mc.height_scale, "Height attribute scale")->capture_default_str();
  t->add_option("--length-scale", tr.length_scale, "Model length unit (0 = velocity std of the training split)")
      ->capture_default_str();
  t->add_flag("--stage3-from-stage1", tr.mc.stage3_from_stage1, "Feed stage-1 outputs to the inner stage");
  t->add_flag("--no-hierarchy", tr.mc.ablation.no_hierarchy, "Ablation: one flat block");
  t->add_flag("--no-object-aware", tr.mc.ablation.no_object_aware, "Ablation: drop object features");
  t->add_flag("--no-edge-separation", tr.mc.ablation.no_edge_separation, "Ablation: shared edge set");
  t->add_flag("--full-equivariance", tr.mc.ablation.full_equivariance, "Ablation: no gravity channel");
  t->add_option("--lr", tr.tc.adam.lr, "Adam learning rate")->capture_default_str();
  t->add_option("--epochs", tr.tc.max_epochs, "Maximum epochs")->capture_default_str();
  t->add_option("--batch-size", tr.tc.batch_size, "Samples per Adam step")->capture_default_str();
  t->add_option("--samples-per-epoch", tr.tc.samples_per_epoch, "Training samples per epoch (0 = all)")
      ->capture_default_str();
  t->add_option("--validation-samples", tr.tc.validation_samples, "Validation samples (0 = all)")
      ->capture_default_str();
  t->add_option("--noise", tr.tc.noise, "Input noise scale")->capture_default_str();
  t->add_option("--noise-mode", tr.noise_mode, "relative | absolute")->capture_default_str();
  t->add_option("--patience", tr.tc.plateau_patience, "Epochs without improvement before decay")
      ->capture_default_str();
  t->add_option("--decay", tr.tc.decay, "Learning-rate decay factor")->capture_default_str();
  t->add_option("--early-stop", tr.tc.early_stop, "Epochs without improvement before stopping")
      ->capture_default_str();
  t->add_option("--train-fraction", tr.tc.train_fraction, "Fraction of trajectories used for training")
      ->capture_default_str();
  t->add_option("--seed", tr.tc.seed, "Split, shuffling and noise seed")->capture_default_str();
  t->add_option("--init-seed", tr.init_seed, "Parameter initialization seed")->capture_default_str();

  EvalArgs ev;
  auto* e = app.add_subcommand("eval", "Roll out a checkpoint and report rollout MSE and contact accuracy");
  e->add_option("--checkpoint", ev.checkpoint, "Model checkpoint (from train)");
  e->add_flag("--playback", ev.playback, "Score the ground truth against itself (sanity check)");
  e->add_option("--data", ev.data, "Test dataset directory")->required();
  e->add_option("--out", ev.out, "Output directory")->required();
  e->add_option("--horizons", ev.horizons, "Frames at which errors are reported")->delimiter(',')->capture_default_str();
  e->add_option("--rotate-test", ev.rotate, "Also evaluate on rotated inputs: 'random' or an angle about g (radians)");
  e->add_flag("--rigid", ev.rigid, "Project rigid objects onto their shape after every step");
  e->add_flag("--ransac", ev.ransac, "Use RANSAC in the rigid projection");
  e->add_option("--contact-threshold", ev.contact_threshold, "Contact distance (0 = model radius)")
      ->capture_default_str();
  e->add_option("--seed", ev.seed, "Seed for random rotations and RANSAC")->capture_default_str();

  VerifyArgs vf;
  auto* v = app.add_subcommand("verify", "Run the property suites; exit 1 if any property fails");
  std::vector<std::string> suites = verify_suite_names();
  suites.push_back("all");
  v->add_option("--suite", vf.suite, "equivariance | gradients | lemma5 | reduction | expressivity | all")
      ->check(CLI::IsMember(suites))
      ->capture_default_str();
  v->add_option("--trials", vf.trials, "Random trials per property")->check(CLI::PositiveNumber)->capture_default_str();
  v->add_option("--seed", vf.seed, "Seed of the first trial")->capture_default_str();
  v->add_option("--out", vf.out, "Optional directory for verify.txt");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& err) {
    return app.exit(err);
  } catch (const CLI::CallForAllHelp& err) {
    return app.exit(err);
  } catch (const CLI::ParseError& err) {
    app.exit(err);
    return kUsage;
  }

  try {
    worker_threads();  // rejects a malformed SGNN_THREADS before any work
    if (*g) return cmd_generate(gen);
    if (*t) return cmd_train(tr);
    if (*e) return cmd_eval(ev);
    if (*v) return cmd_verify(vf);
  } catch (const UsageError& err) {
    std::cerr << "usage error: " << err.what() << "\n";
    return kUsage;
  } catch (const ContractViolation& err) {
    std::cerr << "usage error: " << err.what() << "\n";
    return kUsage;
  } catch (const std::exception& err) {
    std::cerr << "error: " << err.what() << "\n";
    return kFailure;
  }
  return kUsage;
}
