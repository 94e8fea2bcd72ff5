#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "sgnn/model.hpp"
#include "sgnn/scenes.hpp"

namespace fs = std::filesystem;
using namespace sgnn;

namespace {

fs::path scratch() {
  static const fs::path dir = [] {
    const fs::path d = fs::temp_directory_path() / ("sgnn_cli_test_" + std::to_string(::getpid()));
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
  }();
  return dir;
}

struct Run {
  int code = -1;
  std::string output;
};

Run cli(const std::string& args) {
  const fs::path out = scratch() / "stdout.txt";
  const std::string cmd = std::string("\"") + SGNN_CLI_PATH + "\" " + args + " > \"" + out.string() + "\" 2>&1";
  const int status = std::system(cmd.c_str());
  std::ifstream in(out);
  std::stringstream s;
  s << in.rdbuf();
  return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, s.str()};
}

std::string first_line(const std::string& s) { return s.substr(0, s.find('\n')); }

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

/// Two short trajectories shared by the train/eval cases.
fs::path small_dataset() {
  static const fs::path dir = [] {
    const fs::path d = scratch() / "small";
    std::ofstream(scratch() / "small.cfg") << "frames=12\nobjects=2\n";
    const Run r = cli("generate --config \"" + (scratch() / "small.cfg").string() + "\" --count 2 --seed 4 --out \"" +
                      d.string() + "\"");
    REQUIRE(r.code == 0);
    return d;
  }();
  return dir;
}

}  // namespace

TEST_CASE("help and usage errors") {
  const Run help = cli("--help");
  CHECK(help.code == 0);
  CHECK(help.output.find("generate") != std::string::npos);
  CHECK(cli("train --help").code == 0);

  const fs::path out = scratch() / "never";
  const Run bad = cli("train --data x --out \"" + out.string() + "\" --no-such-flag");
  CHECK(bad.code == 2);
  CHECK_FALSE(fs::exists(out));
  CHECK(cli("").code == 2);
  CHECK(cli("train --model dpi --data x --out y").code == 2);
  CHECK(cli("verify --trials 0").code == 2);
  CHECK(cli("eval --data \"" + small_dataset().string() + "\" --out \"" + out.string() + "\"").code == 2);
  CHECK(cli("train --data \"" + (scratch() / "missing").string() + "\" --out \"" + out.string() + "\"").code == 2);
  CHECK_FALSE(fs::exists(out));
}

TEST_CASE("generate writes trajectories and a manifest") {
  const fs::path d = scratch() / "one";
  const Run r = cli("generate --count 1 --seed 3 --out \"" + d.string() + "\"");
  REQUIRE(r.code == 0);
  CHECK(first_line(r.output).rfind("config: command=generate", 0) == 0);
  CHECK(first_line(r.output).find("seed=3") != std::string::npos);
  const std::string manifest = slurp(d / "manifest.json");
  CHECK(manifest.find("\"traj_00000.sgtj\"") != std::string::npos);
  CHECK(manifest.find("fnv1a64:") != std::string::npos);
  CHECK_FALSE(fs::exists(d / "traj_00001.sgtj"));

  SceneConfig c;
  c.seed = 3;
  CHECK(load_trajectory(d / "traj_00000.sgtj") == generate_scene(c));

  const fs::path again = scratch() / "one_again";
  REQUIRE(cli("generate --count 1 --seed 3 --out \"" + again.string() + "\"").code == 0);
  CHECK(slurp(d / "traj_00000.sgtj") == slurp(again / "traj_00000.sgtj"));
  CHECK(slurp(d / "manifest.json") == slurp(again / "manifest.json"));
}

TEST_CASE("bad scene config is a usage error") {
  std::ofstream(scratch() / "bad.cfg") << "objects=3\nwarp=9\n";
  const Run r = cli("generate --config \"" + (scratch() / "bad.cfg").string() + "\" --out \"" +
                    (scratch() / "bad").string() + "\"");
  CHECK(r.code == 1);
  CHECK(r.output.find("warp") != std::string::npos);
}

TEST_CASE("ground-truth playback scores zero") {
  const fs::path out = scratch() / "playback";
  const Run r = cli("eval --playback --data \"" + small_dataset().string() + "\" --out \"" + out.string() +
                    "\" --horizons 5,10 --rotate-test random");
  REQUIRE(r.code == 0);
  const std::string csv = slurp(out / "metrics.csv");
  CHECK(csv.find("horizon,mse_mean,mse_std,contact_accuracy,rotated_mse_mean") == 0);
  CHECK(csv.find("\n5,0,0,1,0,0,1,0,2,0\n") != std::string::npos);
  CHECK(csv.find("\n10,0,0,1,0,0,1,0,2,0\n") != std::string::npos);
}

TEST_CASE("train, evaluate and compare rotated columns") {
  const fs::path data = small_dataset();
  const std::string budget = " --hidden 8 --iterations 2 --epochs 2 --samples-per-epoch 10 --validation-samples 4";
  for (const char* variant : {"sgnn", "gns"}) {
    CAPTURE(variant);
    const fs::path out = scratch() / variant;
    const Run t = cli(std::string("train --model ") + variant + " --data \"" + data.string() + "\" --out \"" +
                      out.string() + "\"" + budget);
    REQUIRE(t.code == 0);
    CHECK(first_line(t.output).find(std::string("variant=") + variant) != std::string::npos);
    CHECK(slurp(out / "history.csv").rfind("epoch,train_loss,val_loss,lr\n", 0) == 0);
    const Model m = load_model(out / "model.ckpt");
    CHECK(m.config.hidden == 8);
    CHECK(m.config.length_scale > 0.0);

    const Run e = cli("eval --checkpoint \"" + (out / "model.ckpt").string() + "\" --data \"" + data.string() +
                      "\" --out \"" + out.string() + "\" --horizons 4,10 --rotate-test random --seed 3");
    REQUIRE(e.code == 0);
    std::ifstream in(out / "per_trajectory.csv");
    std::string line;
    std::getline(in, line);
    CHECK(line == "trajectory,horizon,mse,rotated_mse,gap");
    double worst_gap = 0.0;
    while (std::getline(in, line)) {
      const double gap = std::strtod(line.substr(line.rfind(',') + 1).c_str(), nullptr);
      worst_gap = std::fmax(worst_gap, std::fabs(gap));
    }
    if (std::string(variant) == "sgnn")
      CHECK(worst_gap < 1e-7);
    else
      CHECK(worst_gap > 0.0);
  }
}

TEST_CASE("ablation flags train") {
  for (const char* flag : {"--no-hierarchy", "--no-object-aware", "--no-edge-separation", "--full-equivariance"}) {
    CAPTURE(flag);
    const fs::path out = scratch() / (std::string("abl") + flag);
    const Run r = cli(std::string("train --model sgnn ") + flag + " --data \"" + small_dataset().string() +
                      "\" --out \"" + out.string() + "\" --hidden 8 --iterations 1 --epochs 1 --samples-per-epoch 4");
    REQUIRE(r.code == 0);
    CHECK(fs::exists(out / "model.ckpt"));
  }
  // Ablations only apply to the hierarchical model.
  CHECK(cli("train --model gns --no-hierarchy --data \"" + small_dataset().string() + "\" --out \"" +
            (scratch() / "abl_gns").string() + "\"")
            .code == 2);
}

TEST_CASE("checkpoint problems are runtime errors") {
  std::ofstream(scratch() / "junk.ckpt") << "not a checkpoint";
  const Run r = cli("eval --checkpoint \"" + (scratch() / "junk.ckpt").string() + "\" --data \"" +
                    small_dataset().string() + "\" --out \"" + (scratch() / "junk").string() + "\"");
  CHECK(r.code == 1);
}

TEST_CASE("verify reports and exits by outcome") {
  const fs::path out = scratch() / "verify";
  const Run r = cli("verify --suite lemma5 --trials 50 --seed 2 --out \"" + out.string() + "\"");
  CHECK(r.code == 0);
  CHECK(first_line(r.output) == "config: command=verify suite=lemma5 trials=50 seed=2 out=" + out.string());
  CHECK(r.output.find("PASS lemma5/") != std::string::npos);
  CHECK(slurp(out / "verify.txt").find("PASS lemma5/") == 0);
}

TEST_CASE("SGNN_THREADS is validated") {
  const std::string data = small_dataset().string();
  const Run r = cli("generate --count 2 --out \"" + (scratch() / "threads").string() + "\"");
  REQUIRE(r.code == 0);
  ::setenv("SGNN_THREADS", "0", 1);
  CHECK(cli("generate --count 2 --out \"" + (scratch() / "threads0").string() + "\"").code == 2);
  ::setenv("SGNN_THREADS", "2", 1);
  CHECK(cli("generate --count 2 --out \"" + (scratch() / "threads2").string() + "\"").code == 0);
  ::unsetenv("SGNN_THREADS");
  CHECK(slurp(scratch() / "threads" / "traj_00001.sgtj") == slurp(scratch() / "threads2" / "traj_00001.sgtj"));
}
