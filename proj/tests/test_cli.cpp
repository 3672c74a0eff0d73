#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <sstream>
#include <string>

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

const std::string kCli = ECOTRAJ_CLI_PATH;

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& name) {
    path = fs::temp_directory_path() / ("ecotraj_cli_" + name);
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string sub(const std::string& name) const { return (path / name).string(); }
};

int run(const std::string& args) {
  const std::string cmd = kCli + " " + args + " > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WEXITSTATUS(status);
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void put(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  out << content;
}

int count_lines(const std::string& text) {
  int n = 0;
  for (char c : text) n += c == '\n';
  return n;
}

}  // namespace

TEST_CASE("simulate -> fit -> predict -> diagnose pipeline") {
  TempDir dir("pipeline");
  put(dir.sub("sim.conf"),
      "sim.n_plots = 6\n"
      "sim.n_rings = 1\n"
      "sim.n_states = 3\n"
      "sim.min_interval = 6\n"
      "sim.max_interval = 8\n"
      "run.seed = 7\n");
  REQUIRE(run("simulate --config " + dir.sub("sim.conf") + " --out " + dir.sub("data")) == 0);
  CHECK(fs::exists(dir.sub("data") + "/dataset.json"));
  CHECK(fs::exists(dir.sub("data") + "/observations.csv"));
  CHECK(fs::exists(dir.sub("data") + "/truth.json"));
  CHECK(fs::exists(dir.sub("data") + "/manifest.json"));

  put(dir.sub("fit.conf"),
      "run.iterations = 300\n"
      "run.burn_in = 100\n"
      "run.seed = 11\n");
  REQUIRE(run("fit --data " + dir.sub("data") + " --config " + dir.sub("fit.conf") + " --out " +
              dir.sub("fit")) == 0);
  const std::string samples = slurp(dir.sub("fit") + "/samples.csv");
  CHECK(count_lines(samples) == 201);  // header + 200 retained draws
  CHECK(samples.find("alpha[0][1]") != std::string::npos);
  CHECK(samples.find("sigma2_zeta") != std::string::npos);
  CHECK(samples.find("phi") != std::string::npos);
  CHECK(fs::exists(dir.sub("fit") + "/latent.csv"));

  // null-scenario prediction over the observed intervals
  REQUIRE(run("predict --data " + dir.sub("data") + " --fit " + dir.sub("fit") + " --out " +
              dir.sub("pred") + " --seed 3") == 0);
  CHECK(fs::exists(dir.sub("pred") + "/transition.csv"));
  CHECK(fs::exists(dir.sub("pred") + "/transition_long.csv"));
  const json tj = json::parse(slurp(dir.sub("pred") + "/transition.json"));
  CHECK(tj["n_draws"] == 200);
  CHECK(tj["labels"].size() == 3);

  // scenario prediction echoes the preset
  REQUIRE(run("predict --data " + dir.sub("data") + " --fit " + dir.sub("fit") + " --out " +
              dir.sub("pred_hi") + " --scenario high-emission --seed 3") == 0);
  const json hi = json::parse(slurp(dir.sub("pred_hi") + "/transition.json"));
  CHECK(hi["scenario"]["time"] == 120);
  CHECK(hi["scenario"]["temp"] == 8.0);
  CHECK(hi["scenario"]["pcpt"] == 2.0);

  REQUIRE(run("predict --data " + dir.sub("data") + " --fit " + dir.sub("fit") + " --out " +
              dir.sub("pred_lo") + " --scenario low-emission --seed 3") == 0);
  const json lo = json::parse(slurp(dir.sub("pred_lo") + "/transition.json"));
  CHECK(lo["scenario"]["time"] == 120);
  CHECK(lo["scenario"]["temp"] == 4.0);
  CHECK(lo["scenario"]["pcpt"] == 2.0);

  REQUIRE(run("diagnose --fit " + dir.sub("fit") + " --out " + dir.sub("diag")) == 0);
  const std::string diag = slurp(dir.sub("diag") + "/diagnostics.csv");
  CHECK(diag.find("rhat") != std::string::npos);
  CHECK(count_lines(diag) >= 10);
}

TEST_CASE("fit is byte-identical under a repeated seed") {
  TempDir dir("determinism");
  put(dir.sub("sim.conf"), "sim.n_plots = 4\nsim.n_rings = 1\nrun.seed = 5\n");
  REQUIRE(run("simulate --config " + dir.sub("sim.conf") + " --out " + dir.sub("data")) == 0);
  put(dir.sub("fit.conf"), "run.iterations = 200\nrun.burn_in = 50\nrun.seed = 21\n");
  REQUIRE(run("fit --data " + dir.sub("data") + " --config " + dir.sub("fit.conf") + " --out " +
              dir.sub("fit_a")) == 0);
  REQUIRE(run("fit --data " + dir.sub("data") + " --config " + dir.sub("fit.conf") + " --out " +
              dir.sub("fit_b")) == 0);
  CHECK(slurp(dir.sub("fit_a") + "/samples.csv") == slurp(dir.sub("fit_b") + "/samples.csv"));
  CHECK(slurp(dir.sub("fit_a") + "/latent.csv") == slurp(dir.sub("fit_b") + "/latent.csv"));

  // a different seed changes the draws
  REQUIRE(run("fit --data " + dir.sub("data") + " --config " + dir.sub("fit.conf") + " --out " +
              dir.sub("fit_c") + " --seed 22") == 0);
  CHECK(slurp(dir.sub("fit_a") + "/samples.csv") != slurp(dir.sub("fit_c") + "/samples.csv"));

  // simulate twice with one seed gives identical datasets
  REQUIRE(run("simulate --config " + dir.sub("sim.conf") + " --out " + dir.sub("data2")) == 0);
  CHECK(slurp(dir.sub("data") + "/observations.csv") ==
        slurp(dir.sub("data2") + "/observations.csv"));
  CHECK(slurp(dir.sub("data") + "/climate.csv") == slurp(dir.sub("data2") + "/climate.csv"));
}

TEST_CASE("multi-chain fits concatenate chains deterministically") {
  TempDir dir("chains");
  put(dir.sub("sim.conf"), "sim.n_plots = 3\nsim.n_rings = 0\nrun.seed = 9\n");
  REQUIRE(run("simulate --config " + dir.sub("sim.conf") + " --out " + dir.sub("data")) == 0);
  put(dir.sub("fit.conf"), "run.iterations = 120\nrun.burn_in = 20\nrun.seed = 31\n");
  REQUIRE(run("fit --data " + dir.sub("data") + " --config " + dir.sub("fit.conf") + " --out " +
              dir.sub("fit1") + " --chains 2 --threads 1") == 0);
  REQUIRE(run("fit --data " + dir.sub("data") + " --config " + dir.sub("fit.conf") + " --out " +
              dir.sub("fit2") + " --chains 2 --threads 2") == 0);
  CHECK(slurp(dir.sub("fit1") + "/samples.csv") == slurp(dir.sub("fit2") + "/samples.csv"));
  CHECK(count_lines(slurp(dir.sub("fit1") + "/samples.csv")) == 201);  // 2 x 100 + header

  const json manifest = json::parse(slurp(dir.sub("fit1") + "/manifest.json"));
  CHECK(manifest["dimensions"]["n_chains"] == 2);
  CHECK(manifest["dimensions"]["draws_per_chain"] == 100);
}

TEST_CASE("failure exit codes distinguish config, data and usage errors") {
  TempDir dir("errors");
  // unparseable config -> 2
  put(dir.sub("bad.conf"), "run.iterations 500\n");
  CHECK(run("simulate --config " + dir.sub("bad.conf") + " --out " + dir.sub("o1")) == 2);
  // missing dataset -> 3
  CHECK(run("fit --data " + dir.sub("nowhere") + " --out " + dir.sub("o2")) == 3);
  // unknown scenario preset (treated as a config file path that is absent) -> 2
  put(dir.sub("sim.conf"), "sim.n_plots = 2\nsim.n_rings = 0\nrun.seed = 2\n");
  REQUIRE(run("simulate --config " + dir.sub("sim.conf") + " --out " + dir.sub("data")) == 0);
  put(dir.sub("fit.conf"), "run.iterations = 60\nrun.burn_in = 10\n");
  REQUIRE(run("fit --data " + dir.sub("data") + " --config " + dir.sub("fit.conf") + " --out " +
              dir.sub("fit")) == 0);
  CHECK(run("predict --data " + dir.sub("data") + " --fit " + dir.sub("fit") + " --out " +
            dir.sub("o3") + " --scenario not-a-preset") == 2);
  // bad usage (missing required flag) -> 2
  CHECK(run("fit --out " + dir.sub("o4")) == 2);
  // corrupt state label in the data -> 3
  std::string obs = slurp(dir.sub("data") + "/observations.csv");
  obs += "1,1,1900,state_1\n";
  put(dir.sub("data") + "/observations.csv", obs);
  CHECK(run("fit --data " + dir.sub("data") + " --config " + dir.sub("fit.conf") + " --out " +
            dir.sub("o5")) == 3);
}
