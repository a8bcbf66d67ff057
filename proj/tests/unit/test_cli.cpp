#include <sys/wait.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include "doctest.h"
#include "raft/model.hpp"

namespace fs = std::filesystem;

namespace {

struct RunResult {
  int code = -1;
  std::string output;
};

RunResult run(const std::string& args) {
  const std::string cmd = std::string(RAFT_CLI_PATH) + " " + args + " 2>&1";
  RunResult r;
  FILE* pipe = popen(cmd.c_str(), "r");
  REQUIRE(pipe != nullptr);
  char buf[4096];
  while (std::fgets(buf, sizeof buf, pipe)) r.output += buf;
  const int status = pclose(pipe);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

std::string slurp(const fs::path& path) {
  std::ifstream in(path);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// A two-channel toy CSV and the flags that shrink every run to seconds.
struct Workspace {
  fs::path dir;
  std::string csv;
  std::string base;

  Workspace() {
    dir = fs::temp_directory_path() / "raft_cli_test";
    fs::remove_all(dir);
    fs::create_directories(dir);
    csv = (dir / "toy.csv").string();
    std::ofstream out(csv);
    out << "date,a,b\n";
    std::mt19937_64 rng(1);
    std::normal_distribution<double> n(0.0, 0.2);
    double ar = 0.0;
    for (int t = 0; t < 400; ++t) {
      ar = 0.7 * ar + n(rng);
      out << t << "," << std::sin(0.4 * t) + ar << "," << 5.0 + std::cos(0.25 * t) - ar << "\n";
    }
    base = "--dataset " + csv +
           " --lookback 16 --horizon 8 --seed 0 --m 3"
           " --set data.train_end=240 --set data.val_end=320"
           " --set model.periods=1,2 --set train.max_epochs=2";
  }
  std::string out(const std::string& name) const { return (dir / name).string(); }
};

}  // namespace

TEST_CASE("cli train, reload and evaluate") {
  const Workspace ws;
  const RunResult t = run("train " + ws.base + " --out " + ws.out("train"));
  INFO(t.output);
  REQUIRE(t.code == 0);
  for (const char* f : {"checkpoint.bin", "history.csv", "fingerprint.txt", "manifest.json", "metrics.csv"})
    CHECK(fs::exists(fs::path(ws.out("train")) / f));

  std::string echo;
  const raft::ForecastModel m = raft::load_checkpoint(ws.out("train") + "/checkpoint.bin", &echo);
  CHECK(m.lookback == 16);
  CHECK(m.horizon == 8);
  CHECK(m.periods == std::vector<int>{1, 2});
  CHECK(echo + "\n" == slurp(fs::path(ws.out("train")) / "fingerprint.txt"));

  const std::string manifest = slurp(fs::path(ws.out("train")) / "manifest.json");
  CHECK(manifest.find("\"seeds\"") != std::string::npos);
  CHECK(manifest.find("\"version\"") != std::string::npos);

  SUBCASE("evaluate scores the checkpoint deterministically") {
    const std::string ck = " --checkpoint " + ws.out("train") + "/checkpoint.bin";
    const RunResult a = run("evaluate " + ws.base + ck + " --out " + ws.out("eval_a"));
    const RunResult b = run("evaluate " + ws.base + ck + " --out " + ws.out("eval_b"));
    INFO(a.output);
    REQUIRE(a.code == 0);
    REQUIRE(b.code == 0);
    const std::string ca = slurp(fs::path(ws.out("eval_a")) / "metrics.csv");
    CHECK(!ca.empty());
    CHECK(ca == slurp(fs::path(ws.out("eval_b")) / "metrics.csv"));
  }
  SUBCASE("a checkpoint trained with other settings is refused") {
    std::string args = ws.base;
    args.replace(args.find("--m 3"), 5, "--m 5");
    const RunResult r = run("evaluate " + args + " --checkpoint " + ws.out("train") +
                            "/checkpoint.bin --out " + ws.out("eval_bad"));
    INFO(r.output);
    CHECK(r.code != 0);
    CHECK(r.output.find("does not match") != std::string::npos);
    CHECK(r.output.find("m (checkpoint 3, config 5)") != std::string::npos);
  }
  SUBCASE("multi-horizon evaluation emits one row per horizon") {
    std::string args = ws.base;
    args.replace(args.find("--horizon 8"), 11, "--horizons 4,8");
    const RunResult r = run("evaluate " + args + " --out " + ws.out("eval_multi"));
    INFO(r.output);
    REQUIRE(r.code == 0);
    const std::string csv = slurp(fs::path(ws.out("eval_multi")) / "metrics.csv");
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 3);
  }
}

TEST_CASE("cli errors name the offending field") {
  const Workspace ws;
  RunResult r = run("train " + ws.base + " --set model.lookbak=5 --out " + ws.out("bad1"));
  CHECK(r.code != 0);
  CHECK(r.output.find("model.lookbak") != std::string::npos);

  r = run("train " + ws.base + " --tau -1 --out " + ws.out("bad2"));
  CHECK(r.code != 0);
  CHECK(r.output.find("retrieval.tau") != std::string::npos);

  r = run("train " + ws.base + " --variant sideways --out " + ws.out("bad3"));
  CHECK(r.code != 0);
  CHECK(r.output.find("sideways") != std::string::npos);

  r = run("train --dataset " + ws.out("missing.csv") + " --out " + ws.out("bad4"));
  CHECK(r.code != 0);
  CHECK(r.output.find("data.path") != std::string::npos);
}

TEST_CASE("cli config file with flag precedence") {
  const Workspace ws;
  const auto ini = ws.out("run.ini");
  std::ofstream(ini) << "[data]\npath = " << ws.csv
                     << "\ntrain_end = 240\nval_end = 320\n[model]\nlookback = 12\nhorizons = 8\nperiods = 1\n"
                        "[retrieval]\nm = 2\n[train]\nmax_epochs = 1\nseeds = 0\n";
  const RunResult r = run("train --config " + ini + " --lookback 16 --out " + ws.out("ini"));
  INFO(r.output);
  REQUIRE(r.code == 0);
  const raft::ForecastModel m = raft::load_checkpoint(ws.out("ini") + "/checkpoint.bin");
  CHECK(m.lookback == 16);
  CHECK(m.periods == std::vector<int>{1});
}

TEST_CASE("cli no-retrieval flag trains the plain linear model") {
  const Workspace ws;
  const RunResult r = run("train " + ws.base + " --no-retrieval --out " + ws.out("plain"));
  INFO(r.output);
  REQUIRE(r.code == 0);
  const raft::ForecastModel m = raft::load_checkpoint(ws.out("plain") + "/checkpoint.bin");
  CHECK(!m.uses_retrieval());
  CHECK(m.params.g_w.empty());
}

TEST_CASE("cli studies write their outputs") {
  const Workspace ws;
  SUBCASE("synth") {
    const RunResult r = run("synth --kind ar --occurrences 1 --out " + ws.out("synth"));
    INFO(r.output);
    REQUIRE(r.code == 0);
    CHECK(fs::exists(fs::path(ws.out("synth")) / "synthetic_ar_occ1.csv"));
    CHECK(fs::exists(fs::path(ws.out("synth")) / "synthetic_ar_occ1_annotations.csv"));
    const std::string notes = slurp(fs::path(ws.out("synth")) / "synthetic_ar_occ1_annotations.csv");
    CHECK(std::count(notes.begin(), notes.end(), '\n') == 7);
  }
  SUBCASE("ablate") {
    const RunResult r = run("ablate " + ws.base + " --variant no_attention --out " + ws.out("ablate"));
    INFO(r.output);
    REQUIRE(r.code == 0);
    const std::string csv = slurp(fs::path(ws.out("ablate")) / "ablation.csv");
    CHECK(csv.find("no_attention") != std::string::npos);
    CHECK(csv.find(",full,") != std::string::npos);
  }
  SUBCASE("stride") {
    const RunResult r = run("stride " + ws.base + " --strides 1,2,4,8 --out " + ws.out("stride"));
    INFO(r.output);
    REQUIRE(r.code == 0);
    CHECK(fs::exists(fs::path(ws.out("stride")) / "stride_walltime.csv"));
    CHECK(fs::exists(fs::path(ws.out("stride")) / "stride_mse.csv"));
    CHECK(fs::exists(fs::path(ws.out("stride")) / "manifest.json"));
  }
}
