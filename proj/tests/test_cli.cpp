#include <doctest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>

#include "temp_dir.hpp"

namespace fs = std::filesystem;

namespace {

struct outcome {
  int code;
  std::string err;
};

outcome run(const std::string& args, const fs::path& scratch) {
  const auto err = scratch / "stderr.txt";
  const std::string cmd = std::string(PATHVIT_CLI) + " " + args + " >/dev/null 2>" + err.string();
  const int status = std::system(cmd.c_str());
  std::ifstream in(err);
  return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, {std::istreambuf_iterator<char>(in), {}}};
}

}  // namespace

TEST_CASE("exit codes") {
  test_dir dir("cli");
  const auto d = (dir.path / "d").string();
  CHECK(run("--help", dir.path).code == 0);
  CHECK(run("", dir.path).code == 2);
  CHECK(run("frobnicate", dir.path).code == 2);
  CHECK(run("gen-data --out " + d + " --counts 1,2,3", dir.path).code == 2);
  CHECK(run("gen-data --out " + d + " --counts 1,1,1,1,1,1,1,1,x", dir.path).code == 2);
  CHECK(run("gen-data --out " + d + " --counts 1,1,1,1,1,1,1,1,1 --size 8", dir.path).code == 0);
  CHECK(run("gen-data --out " + d + " --counts 1,1,1,1,1,1,1,1,1 --size 8", dir.path).code == 2);
  CHECK(run("gen-data --out " + d + " --counts 1,1,1,1,1,1,1,1,1 --size 8 --force", dir.path).code == 0);

  auto strat = run("cv --data " + d + " --out " + (dir.path / "runs").string(), dir.path);
  CHECK(strat.code == 3);
  CHECK(strat.err.find("CT") != std::string::npos);

  auto missing = run("eval --checkpoint " + (dir.path / "none.ckpt").string() + " --data " + d + " --out " +
                         (dir.path / "ev").string(),
                     dir.path);
  CHECK(missing.code == 3);
  CHECK_FALSE(fs::exists(dir.path / "ev"));

  std::ofstream(dir.path / "bad.json") << "{";
  CHECK(run("report --manifest " + (dir.path / "bad.json").string(), dir.path).code == 3);
  std::ofstream(dir.path / "cfg.json") << R"({"lr_min": 1.0})";
  CHECK(run("cv --data " + d + " --out " + (dir.path / "runs").string() + " --config " +
                (dir.path / "cfg.json").string(),
            dir.path)
            .code == 2);
}

TEST_CASE("diverging training exits with the numeric code") {
  test_dir dir("cli_numeric");
  const auto d = (dir.path / "data").string();
  REQUIRE(run("gen-data --out " + d + " --counts 5,5,5,5,5,5,5,5,5 --size 8", dir.path).code == 0);
  std::ofstream(dir.path / "cfg.json")
      << R"({"lr_max": 1e30, "lr_min": 1e-6, "epochs": 2, "embed_dim": 8, "depth": 1, "heads": 2, "bottleneck": 8})";
  auto r = run("cv --data " + d + " --out " + (dir.path / "runs").string() + " --config " +
                   (dir.path / "cfg.json").string(),
               dir.path);
  CHECK(r.code == 4);
  CHECK(r.err.find("non-finite") != std::string::npos);
  CHECK(fs::is_empty(dir.path / "runs"));
}
