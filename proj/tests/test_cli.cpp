#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>
#include <sys/wait.h>

namespace fs = std::filesystem;

namespace {

int run(const std::string& args) {
  const std::string cmd = std::string(SCATENT_CLI) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

fs::path scratch() {
  const fs::path p = fs::temp_directory_path() / "scatent_test_cli";
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

}  // namespace

TEST_CASE("exit codes") {
  const auto dir = scratch();
  CHECK(run("--help") == 0);
  CHECK(run("") != 0);
  CHECK(run("no-such-command") == 2);
  CHECK(run("plateau") == 2);  // --seed is mandatory

  const auto good = dir / "good.json";
  std::ofstream(good) << R"({"seed": 1, "grid": {"width": 16, "height": 16}, "acquisition": {"frames": 20000}})";
  const auto bad = dir / "bad.json";
  std::ofstream(bad) << R"({"grid": {"width": 16}})";
  const auto broken = dir / "broken.json";
  std::ofstream(broken) << "{ not json";

  CHECK(run("run " + bad.string()) == 2);
  CHECK(run("run " + broken.string()) == 2);
  CHECK(run("run " + (dir / "absent.json").string()) == 2);
  CHECK(run("run " + good.string() + " --output-dir " + (dir / "out").string()) == 0);
  CHECK(fs::exists(dir / "out" / "manifest.txt"));
  CHECK(run("emit-figures " + (dir / "out").string()) == 0);
  CHECK(run("emit-figures " + (dir / "nowhere").string()) == 3);

  CHECK(run("plateau --seed 2 --trials 3 --frames 1e4 1e6 -o " + (dir / "p.csv").string()) == 0);
  CHECK(fs::exists(dir / "p.csv"));
  CHECK(run("simulate --help") == 0);
  fs::remove_all(dir);
}
