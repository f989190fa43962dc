#include <doctest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>

namespace fs = std::filesystem;

namespace {

int run(const std::string& args) {
  const std::string cmd = std::string(ALAB_CLI_PATH) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("alab_cli_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string write_config(const fs::path& dir, const std::string& text) {
  const fs::path p = dir / "run.cfg";
  std::ofstream(p) << text;
  return p.string();
}

const char* kSmall = "seeds = 1\nepisodes = 2\nsamples = 40\nepochs = 1\nthreads = 1\n";

}  // namespace

TEST_CASE("usage errors exit with 2") {
  CHECK(run("") == 2);
  CHECK(run("fly-to-moon --out /tmp/x") == 2);
  CHECK(run("single-task") == 2);
  CHECK(run("single-task --out /tmp/x --config /does/not/exist") == 2);
  CHECK(run("--help") == 0);
}

TEST_CASE("config errors exit with 2") {
  const fs::path dir = scratch("config");
  CHECK(run("single-task --out " + (dir / "o").string() + " --config " +
            write_config(dir, "unknown_key = 1\n")) == 2);
  CHECK(run("dump-abstraction --out " + (dir / "o").string() + " --config " +
            write_config(dir, "env_kind = cartpole\n")) == 2);
  CHECK(run("single-task --out " + (dir / "o").string() + " --config " +
            write_config(dir, "this line is broken\n")) == 2);
  fs::remove_all(dir);
}

TEST_CASE("stage failures exit with 3") {
  const fs::path dir = scratch("stage");
  const fs::path model = dir / "model.txt";
  std::ofstream(model) << "garbage\n";
  CHECK(run("analysis --out " + (dir / "o").string() + " --model " + model.string() +
            " --config " + write_config(dir, kSmall)) == 3);
  fs::remove_all(dir);
}

TEST_CASE("a small single-task run succeeds and writes a manifest") {
  const fs::path dir = scratch("ok");
  const fs::path out = dir / "o";
  CHECK(run("single-task --seed 7 --out " + out.string() + " --config " +
            write_config(dir, kSmall)) == 0);
  CHECK(fs::exists(out / "manifest.txt"));
  CHECK(fs::exists(out / "report.txt"));
  std::ifstream in(out / "manifest.txt");
  std::string line;
  bool seeded = false;
  while (std::getline(in, line)) seeded = seeded || line == "base_seed = 7";
  CHECK(seeded);
  fs::remove_all(dir);
}
