#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

namespace fs = std::filesystem;

namespace {

const fs::path kWork = fs::temp_directory_path() / "lomar_cli_test";

int run(const std::string& args) {
  const std::string cmd = std::string(LOMAR_CLI) + " " + args + " > " + (kWork / "stdout.txt").string() + " 2> " +
                          (kWork / "stderr.txt").string();
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::size_t line_count(const std::string& s) {
  std::size_t n = 0;
  for (char c : s) n += c == '\n';
  return n;
}

struct Workdir {
  Workdir() {
    fs::remove_all(kWork);
    fs::create_directories(kWork);
  }
  ~Workdir() { fs::remove_all(kWork); }
};

const std::string kPreset = std::string(LOMAR_SOURCE_DIR) + "/configs/synthetic.cfg";

}  // namespace

TEST_CASE("gradcheck exits zero with every op passing") {
  Workdir w;
  CHECK(run("gradcheck") == 0);
  const auto out = slurp(kWork / "stdout.txt");
  CHECK(out.find(",0\n") == std::string::npos);
  CHECK(out.find("pipeline,") != std::string::npos);
}

TEST_CASE("pretrain writes config, metrics and checkpoints; downstream commands read them") {
  Workdir w;
  const auto run_dir = kWork / "run";
  REQUIRE(run("pretrain --config " + kPreset + " --set train.checkpoint_every=5 data.corpus_size=64 --steps 10 --out " +
              run_dir.string()) == 0);
  const auto metrics = slurp(run_dir / "metrics.csv");
  CHECK(line_count(metrics) == 10);
  std::istringstream lines(metrics);
  std::string line;
  std::size_t expect = 1;
  while (std::getline(lines, line)) CHECK(line.rfind(std::to_string(expect++) + ",", 0) == 0);
  CHECK(fs::exists(run_dir / "step_5.lmck"));
  CHECK(fs::exists(run_dir / "step_10.lmck"));
  CHECK(fs::exists(run_dir / "final.lmck"));
  CHECK(slurp(run_dir / "config.cfg").find("corpus_size = 64") != std::string::npos);

  const auto ckpt = (run_dir / "final.lmck").string();
  CHECK(run("reconstruct --ckpt " + ckpt + " --out " + (kWork / "rec").string()) == 0);
  CHECK(fs::file_size(kWork / "rec" / "reconstruction.png") > 0);
  CHECK(run("locality --ckpt " + ckpt + " --layer 0") == 0);
  CHECK(slurp(kWork / "stdout.txt").rfind("target,row,col,", 0) == 0);
  CHECK(run("probe --ckpt " + ckpt + " --set probe.samples=40 probe.epochs=20") == 0);
  CHECK(slurp(kWork / "stdout.txt").find("test_accuracy=") != std::string::npos);

  // Re-running from the echoed config reproduces the metric stream.
  REQUIRE(run("pretrain --config " + (run_dir / "config.cfg").string() + " --steps 10 --out " +
              (kWork / "again").string()) == 0);
  CHECK(slurp(kWork / "again" / "metrics.csv") == metrics);
}

TEST_CASE("bench writes one row per grid") {
  Workdir w;
  REQUIRE(run("bench --grids 8 14 --views 1 2 --repetitions 1 --out " + (kWork / "b").string()) == 0);
  CHECK(line_count(slurp(kWork / "b" / "scaling.csv")) == 3);
  CHECK(line_count(slurp(kWork / "b" / "views.csv")) == 3);
}

TEST_CASE("errors map to nonzero exit with one diagnostic line") {
  Workdir w;
  CHECK(run("pretrain --set sampler.mask_ratio=1.5 --out " + (kWork / "x").string()) == 2);
  const auto err = slurp(kWork / "stderr.txt");
  CHECK(err.find("sampler.mask_ratio") != std::string::npos);
  CHECK(line_count(err) == 1);
  CHECK(run("reconstruct --ckpt " + (kWork / "missing.lmck").string() + " --out " + (kWork / "x").string()) == 1);
  CHECK(run("locality --ckpt " + kPreset + " --layer 0") == 1);
  CHECK(run("") != 0);
}
