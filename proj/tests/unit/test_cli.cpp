#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <sys/wait.h>

#include "socnn/checkpoint.hpp"
#include "socnn_cli/app.hpp"

namespace fs = std::filesystem;

namespace {

struct Outcome {
  int code;
  std::string out, err;
};

Outcome run(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = socnn::cli::run_app(args, out, err);
  return {code, out.str(), err.str()};
}

fs::path fresh_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("socnn_cli_" + name);
  fs::remove_all(dir);
  return dir;
}

std::string slurp(const fs::path& file) {
  std::ifstream in(file, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

std::vector<std::string> small_run(const fs::path& dir) {
  return {"train", "--out", dir.string(), "--set", "synth.train=100", "--set", "synth.test=20",
          "--set", "optim.epochs=1", "--set", "metrics.wall_time=false"};
}

std::size_t lines(const std::string& text) {
  return static_cast<std::size_t>(std::count(text.begin(), text.end(), '\n'));
}

std::size_t total_from(const std::string& out) {
  const auto at = out.rfind("total");
  REQUIRE(at != std::string::npos);
  return std::stoul(out.substr(at + 5));
}

}  // namespace

TEST_CASE("one epoch writes metrics and checkpoints") {
  const fs::path dir = fresh_dir("one");
  const Outcome r = run(small_run(dir));
  REQUIRE(r.code == 0);
  const std::string csv = slurp(dir / "metrics.csv");
  CHECK(csv.rfind("epoch,train_loss,val_loss,val_acc,lr,wall_seconds\n", 0) == 0);
  CHECK(lines(csv) == 2);
  CHECK(fs::exists(dir / "last.ckpt"));
  CHECK(fs::exists(dir / "best.ckpt"));
  CHECK(fs::exists(dir / "config.txt"));
  CHECK(r.out.find("test_acc") != std::string::npos);
}

TEST_CASE("same seed gives identical artifacts") {
  const fs::path a = fresh_dir("seed_a"), b = fresh_dir("seed_b"), c = fresh_dir("seed_c");
  REQUIRE(run(small_run(a)).code == 0);
  REQUIRE(run(small_run(b)).code == 0);
  auto other = small_run(c);
  other.insert(other.end(), {"--seed", "5"});
  REQUIRE(run(other).code == 0);
  CHECK(slurp(a / "metrics.csv") == slurp(b / "metrics.csv"));
  CHECK(slurp(a / "last.ckpt") == slurp(b / "last.ckpt"));
  CHECK(slurp(a / "metrics.csv") != slurp(c / "metrics.csv"));
}

TEST_CASE("resume continues epoch numbering and matches a straight run") {
  const fs::path dir = fresh_dir("resume"), straight = fresh_dir("straight");
  REQUIRE(run(small_run(dir)).code == 0);
  auto resume = small_run(dir);
  resume.insert(resume.end(), {"--set", "optim.epochs=3", "--checkpoint", (dir / "last.ckpt").string()});
  const Outcome r = run(resume);
  REQUIRE(r.code == 0);
  const std::string csv = slurp(dir / "metrics.csv");
  CHECK(lines(csv) == 4);
  CHECK(csv.find("\n2,") != std::string::npos);
  CHECK(csv.find("\n3,") != std::string::npos);

  auto whole = small_run(straight);
  whole.insert(whole.end(), {"--set", "optim.epochs=3"});
  REQUIRE(run(whole).code == 0);
  CHECK(slurp(straight / "metrics.csv") == csv);
  CHECK(slurp(straight / "last.ckpt") == slurp(dir / "last.ckpt"));
}

TEST_CASE("count-params") {
  const Outcome fit = run({"count-params", "fitnet"});
  REQUIRE(fit.code == 0);
  CHECK(total_from(fit.out) == 608102);
  const Outcome so = run({"count-params", "so-cnn-4-x2"});
  REQUIRE(so.code == 0);
  CHECK(total_from(so.out) == 362852);
  CHECK(run({"count-params", "so-cnn-4-triple"}).code == 2);
}

TEST_CASE("gen-synth output feeds train") {
  const fs::path dir = fresh_dir("gen");
  const std::string file = (dir / "data.soc").string();
  REQUIRE(run({"gen-synth", file, "--out", dir.string(), "--set", "synth.train=40", "--set",
               "synth.test=8"})
              .code == 0);
  const auto ckpt = socnn::Checkpoint::load(file);
  CHECK(ckpt.at("train/features").shape() == socnn::Shape{40, 64, 16});
  const Outcome r = run({"train", "--out", dir.string(), "--set", "data.path=" + file, "--set",
                         "optim.epochs=1"});
  CHECK(r.code == 0);
  CHECK(r.out.find("36 train / 4 val / 8 test") != std::string::npos);
}

TEST_CASE("gradcheck reports pass, fault and skip") {
  const Outcome ok = run({"gradcheck", "--seeds", "2"});
  CHECK(ok.code == 0);
  CHECK(ok.out.find("FAIL") == std::string::npos);

  const Outcome bad = run({"gradcheck", "--seeds", "1", "--layers-only", "--inject-fault", "o2t"});
  CHECK(bad.code != 0);
  CHECK(bad.out.find("FAIL  o2t") != std::string::npos);

  const Outcome degenerate = run({"gradcheck", "--seeds", "1", "--layers-only", "--degenerate-robust"});
  CHECK(degenerate.out.find("SKIP  robust") != std::string::npos);
}

TEST_CASE("eval scores a memorized set and rejects mismatched checkpoints") {
  const fs::path dir = fresh_dir("eval");
  const std::vector<std::string> data{"--set", "synth.train=10", "--set", "synth.test=10",
                                      "--set", "data.val_holdout=0"};
  auto train = std::vector<std::string>{"train", "--out", dir.string(), "--set", "optim.epochs=60",
                                        "--set", "optim.initial_lr=0.1", "--set", "optim.batch_size=5"};
  train.insert(train.end(), data.begin(), data.end());
  REQUIRE(run(train).code == 0);

  auto eval = std::vector<std::string>{"eval", "--checkpoint", (dir / "last.ckpt").string(),
                                       "--set", "eval.split=train"};
  eval.insert(eval.end(), data.begin(), data.end());
  const Outcome r = run(eval);
  CHECK(r.code == 0);
  CHECK(r.out.rfind("top1 1.0000", 0) == 0);

  eval.insert(eval.end(), {"--set", "model=so-cnn-2-div2"});
  const Outcome mismatch = run(eval);
  CHECK(mismatch.code == 1);
  CHECK(mismatch.err.find("shape") != std::string::npos);

  CHECK(run({"eval"}).code != 0);
}

TEST_CASE("configuration errors exit with code 2") {
  CHECK(run({"train", "--set", "optim.epochs=abc"}).code == 2);
  CHECK(run({"train", "--set", "nonsense=1"}).code == 2);
  CHECK(run({"train", "--set", "precision=half", "--out", fresh_dir("prec").string()}).code == 2);
  CHECK(run({"train", "--config", "/nonexistent.cfg"}).code == 2);
}

TEST_CASE("config file precedence") {
  const fs::path dir = fresh_dir("precedence");
  fs::create_directories(dir);
  std::ofstream(dir / "run.cfg") << "seed = 3\noptim.epochs = 1\nsynth.train = 30\nsynth.test = 5\n";
  REQUIRE(run({"train", "--config", (dir / "run.cfg").string(), "--set", "seed=4", "--seed", "9",
               "--out", dir.string()})
              .code == 0);
  const std::string resolved = slurp(dir / "config.txt");
  CHECK(resolved.find("seed = 9") != std::string::npos);
  CHECK(resolved.find("synth.train = 30") != std::string::npos);
}

TEST_CASE("installed binary runs") {
  const std::string cmd = std::string(SOCNN_TOOL_PATH) + " count-params fitnet > /dev/null";
  const int status = std::system(cmd.c_str());
  CHECK(WIFEXITED(status));
  CHECK(WEXITSTATUS(status) == 0);
  const int bad = std::system((std::string(SOCNN_TOOL_PATH) + " frobnicate 2> /dev/null").c_str());
  CHECK(WEXITSTATUS(bad) != 0);
}
