#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "minimark/io_util.hpp"
#include "minimark/run_config.hpp"

using namespace minimark;
namespace fs = std::filesystem;

namespace {

std::string cli_path() {
  const char* p = std::getenv("MINIMARK_CLI");
  REQUIRE(p != nullptr);
  return p;
}

struct Sandbox {
  fs::path dir;
  Sandbox() {
    dir = fs::temp_directory_path() / ("mm_cli_" + std::to_string(::getpid()));
    fs::remove_all(dir);
    fs::create_directories(dir);
  }
  ~Sandbox() { fs::remove_all(dir); }
  std::string operator/(const std::string& name) const { return (dir / name).string(); }
};

int run(const std::string& args) {
  std::string cmd = cli_path() + " " + args + " >/dev/null 2>&1";
  int rc = std::system(cmd.c_str());
  return WEXITSTATUS(rc);
}

// Runs the same command twice against identical output paths and checks that
// every listed artifact comes out byte-identical.
void check_rerun_identical(const std::string& args, const std::vector<std::string>& artifacts,
                           const Sandbox& sb) {
  REQUIRE(run(args) == 0);
  std::vector<std::string> snapshot;
  for (const std::string& a : artifacts) snapshot.push_back(io::read_file(a));
  (void)sb;
  REQUIRE(run(args) == 0);
  for (std::size_t i = 0; i < artifacts.size(); ++i) {
    INFO("artifact: ", artifacts[i]);
    CHECK(io::read_file(artifacts[i]) == snapshot[i]);
  }
}

}  // namespace

TEST_CASE("run config parsing") {
  cli::RunConfig cfg;
  cfg.apply("wm_delta", "3.5");
  CHECK(cfg.wm_delta == 3.5);
  cfg.apply("train_steps", "17");
  CHECK(cfg.train_steps == 17);
  cfg.apply("wm_gate", "on");
  CHECK(cfg.watermark().gate_override == codec::GateOverride::force_on);
  CHECK_THROWS_AS(cfg.apply("no_such_key", "1"), DomainError);
  CHECK_THROWS_AS(cfg.apply("wm_delta", "abc"), DomainError);
  CHECK_THROWS_AS(cfg.apply("wm_gate", "sometimes"), DomainError);

  Sandbox sb;
  std::string cfg_path = sb / "run.cfg";
  io::write_file(cfg_path, "# comment line\nwm_delta = 4.0\nseed = 9  # trailing comment\n\n");
  cli::RunConfig filed;
  filed.load_file(cfg_path);
  CHECK(filed.wm_delta == 4.0);
  CHECK(filed.seed == 9);

  io::write_file(cfg_path, "bogus_key = 1\n");
  cli::RunConfig bad;
  CHECK_THROWS_AS(bad.load_file(cfg_path), DomainError);
}

TEST_CASE("cli pipeline end to end with byte-identical reruns") {
  Sandbox sb;
  std::string base = "--seed 5 --threads 1";

  check_rerun_identical("corpus-gen " + base + " --train 40 --eval 10 --out " + (sb / "c"),
                        {sb / "c/train.jsonl", sb / "c/eval.jsonl", sb / "c/run_meta.json"}, sb);

  check_rerun_identical(
      "fit-lm " + base + " --corpus " + (sb / "c/train.jsonl") + " --out " + (sb / "lm.bin"),
      {sb / "lm.bin", sb / "lm.bin.meta.json"}, sb);

  // sft with 0 steps gives a reproducible random-init checkpoint
  check_rerun_identical("sft " + base + " --steps 0 --corpus " + (sb / "c/train.jsonl") + " --lm " +
                            (sb / "lm.bin") + " --out " + (sb / "init.ckpt"),
                        {sb / "init.ckpt", sb / "init.ckpt.meta.json"}, sb);

  // a short real sft run is also reproducible
  check_rerun_identical("sft " + base + " --steps 5 --corpus " + (sb / "c/train.jsonl") + " --lm " +
                            (sb / "lm.bin") + " --out " + (sb / "sft.ckpt"),
                        {sb / "sft.ckpt"}, sb);

  // train with 0 steps: checkpoint equals the init byte for byte
  REQUIRE(run("train " + base + " --steps 0 --corpus " + (sb / "c/train.jsonl") + " --eval-corpus " +
              (sb / "c/eval.jsonl") + " --lm " + (sb / "lm.bin") + " --init " + (sb / "init.ckpt") +
              " --out " + (sb / "t0")) == 0);
  CHECK(io::read_file(sb / "t0/policy.ckpt") == io::read_file(sb / "init.ckpt"));

  // short training, twice
  check_rerun_identical("train " + base + " --steps 3 --group 4 --corpus " + (sb / "c/train.jsonl") +
                            " --eval-corpus " + (sb / "c/eval.jsonl") + " --lm " + (sb / "lm.bin") +
                            " --init " + (sb / "init.ckpt") + " --out " + (sb / "t1"),
                        {sb / "t1/policy.ckpt", sb / "t1/metrics.jsonl", sb / "t1/run_meta.json"}, sb);

  // generate, twice
  check_rerun_identical("generate " + base + " --tasks " + (sb / "c/eval.jsonl") + " --lm " +
                            (sb / "lm.bin") + " --policy " + (sb / "t1/policy.ckpt") +
                            " --index 0 --out " + (sb / "p.txt") + " --record " + (sb / "r.json"),
                        {sb / "p.txt", sb / "r.json", sb / "p.txt.meta.json"}, sb);

  // detect on the generated snippet, twice
  check_rerun_identical("detect " + base + " --policy " + (sb / "t1/policy.ckpt") + " --input " +
                            (sb / "p.txt") + " --report " + (sb / "d.json"),
                        {sb / "d.json", sb / "d.json.meta.json"}, sb);
  CHECK(io::read_file(sb / "d.json").find("verdict") != std::string::npos);

  // eval and attack-eval, twice
  std::string eval_args = base + " --samples 2 --tasks " + (sb / "c/eval.jsonl") + " --lm " +
                          (sb / "lm.bin") + " --policy " + (sb / "t1/policy.ckpt");
  check_rerun_identical("eval " + eval_args + " --out " + (sb / "e.json") + " --csv " + (sb / "e.csv"),
                        {sb / "e.json", sb / "e.csv"}, sb);
  check_rerun_identical("attack-eval " + eval_args + " --out " + (sb / "a.json"), {sb / "a.json"}, sb);
}

TEST_CASE("cli exit codes") {
  Sandbox sb;
  // unknown flag: usage error, exit 1, no side effects
  CHECK(run("corpus-gen --bogus-flag 1 --out " + (sb / "x")) == 1);
  CHECK_FALSE(fs::exists(sb / "x"));

  // unknown subcommand
  CHECK(run("frobnicate") == 1);

  // missing input file: runtime failure, exit 2
  CHECK(run("fit-lm --corpus " + (sb / "missing.jsonl") + " --out " + (sb / "lm.bin")) == 2);

  // config file with unknown key: usage error
  std::string cfg = sb / "bad.cfg";
  io::write_file(cfg, "who_knows = 1\n");
  CHECK(run("corpus-gen --config " + cfg + " --out " + (sb / "y")) == 1);
  CHECK_FALSE(fs::exists(sb / "y"));
}
