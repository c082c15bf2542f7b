// Command-line front end: dataset generation, base-LM fitting, SFT, GRPO
// training, watermarked generation, detection and evaluation.

#include <cstdio>
#include <exception>
#include <string>

#include <CLI11.hpp>

#include "minimark/commands.hpp"
#include "minimark/errors.hpp"

using minimark::cli::RunConfig;

namespace {

// Flags that mirror config keys; parsed before defaults are resolved so the
// precedence is: built-in defaults < config file < flags.
struct Overrides {
  std::vector<std::pair<std::string, std::string>> kv;
};

void add_set_flag(CLI::App* cmd, Overrides& ov, const std::string& key, const std::string& flag,
                  const std::string& help) {
  cmd->add_option_function<std::string>(
      flag, [&ov, key](const std::string& v) { ov.kv.emplace_back(key, v); }, help);
}

void add_common_flags(CLI::App* cmd, Overrides& ov, std::string& config_path) {
  cmd->add_option("--config", config_path, "plain-text config file (key = value)");
  add_set_flag(cmd, ov, "seed", "--seed", "global seed");
  add_set_flag(cmd, ov, "threads", "--threads", "worker thread cap");
}

void add_wm_flags(CLI::App* cmd, Overrides& ov) {
  add_set_flag(cmd, ov, "wm_delta", "--delta", "green-token logit bias");
  add_set_flag(cmd, ov, "wm_gamma", "--gamma", "green list fraction");
  add_set_flag(cmd, ov, "wm_tau", "--tau", "detection z threshold");
  add_set_flag(cmd, ov, "wm_gate", "--gate", "gate mode: policy|on|off");
  add_set_flag(cmd, ov, "wm_noise", "--noise", "green selection noise: hash|none");
  add_set_flag(cmd, ov, "wm_max_completion", "--max-completion", "completion length cap");
  add_set_flag(cmd, ov, "wm_stop_at_end", "--stop-at-end", "stop generation at END token");
  add_set_flag(cmd, ov, "wm_key", "--key", "watermark secret key");
}

RunConfig resolve(const std::string& config_path, const Overrides& ov) {
  RunConfig cfg;
  if (!config_path.empty()) cfg.load_file(config_path);
  for (const auto& [k, v] : ov.kv) cfg.apply(k, v);
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"adaptive code watermarking sandbox over a deterministic mini language"};
  app.require_subcommand(1);

  Overrides ov;
  std::string config_path;

  // corpus-gen
  std::string out_dir;
  CLI::App* c_gen = app.add_subcommand("corpus-gen", "generate train/eval task datasets");
  add_common_flags(c_gen, ov, config_path);
  c_gen->add_option("--out", out_dir, "output directory")->required();
  add_set_flag(c_gen, ov, "corpus_train_tasks", "--train", "number of training tasks");
  add_set_flag(c_gen, ov, "corpus_eval_tasks", "--eval", "number of eval tasks");
  add_set_flag(c_gen, ov, "corpus_test_cases", "--cases", "test cases per task");

  // fit-lm
  std::string corpus_path, lm_out;
  CLI::App* c_fit = app.add_subcommand("fit-lm", "fit the frozen n-gram base model");
  add_common_flags(c_fit, ov, config_path);
  c_fit->add_option("--corpus", corpus_path, "task JSONL")->required();
  c_fit->add_option("--out", lm_out, "model file")->required();
  add_set_flag(c_fit, ov, "lm_order", "--order", "n-gram order");
  add_set_flag(c_fit, ov, "lm_lambda", "--lambda", "add-lambda smoothing");

  // sft
  std::string lm_path, ckpt_out;
  CLI::App* c_sft = app.add_subcommand("sft", "supervised initialization of the watermark policy");
  add_common_flags(c_sft, ov, config_path);
  c_sft->add_option("--corpus", corpus_path, "task JSONL")->required();
  c_sft->add_option("--lm", lm_path, "base model file")->required();
  c_sft->add_option("--out", ckpt_out, "output checkpoint")->required();
  add_set_flag(c_sft, ov, "sft_steps", "--steps", "SFT steps");
  add_set_flag(c_sft, ov, "sft_lr", "--lr", "SFT learning rate");

  // train
  std::string eval_path, init_ckpt, train_out;
  CLI::App* c_train = app.add_subcommand("train", "GRPO training of the watermark policy");
  add_common_flags(c_train, ov, config_path);
  add_wm_flags(c_train, ov);
  c_train->add_option("--corpus", corpus_path, "train task JSONL")->required();
  c_train->add_option("--eval-corpus", eval_path, "eval task JSONL")->required();
  c_train->add_option("--lm", lm_path, "base model file")->required();
  c_train->add_option("--init", init_ckpt, "initial checkpoint (default: random init)");
  c_train->add_option("--out", train_out, "output directory")->required();
  add_set_flag(c_train, ov, "train_steps", "--steps", "GRPO steps");
  add_set_flag(c_train, ov, "train_lr", "--lr", "peak learning rate");
  add_set_flag(c_train, ov, "train_group_size", "--group", "completions per prompt");

  // generate
  std::string tasks_path, gen_out, gen_record;
  int task_index = 0;
  CLI::App* c_genr = app.add_subcommand("generate", "watermarked generation for one task");
  add_common_flags(c_genr, ov, config_path);
  add_wm_flags(c_genr, ov);
  c_genr->add_option("--tasks", tasks_path, "task JSONL")->required();
  c_genr->add_option("--lm", lm_path, "base model file")->required();
  c_genr->add_option("--policy", ckpt_out, "policy checkpoint")->required();
  c_genr->add_option("--index", task_index, "task index");
  c_genr->add_option("--out", gen_out, "output MiniLang text file")->required();
  c_genr->add_option("--record", gen_record, "optional generation record JSON");

  // detect
  std::string det_input, det_report;
  CLI::App* c_det = app.add_subcommand("detect", "prompt-free watermark detection");
  add_common_flags(c_det, ov, config_path);
  add_wm_flags(c_det, ov);
  c_det->add_option("--policy", ckpt_out, "policy checkpoint")->required();
  c_det->add_option("--input", det_input, "MiniLang text (.txt) or token ids (.ids)")->required();
  c_det->add_option("--report", det_report, "detection report JSON");

  // eval
  std::string eval_report, eval_csv, attack = "none";
  CLI::App* c_eval = app.add_subcommand("eval", "detection/functionality evaluation");
  add_common_flags(c_eval, ov, config_path);
  add_wm_flags(c_eval, ov);
  c_eval->add_option("--tasks", tasks_path, "task JSONL")->required();
  c_eval->add_option("--lm", lm_path, "base model file")->required();
  c_eval->add_option("--policy", ckpt_out, "policy checkpoint")->required();
  c_eval->add_option("--out", eval_report, "report JSON")->required();
  c_eval->add_option("--csv", eval_csv, "optional per-sequence z CSV");
  c_eval->add_option("--attack", attack, "none|rename");
  add_set_flag(c_eval, ov, "eval_samples_per_task", "--samples", "completions per task");

  // attack-eval
  CLI::App* c_att = app.add_subcommand("attack-eval", "paired rename-attack evaluation");
  add_common_flags(c_att, ov, config_path);
  add_wm_flags(c_att, ov);
  c_att->add_option("--tasks", tasks_path, "task JSONL")->required();
  c_att->add_option("--lm", lm_path, "base model file")->required();
  c_att->add_option("--policy", ckpt_out, "policy checkpoint")->required();
  c_att->add_option("--out", eval_report, "report JSON")->required();
  add_set_flag(c_att, ov, "eval_samples_per_task", "--samples", "completions per task");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);  // --help
    app.exit(e);
    return 1;
  }

  try {
    RunConfig cfg = resolve(config_path, ov);
    if (c_gen->parsed()) return minimark::cli::cmd_corpus_gen(cfg, out_dir);
    if (c_fit->parsed()) return minimark::cli::cmd_fit_lm(cfg, corpus_path, lm_out);
    if (c_sft->parsed()) return minimark::cli::cmd_sft(cfg, corpus_path, lm_path, ckpt_out);
    if (c_train->parsed())
      return minimark::cli::cmd_train(cfg, corpus_path, eval_path, lm_path, init_ckpt, train_out);
    if (c_genr->parsed())
      return minimark::cli::cmd_generate(cfg, tasks_path, lm_path, ckpt_out, task_index, gen_out,
                                         gen_record);
    if (c_det->parsed()) {
      if (det_report.empty()) det_report = det_input + ".report.json";
      return minimark::cli::cmd_detect(cfg, ckpt_out, det_input, det_report);
    }
    if (c_eval->parsed())
      return minimark::cli::cmd_eval(cfg, tasks_path, lm_path, ckpt_out, eval_report, eval_csv, attack);
    if (c_att->parsed())
      return minimark::cli::cmd_attack_eval(cfg, tasks_path, lm_path, ckpt_out, eval_report);
  } catch (const minimark::DomainError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
  return 1;
}
