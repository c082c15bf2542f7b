#pragma once

#include <string>

#include "minimark/run_config.hpp"

namespace minimark::cli {

// Command bodies shared by the CLI binary and the tests. Each writes a
// metadata file with the fully resolved config next to its outputs and
// returns a process exit code (0 success). Runtime failures throw.

int cmd_corpus_gen(const RunConfig& cfg, const std::string& out_dir);
int cmd_fit_lm(const RunConfig& cfg, const std::string& corpus_path, const std::string& out_path);
int cmd_sft(const RunConfig& cfg, const std::string& corpus_path, const std::string& lm_path,
            const std::string& out_ckpt);
int cmd_train(const RunConfig& cfg, const std::string& corpus_path, const std::string& eval_path,
              const std::string& lm_path, const std::string& init_ckpt, const std::string& out_dir);
int cmd_generate(const RunConfig& cfg, const std::string& tasks_path, const std::string& lm_path,
                 const std::string& ckpt_path, int task_index, const std::string& out_text,
                 const std::string& out_record);
int cmd_detect(const RunConfig& cfg, const std::string& ckpt_path, const std::string& input_path,
               const std::string& report_path);
int cmd_eval(const RunConfig& cfg, const std::string& tasks_path, const std::string& lm_path,
             const std::string& ckpt_path, const std::string& out_report, const std::string& csv_path,
             const std::string& attack);
int cmd_attack_eval(const RunConfig& cfg, const std::string& tasks_path, const std::string& lm_path,
                    const std::string& ckpt_path, const std::string& out_report);

}  // namespace minimark::cli
