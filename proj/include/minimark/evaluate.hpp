#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "minimark/codec.hpp"
#include "minimark/corpus.hpp"
#include "minimark/metrics.hpp"

namespace minimark::eval {

enum class AttackKind { none, rename };

struct EvalOptions {
  int samples_per_task = 10;  // completions per task for pass@k
  AttackKind attack = AttackKind::none;
  std::uint64_t seed = 42;
  int threads = 1;
};

struct EvalReport {
  double pass_at_1 = 0;
  double pass_at_10 = 0;
  double auroc = 0;
  double tpr_at_5fpr = 0;
  double mean_z_watermarked = 0;
  double mean_z_clean = 0;
  int n_tasks = 0;
  int n_positive = 0;
  int n_negative = 0;
  std::string attack = "none";
  std::vector<ScoreSample> scores;  // positives and negatives, for CSV export
  bool partial = false;             // set when a stage failed and was skipped
};

/// Generates samples_per_task watermarked completions per task for pass@k,
/// scores the first one per task against clean negatives (even tasks: fresh
/// unwatermarked base-LM completions; odd tasks: the corpus reference) and
/// computes AUROC / TPR@5%FPR. The rename attack, when selected, is applied
/// to the watermarked completions before detection scoring only.
EvalReport run_evaluation(const policy::PolicyParams& params, const lm::BaseLM& lm,
                          const std::vector<corpus::Task>& tasks, const codec::WatermarkConfig& wm,
                          const EvalOptions& opts);

/// z with T >= 1 (0.0 when nothing was gated); detection's T_min applies to
/// verdicts, not to eval scores.
double detection_z(const policy::PolicyParams& params, std::span<const minilang::TokenId> s,
                   const codec::WatermarkConfig& wm);

void write_scores_csv(const std::string& path, const EvalReport& report);

}  // namespace minimark::eval
