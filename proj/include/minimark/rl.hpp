#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "minimark/codec.hpp"
#include "minimark/corpus.hpp"

namespace minimark::rl {

using minilang::TokenId;

struct TrainConfig {
  double lr = 0.5;          // desk-scale SGD peak rate
  double lr_floor = 0.1;    // cosine floor, as a fraction of the peak
  double warmup_ratio = 0.03;
  int steps = 200;
  int group_size = 8;
  double clip_eps = 0.2;
  double beta_kl = 0.0;
  double lambda_ent = 0.01;
  // Weight of the reparameterized process-reward term: R3 is a function of
  // the gate and membership indicators, so it admits a direct gradient
  // through their straight-through relaxations. The clipped surrogate alone
  // pushes sampled red tokens further out of the candidate green set (the
  // only way to lower their probability through Eq. 1), which anti-aligns
  // the list at this scale; this term supplies the aligning force.
  double lambda_r3 = 1.0;
  double alpha_red = 3.0;
  double grad_clip = 1.0;
  double w_exec = 1.0;
  double w_wm = 1.0;
  int ref_refresh = 50;
  int eval_every = 20;
  int eval_subset = 64;
  std::uint64_t seed = 42;

  void validate() const;
};

/// Warmup then cosine decay to lr_floor·lr; step is 1-based.
double lr_at_step(const TrainConfig& cfg, int step);

// ---------------------------------------------------------------------------
// Rewards

/// 1 iff the parse succeeded and every test case passed.
double exec_reward(const minilang::TestRunResult& result);

/// Saturated detectability reward: 1 for z >= 3, z/3 in between, 0 for z <= 0.
double detect_reward(double z);

/// +1 green, −alpha red when gated; 0 when not watermarked.
double token_reward(bool gate, bool in_green, double alpha);

struct RewardBundle {
  double r1 = 0;
  double r2 = 0;
  double z = 0;  // 0 when no position was gated
  int T = 0;
  int n_green = 0;
  std::vector<double> r3;       // per completion token
  std::vector<bool> is_code;    // per completion token
  bool passed = false;
};

RewardBundle score_rollout(const codec::GenerationRecord& rec, const corpus::Task& task,
                           double alpha, double gamma);

// ---------------------------------------------------------------------------
// Advantages

/// (x − mean)/(popstd + 1e-8); all zeros when the variance vanishes.
std::vector<double> normalize_population(std::span<const double> xs);

/// Group-normalized outcome advantages from combined rewards.
std::vector<double> outcome_advantages(std::span<const double> combined_rewards);

/// Token-level advantages normalized over the code tokens of every rollout in
/// the group; non-code tokens are excluded from the statistics and get 0.
std::vector<std::vector<double>> process_advantages(const std::vector<std::vector<double>>& r3,
                                                    const std::vector<std::vector<bool>>& is_code);

/// Â = (A1 + A2)·1_is_code, elementwise.
std::vector<std::vector<double>> combine_and_mask(std::span<const double> a1,
                                                  const std::vector<std::vector<double>>& a2,
                                                  const std::vector<std::vector<bool>>& is_code);

// ---------------------------------------------------------------------------
// GRPO

struct RolloutGroup {
  const corpus::Task* task = nullptr;
  std::vector<codec::GenerationRecord> completions;
  std::vector<RewardBundle> rewards;
};

struct StepResult {
  double loss = 0;
  double grad_norm = 0;  // post-clip
  double surrogate = 0;
  double kl = 0;
  double mean_ratio = 1;
  double mean_r3 = 0;
  int code_tokens = 0;
};

/// One clipped-surrogate update on the group. Gradients flow into the policy
/// through the gate and membership relaxations; the base model is frozen.
/// Throws NonFiniteLoss (leaving params untouched) on non-finite loss/grads.
StepResult grpo_update(policy::PolicyParams& params, const policy::PolicyParams& ref,
                       const lm::BaseLM& lm, const RolloutGroup& group,
                       const std::vector<std::vector<double>>& masked_adv, const TrainConfig& cfg,
                       const codec::WatermarkConfig& wm, double lr);

// ---------------------------------------------------------------------------
// SFT initialization

struct SftItem {
  std::vector<TokenId> ctx;          // policy window
  std::vector<double> base_logits;   // frozen LM targets at this position
  double entropy = 0;                // H of the target distribution
};

std::vector<SftItem> build_sft_items(const std::vector<corpus::Task>& tasks, const lm::BaseLM& lm,
                                     int context, int max_items, std::uint64_t seed);

double median_entropy(std::span<const SftItem> items);

/// loss = BCE(sigmoid(w_phi), 1[H > h]) + CE(base distribution, softmax(l_phi));
/// accumulates gradients and returns the batch loss.
double sft_loss_and_grads(const policy::PolicyParams& params, std::span<const SftItem> batch,
                          double h_threshold, policy::PolicyParams& grads);

/// One SGD step on the batch; returns the loss before the step.
double sft_step(policy::PolicyParams& params, std::span<const SftItem> batch, double h_threshold,
                double lr);

// ---------------------------------------------------------------------------
// Training loop

struct MetricsRow {
  int step = 0;
  double mean_r1 = 0, mean_r2 = 0;
  double mean_z_eval = 0, pass_rate_eval = 0;
  double loss = 0, grad_norm = 0, lr = 0;
};

struct EvalSnapshot {
  double mean_z = 0;
  double pass_rate = 0;
};

/// One watermarked completion per task; z from the generation trace (0 when
/// nothing was gated), pass from the execution suite.
EvalSnapshot quick_eval(const policy::PolicyParams& params, const lm::BaseLM& lm,
                        std::span<const corpus::Task> tasks, const codec::WatermarkConfig& wm,
                        std::uint64_t seed, int max_tasks, int threads);

struct TrainResult {
  policy::PolicyParams params;
  std::vector<MetricsRow> metrics;
};

TrainResult train(const std::vector<corpus::Task>& train_tasks,
                  const std::vector<corpus::Task>& eval_tasks, policy::PolicyParams init,
                  const lm::BaseLM& lm, const TrainConfig& cfg, const codec::WatermarkConfig& wm,
                  int threads);

/// Roll out one group for a task with derived seeds (exposed for tests).
RolloutGroup rollout_group(const corpus::Task& task, const policy::PolicyParams& params,
                           const lm::BaseLM& lm, const codec::WatermarkConfig& wm,
                           const TrainConfig& cfg, std::uint64_t step_seed, int threads);

}  // namespace minimark::rl
