#pragma once

#include <cstdint>
#include <string>

#include <json.hpp>

#include "minimark/codec.hpp"
#include "minimark/policy.hpp"
#include "minimark/rl.hpp"

namespace minimark::cli {

/// Merged view of every knob, loaded from `key = value` files with `#`
/// comments; command-line flags override file values. Unknown keys are
/// rejected. The resolved config (every effective parameter) is dumped into
/// each run's metadata file.
struct RunConfig {
  std::uint64_t seed = 42;
  int threads = 1;

  int corpus_train_tasks = 2000;
  int corpus_eval_tasks = 200;
  int corpus_test_cases = 3;

  int lm_order = 14;
  double lm_lambda = 0.001;

  int policy_dim = 64;
  int policy_layers = 2;
  int policy_heads = 4;
  int policy_ffn = 256;
  int policy_context = 4;
  double policy_dropout = 0.0;

  double wm_delta = 2.0;
  double wm_gamma = 0.5;
  double wm_tau = 4.0;
  double wm_switch_threshold = 0.5;
  double wm_temperature = 1.0;
  double wm_relax_temperature = 1.0;
  int wm_t_min = 10;
  int wm_max_completion = 256;
  std::uint64_t wm_key = 0x6d696e696d61726bull;
  std::string wm_gate = "policy";  // policy | on | off
  std::string wm_noise = "hash";   // hash | none
  bool wm_stop_at_end = true;

  double train_lr = 0.5;
  double train_lr_floor = 0.1;
  double train_warmup_ratio = 0.03;
  int train_steps = 200;
  int train_group_size = 8;
  double train_clip_eps = 0.2;
  double train_beta_kl = 0.0;
  double train_lambda_ent = 0.01;
  double train_alpha_red = 3.0;
  double train_grad_clip = 1.0;
  double train_w_exec = 1.0;
  double train_w_wm = 1.0;
  int train_ref_refresh = 50;
  int train_eval_every = 20;
  int train_eval_subset = 64;

  int sft_steps = 300;
  int sft_batch = 64;
  double sft_lr = 0.001;
  double sft_h_threshold = -1.0;  // < 0 means "median base-LM entropy"
  int sft_max_items = 20000;

  int eval_samples_per_task = 10;

  /// Applies one key/value pair; throws DomainError on unknown keys or
  /// unparseable values.
  void apply(const std::string& key, const std::string& value);

  void load_file(const std::string& path);

  nlohmann::json to_json() const;

  codec::WatermarkConfig watermark() const;
  policy::PolicyConfig policy_config() const;
  rl::TrainConfig train_config() const;
};

}  // namespace minimark::cli
