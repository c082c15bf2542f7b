#include "minimark/rl.hpp"

#include <algorithm>
#include <cmath>

#include "minimark/errors.hpp"
#include "minimark/gradcheck.hpp"
#include "minimark/parallel.hpp"

namespace minimark::rl {

using minilang::Vocabulary;

void TrainConfig::validate() const {
  if (lr <= 0 || grad_clip <= 0) throw DomainError("lr and grad clip must be > 0");
  if (lr_floor < 0 || lr_floor > 1) throw DomainError("lr floor must be in [0,1]");
  if (warmup_ratio < 0 || warmup_ratio >= 1) throw DomainError("warmup ratio must be in [0,1)");
  if (steps < 0 || group_size < 2) throw DomainError("need steps >= 0 and group size >= 2");
  if (clip_eps <= 0 || clip_eps >= 1) throw DomainError("clip epsilon must be in (0,1)");
  if (beta_kl < 0 || lambda_ent < 0) throw DomainError("regularizer weights must be >= 0");
  if (alpha_red < 1) throw DomainError("alpha must be >= 1");
  if (ref_refresh < 1 || eval_every < 1) throw DomainError("refresh/eval intervals must be >= 1");
}

double lr_at_step(const TrainConfig& cfg, int step) {
  const int warm = std::max(1, static_cast<int>(std::lround(cfg.warmup_ratio * cfg.steps)));
  if (step <= warm) return cfg.lr * static_cast<double>(step) / warm;
  const double span = std::max(1, cfg.steps - warm);
  double p = std::min(1.0, (step - warm) / span);
  double shape = 0.5 * (1.0 + std::cos(3.141592653589793 * p));
  return cfg.lr * (cfg.lr_floor + (1.0 - cfg.lr_floor) * shape);
}

double exec_reward(const minilang::TestRunResult& result) { return result.pass ? 1.0 : 0.0; }

double detect_reward(double z) {
  if (z >= 3.0) return 1.0;
  if (z <= 0.0) return 0.0;
  return z / 3.0;
}

double token_reward(bool gate, bool in_green, double alpha) {
  if (!gate) return 0.0;
  return in_green ? 1.0 : -alpha;
}

RewardBundle score_rollout(const codec::GenerationRecord& rec, const corpus::Task& task,
                           double alpha, double gamma) {
  const Vocabulary& voc = Vocabulary::standard();
  RewardBundle rb;

  minilang::TokenSequence prog;
  prog.ids = rec.prompt;
  prog.ids.insert(prog.ids.end(), rec.completion.begin(), rec.completion.end());
  minilang::TestRunResult tr = minilang::run_tests(prog, task.suite, minilang::kDefaultFuel, voc);
  rb.passed = tr.pass;
  rb.r1 = exec_reward(tr);

  codec::TraceStats st = codec::trace_stats(rec, gamma);
  rb.T = st.T;
  rb.n_green = st.n_green;
  rb.z = st.z.value_or(0.0);
  rb.r2 = detect_reward(rb.z);

  rb.r3.reserve(rec.trace.size());
  rb.is_code.reserve(rec.trace.size());
  for (const codec::StepTrace& t : rec.trace) {
    rb.r3.push_back(token_reward(t.gate, t.in_green, alpha));
    rb.is_code.push_back(t.is_code);
  }
  return rb;
}

std::vector<double> normalize_population(std::span<const double> xs) {
  std::vector<double> out(xs.size(), 0.0);
  if (xs.empty()) return out;
  double mean = 0;
  for (double x : xs) mean += x;
  mean /= xs.size();
  double var = 0;
  for (double x : xs) var += (x - mean) * (x - mean);
  var /= xs.size();
  double denom = std::sqrt(var) + 1e-8;
  for (std::size_t i = 0; i < xs.size(); ++i) out[i] = (xs[i] - mean) / denom;
  return out;
}

std::vector<double> outcome_advantages(std::span<const double> combined_rewards) {
  if (combined_rewards.size() < 2) throw DomainError("group size must be >= 2");
  return normalize_population(combined_rewards);
}

std::vector<std::vector<double>> process_advantages(const std::vector<std::vector<double>>& r3,
                                                    const std::vector<std::vector<bool>>& is_code) {
  std::vector<double> pool;
  for (std::size_t i = 0; i < r3.size(); ++i)
    for (std::size_t t = 0; t < r3[i].size(); ++t)
      if (is_code[i][t]) pool.push_back(r3[i][t]);
  std::vector<double> normalized = normalize_population(pool);
  std::vector<std::vector<double>> out(r3.size());
  std::size_t k = 0;
  for (std::size_t i = 0; i < r3.size(); ++i) {
    out[i].assign(r3[i].size(), 0.0);
    for (std::size_t t = 0; t < r3[i].size(); ++t)
      if (is_code[i][t]) out[i][t] = normalized[k++];
  }
  return out;
}

std::vector<std::vector<double>> combine_and_mask(std::span<const double> a1,
                                                  const std::vector<std::vector<double>>& a2,
                                                  const std::vector<std::vector<bool>>& is_code) {
  std::vector<std::vector<double>> out(a2.size());
  for (std::size_t i = 0; i < a2.size(); ++i) {
    out[i].assign(a2[i].size(), 0.0);
    for (std::size_t t = 0; t < a2[i].size(); ++t)
      if (is_code[i][t]) out[i][t] = a1[i] + a2[i][t];
  }
  return out;
}

StepResult grpo_update(policy::PolicyParams& params, const policy::PolicyParams& ref,
                       const lm::BaseLM& lm, const RolloutGroup& group,
                       const std::vector<std::vector<double>>& masked_adv, const TrainConfig& cfg,
                       const codec::WatermarkConfig& wm, double lr) {
  const Vocabulary& voc = Vocabulary::standard();
  const int V = voc.size();
  const int c = params.cfg.context;

  StepResult res;
  int n_all = 0;
  for (const auto& rec : group.completions) n_all += static_cast<int>(rec.trace.size());
  for (const auto& rb : group.rewards)
    for (bool code : rb.is_code)
      if (code) ++res.code_tokens;
  if (n_all == 0) return res;

  policy::PolicyParams grads = policy::PolicyParams::zeros_like(params);
  double surr_sum = 0, kl_sum = 0, ent_sum = 0, ratio_sum = 0, r3_sum = 0;
  const double kl_scale = cfg.beta_kl != 0.0 ? cfg.beta_kl / n_all : 0.0;
  const double ent_scale = cfg.lambda_ent != 0.0 ? cfg.lambda_ent / n_all : 0.0;
  const double r3_unit =
      (cfg.lambda_r3 != 0.0 && res.code_tokens > 0) ? -cfg.lambda_r3 / res.code_tokens : 0.0;

  for (std::size_t i = 0; i < group.completions.size(); ++i) {
    const codec::GenerationRecord& rec = group.completions[i];
    std::vector<TokenId> prefix = rec.prompt;
    for (std::size_t t = 0; t < rec.trace.size(); ++t) {
      const codec::StepTrace& tr = rec.trace[t];
      codec::WatermarkStep step;
      step.ctx = codec::context_window(std::span<const TokenId>(rec.completion.data(), t), c, voc.pad());
      step.base_logits = lm.next_logits(prefix);
      step.sampled = tr.token;
      step.u = codec::derive_u(tr.noise_seed, V);
      step.relaxed = false;
      double logp_new = step.forward(params, wm);

      double dlogp = 0;
      double r3_scale = 0;
      if (group.rewards[i].is_code[t] && res.code_tokens > 0) {
        double adv = masked_adv[i][t];
        double rho = std::exp(logp_new - tr.logp);
        ratio_sum += rho;
        double unclipped = rho * adv;
        double clipped = std::clamp(rho, 1.0 - cfg.clip_eps, 1.0 + cfg.clip_eps) * adv;
        surr_sum += std::min(unclipped, clipped);
        if (unclipped <= clipped) dlogp = -adv * rho / res.code_tokens;
        r3_scale = r3_unit;
        r3_sum += step.r3_value(cfg.alpha_red);
      }

      std::vector<double> ref_probs;
      if (kl_scale != 0.0) {
        codec::WatermarkStep ref_step;
        ref_step.ctx = step.ctx;
        ref_step.base_logits = step.base_logits;
        ref_step.sampled = tr.token;
        ref_step.u = step.u;
        ref_step.forward(ref, wm);
        ref_probs = std::move(ref_step.probs);
        kl_sum += step.kl_to(ref_probs);
      }
      ent_sum += step.gate_neg_entropy();

      step.backward(params, wm, dlogp, ref_probs, kl_scale, ent_scale, r3_scale, cfg.alpha_red,
                    grads);
      prefix.push_back(tr.token);
    }
  }

  res.surrogate = res.code_tokens > 0 ? surr_sum / res.code_tokens : 0.0;
  res.kl = kl_sum / n_all;
  res.mean_ratio = res.code_tokens > 0 ? ratio_sum / res.code_tokens : 1.0;
  res.mean_r3 = res.code_tokens > 0 ? r3_sum / res.code_tokens : 0.0;
  res.loss = -res.surrogate + cfg.beta_kl * res.kl + cfg.lambda_ent * (ent_sum / n_all) -
             cfg.lambda_r3 * res.mean_r3;

  double norm_sq = 0;
  policy::for_each_tensor(grads, [&](const std::string&, const policy::Tensor& t) {
    for (double g : t.a) norm_sq += g * g;
  });
  double norm = std::sqrt(norm_sq);
  if (!std::isfinite(res.loss) || !std::isfinite(norm))
    throw NonFiniteLoss("non-finite loss or gradient; step aborted");
  double scale = norm > cfg.grad_clip ? cfg.grad_clip / norm : 1.0;
  res.grad_norm = norm * scale;

  policy::for_each_tensor(params, [&, idx = 0](const std::string& name, policy::Tensor& t) mutable {
    (void)name;
    policy::Tensor& g = policy::tensor_at(grads, idx++);
    for (std::size_t j = 0; j < t.a.size(); ++j) t.a[j] -= lr * scale * g.a[j];
  });
  return res;
}

// ---------------------------------------------------------------------------

std::vector<SftItem> build_sft_items(const std::vector<corpus::Task>& tasks, const lm::BaseLM& lm,
                                     int context, int max_items, std::uint64_t seed) {
  const Vocabulary& voc = Vocabulary::standard();
  std::vector<SftItem> items;
  for (const corpus::Task& task : tasks) {
    std::vector<TokenId> completion = task.reference.ids;
    completion.push_back(voc.end());
    std::vector<TokenId> prefix = task.prompt.ids;
    for (std::size_t t = 0; t < completion.size(); ++t) {
      SftItem item;
      item.ctx = codec::context_window(std::span<const TokenId>(completion.data(), t), context,
                                       voc.pad());
      item.base_logits = lm.next_logits(prefix);
      item.entropy = lm::token_entropy(item.base_logits);
      items.push_back(std::move(item));
      prefix.push_back(completion[t]);
    }
  }
  if (static_cast<int>(items.size()) > max_items) {
    Rng rng(mix64(seed, 0x736674ull));
    // Fisher-Yates prefix shuffle, then truncate.
    for (int i = 0; i < max_items; ++i) {
      std::size_t j = i + rng.next_below(items.size() - i);
      std::swap(items[i], items[j]);
    }
    items.resize(max_items);
  }
  return items;
}

double median_entropy(std::span<const SftItem> items) {
  if (items.empty()) throw DomainError("no SFT items");
  std::vector<double> h;
  h.reserve(items.size());
  for (const SftItem& it : items) h.push_back(it.entropy);
  std::sort(h.begin(), h.end());
  return h[h.size() / 2];
}

double sft_loss_and_grads(const policy::PolicyParams& params, std::span<const SftItem> batch,
                          double h_threshold, policy::PolicyParams& grads) {
  if (batch.empty()) throw DomainError("empty SFT batch");
  const double inv_b = 1.0 / static_cast<double>(batch.size());
  double loss = 0;
  for (const SftItem& item : batch) {
    policy::PolicyWorkspace ws;
    policy::PolicyOutput out = policy::policy_forward(params, item.ctx, &ws);
    double y = item.entropy > h_threshold ? 1.0 : 0.0;
    double sig = policy::sigmoid(out.w_phi);
    const double eps = 1e-12;
    loss += -(y * std::log(sig + eps) + (1 - y) * std::log(1 - sig + eps)) * inv_b;

    std::vector<double> q = lm::softmax(item.base_logits);
    std::vector<double> p = lm::softmax(out.l_phi);
    double ce = 0;
    for (std::size_t v = 0; v < q.size(); ++v) ce -= q[v] * std::log(p[v] + eps);
    loss += ce * inv_b;

    std::vector<double> d_lphi(q.size());
    for (std::size_t v = 0; v < q.size(); ++v) d_lphi[v] = (p[v] - q[v]) * inv_b;
    policy::policy_backward(params, ws, (sig - y) * inv_b, d_lphi, grads);
  }
  return loss;
}

double sft_step(policy::PolicyParams& params, std::span<const SftItem> batch, double h_threshold,
                double lr) {
  policy::PolicyParams grads = policy::PolicyParams::zeros_like(params);
  double loss = sft_loss_and_grads(params, batch, h_threshold, grads);
  if (!std::isfinite(loss)) throw NonFiniteLoss("non-finite SFT loss");
  policy::for_each_tensor(params, [&, idx = 0](const std::string&, policy::Tensor& t) mutable {
    policy::Tensor& g = policy::tensor_at(grads, idx++);
    for (std::size_t j = 0; j < t.a.size(); ++j) t.a[j] -= lr * g.a[j];
  });
  return loss;
}

// ---------------------------------------------------------------------------

RolloutGroup rollout_group(const corpus::Task& task, const policy::PolicyParams& params,
                           const lm::BaseLM& lm, const codec::WatermarkConfig& wm,
                           const TrainConfig& cfg, std::uint64_t step_seed, int threads) {
  RolloutGroup group;
  group.task = &task;
  group.completions.resize(cfg.group_size);
  group.rewards.resize(cfg.group_size);
  parallel_for(cfg.group_size, threads, [&](int i) {
    Rng rng(mix64(step_seed, 0x726f6c6cull, static_cast<std::uint64_t>(i)));
    group.completions[i] = codec::generate_watermarked(lm, params, task.prompt.ids, wm, rng);
    group.rewards[i] = score_rollout(group.completions[i], task, cfg.alpha_red, wm.gamma);
  });
  return group;
}

EvalSnapshot quick_eval(const policy::PolicyParams& params, const lm::BaseLM& lm,
                        std::span<const corpus::Task> tasks, const codec::WatermarkConfig& wm,
                        std::uint64_t seed, int max_tasks, int threads) {
  const int n = std::min<int>(max_tasks, static_cast<int>(tasks.size()));
  if (n == 0) return {};
  std::vector<double> zs(n), passes(n);
  parallel_for(n, threads, [&](int i) {
    Rng rng(mix64(seed, 0x6576616cull, static_cast<std::uint64_t>(i)));
    codec::GenerationRecord rec = codec::generate_watermarked(lm, params, tasks[i].prompt.ids, wm, rng);
    RewardBundle rb = score_rollout(rec, tasks[i], 1.0, wm.gamma);
    zs[i] = rb.z;
    passes[i] = rb.passed ? 1.0 : 0.0;
  });
  EvalSnapshot snap;
  for (int i = 0; i < n; ++i) {
    snap.mean_z += zs[i];
    snap.pass_rate += passes[i];
  }
  snap.mean_z /= n;
  snap.pass_rate /= n;
  return snap;
}

TrainResult train(const std::vector<corpus::Task>& train_tasks,
                  const std::vector<corpus::Task>& eval_tasks, policy::PolicyParams init,
                  const lm::BaseLM& lm, const TrainConfig& cfg, const codec::WatermarkConfig& wm,
                  int threads) {
  cfg.validate();
  if (train_tasks.empty()) throw DomainError("no training tasks");

  TrainResult result;
  result.params = std::move(init);
  policy::PolicyParams ref = result.params;

  Rng order_rng(mix64(cfg.seed, 0x6f72646572ull));
  double acc_r1 = 0, acc_r2 = 0, acc_loss = 0, acc_gnorm = 0;
  int acc_n = 0;

  for (int step = 1; step <= cfg.steps; ++step) {
    const corpus::Task& task = train_tasks[order_rng.next_below(train_tasks.size())];
    RolloutGroup group =
        rollout_group(task, result.params, lm, wm, cfg, mix64(cfg.seed, static_cast<std::uint64_t>(step)), threads);

    std::vector<double> combined(cfg.group_size);
    std::vector<std::vector<double>> r3(cfg.group_size);
    std::vector<std::vector<bool>> is_code(cfg.group_size);
    for (int i = 0; i < cfg.group_size; ++i) {
      combined[i] = cfg.w_exec * group.rewards[i].r1 + cfg.w_wm * group.rewards[i].r2;
      r3[i] = group.rewards[i].r3;
      is_code[i] = group.rewards[i].is_code;
    }
    std::vector<double> a1 = outcome_advantages(combined);
    std::vector<std::vector<double>> a2 = process_advantages(r3, is_code);
    std::vector<std::vector<double>> masked = combine_and_mask(a1, a2, is_code);

    double lr = lr_at_step(cfg, step);
    StepResult sr = grpo_update(result.params, ref, lm, group, masked, cfg, wm, lr);

    for (int i = 0; i < cfg.group_size; ++i) {
      acc_r1 += group.rewards[i].r1;
      acc_r2 += group.rewards[i].r2;
    }
    acc_loss += sr.loss;
    acc_gnorm += sr.grad_norm;
    acc_n += 1;

    if (step % cfg.ref_refresh == 0) ref = result.params;

    if (step % cfg.eval_every == 0 || step == cfg.steps) {
      EvalSnapshot snap = quick_eval(result.params, lm, eval_tasks, wm,
                                     mix64(cfg.seed, 0x65766c70ull, static_cast<std::uint64_t>(step)),
                                     cfg.eval_subset, threads);
      MetricsRow row;
      row.step = step;
      row.mean_r1 = acc_r1 / (acc_n * cfg.group_size);
      row.mean_r2 = acc_r2 / (acc_n * cfg.group_size);
      row.mean_z_eval = snap.mean_z;
      row.pass_rate_eval = snap.pass_rate;
      row.loss = acc_loss / acc_n;
      row.grad_norm = acc_gnorm / acc_n;
      row.lr = lr;
      result.metrics.push_back(row);
      acc_r1 = acc_r2 = acc_loss = acc_gnorm = 0;
      acc_n = 0;
    }
  }
  return result;
}

}  // namespace minimark::rl
