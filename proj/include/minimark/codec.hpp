#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "minimark/base_lm.hpp"
#include "minimark/policy.hpp"

namespace minimark::codec {

using minilang::TokenId;

enum class GateOverride { none, force_on, force_off };
enum class NoiseMode { keyed_hash, noiseless };

struct WatermarkConfig {
  double delta = 2.0;
  double gamma = 0.5;
  double temperature = 1.0;
  double switch_threshold = 0.5;
  double relax_temperature = 1.0;
  double tau = 4.0;
  int t_min = 10;
  int max_completion = 256;
  std::uint64_t key = 0x6d696e696d61726bull;
  GateOverride gate_override = GateOverride::none;
  NoiseMode noise = NoiseMode::keyed_hash;
  bool stop_at_end = true;

  void validate(int vocab_size) const;
};

/// Noise seed for one position: a keyed hash of the policy context window.
/// Detection recomputes the identical seed from the observed tokens alone.
std::uint64_t noise_seed(std::uint64_t key, std::span<const TokenId> ctx);
std::vector<double> derive_u(std::uint64_t seed, int vocab_size);

/// Last `c` completion tokens, left-padded with PAD. The policy window never
/// contains prompt tokens so that prompt-free detection reconstructs exactly.
std::vector<TokenId> context_window(std::span<const TokenId> completion_prefix, int c, TokenId pad);

/// Eq-style bias on hard values: l~_j = l_j + w·delta·membership_j.
std::vector<double> bias_logits(std::span<const double> base, const policy::WGate& gate,
                                std::span<const double> membership_hard, double delta);

struct StepTrace {
  TokenId token = 0;
  bool gate = false;
  bool in_green = false;
  double logp = 0;
  std::uint64_t noise_seed = 0;
  bool is_code = false;
};

struct GenerationRecord {
  std::vector<TokenId> prompt;
  std::vector<TokenId> completion;
  std::vector<StepTrace> trace;
};

GenerationRecord generate_watermarked(const lm::BaseLM& lm, const policy::PolicyParams& params,
                                      std::span<const TokenId> prompt, const WatermarkConfig& cfg,
                                      Rng& rng);

struct PositionDecision {
  bool gate = false;
  bool in_green = false;
};

/// Prompt-free reconstruction: for each position of `s`, recompute the gate
/// and green membership from the observed tokens only.
std::vector<PositionDecision> reconstruct_decisions(const policy::PolicyParams& params,
                                                    std::span<const TokenId> s,
                                                    const WatermarkConfig& cfg);

/// One-proportion z statistic: (N_G − T·gamma)/sqrt(T·gamma·(1−gamma)).
double z_score(std::int64_t n_green, std::int64_t t, double gamma);

enum class Verdict { watermarked, not_watermarked, insufficient_data };
const char* verdict_name(Verdict v);

struct DetectionReport {
  int T = 0;
  int N_G = 0;
  std::optional<double> z;  // present only when T >= t_min
  Verdict verdict = Verdict::insufficient_data;
  std::vector<PositionDecision> per_position;
};

DetectionReport detect(const policy::PolicyParams& params, std::span<const TokenId> s,
                       const WatermarkConfig& cfg);

struct TraceStats {
  int T = 0;
  int n_green = 0;
  std::optional<double> z;  // present when T >= 1
};
TraceStats trace_stats(const GenerationRecord& rec, double gamma);

// ---------------------------------------------------------------------------
// One-position differentiable pipeline: policy -> gate/selection -> bias ->
// token log-probability. Hard mode reproduces generation bit-for-bit and
// backpropagates through the straight-through relaxations; relaxed mode keeps
// the forward pass itself differentiable (frozen u and theta_k) so central
// finite differences match the analytic gradients.

struct WatermarkStep {
  // inputs
  std::vector<TokenId> ctx;
  std::vector<double> base_logits;
  TokenId sampled = 0;
  std::vector<double> u;
  bool relaxed = false;
  bool freeze_theta = false;
  double frozen_theta = 0;

  // forward products
  policy::PolicyWorkspace ws;
  double w_phi = 0;
  std::vector<double> l_phi;
  policy::WGate gate;
  policy::GreenSelection sel;
  std::vector<double> S;
  std::vector<double> probs;
  double logp = 0;
  double w_val = 0;  // forward gate value actually applied

  /// Returns log-probability of `sampled` under the biased distribution.
  double forward(const policy::PolicyParams& params, const WatermarkConfig& cfg);

  double kl_to(std::span<const double> ref_probs) const;
  double gate_neg_entropy() const;  // −H(Bernoulli(sigmoid(w_phi)))

  /// Process reward as a function of the straight-through indicators:
  /// w·((1+alpha)·membership[sampled] − alpha). Hard forward value equals the
  /// R3 table; gradients flow through sigmoid(w_phi) and S(g).
  double r3_value(double alpha) const;

  /// Accumulates d loss/d params where
  ///   loss = dlogp·logp + kl_scale·KL(probs‖ref) + ent_scale·(−H(gate))
  ///        + r3_scale·R3_ste(alpha).
  void backward(const policy::PolicyParams& params, const WatermarkConfig& cfg, double dlogp,
                std::span<const double> ref_probs, double kl_scale, double ent_scale,
                double r3_scale, double alpha, policy::PolicyParams& grads) const;
};

}  // namespace minimark::codec
