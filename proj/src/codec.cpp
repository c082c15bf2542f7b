#include "minimark/codec.hpp"

#include <algorithm>
#include <cmath>

#include "minimark/errors.hpp"
#include "minimark/minilang.hpp"

namespace minimark::codec {

using minilang::Vocabulary;

void WatermarkConfig::validate(int vocab_size) const {
  if (delta < 0) throw DomainError("delta must be >= 0");
  if (!(gamma > 0 && gamma < 1)) throw DomainError("gamma must be in (0,1)");
  int k = static_cast<int>(std::floor(gamma * vocab_size));
  if (k < 1 || k >= vocab_size) throw DomainError("gamma yields an empty green or red list");
  if (temperature <= 0) throw DomainError("temperature must be > 0");
  if (relax_temperature <= 0) throw DomainError("relax temperature must be > 0");
  if (tau <= 0) throw DomainError("tau must be > 0");
  if (t_min < 1) throw DomainError("t_min must be >= 1");
  if (max_completion < 1) throw DomainError("max completion length must be >= 1");
}

std::uint64_t noise_seed(std::uint64_t key, std::span<const TokenId> ctx) {
  std::uint64_t h = mix64(key, 0x4752454e4c495354ull);
  for (TokenId id : ctx) h = mix64(h, static_cast<std::uint64_t>(id) + 1);
  return h;
}

std::vector<double> derive_u(std::uint64_t seed, int vocab_size) {
  std::vector<double> u(vocab_size);
  for (int v = 0; v < vocab_size; ++v) u[v] = unit_double(mix64(seed, static_cast<std::uint64_t>(v)));
  return u;
}

std::vector<TokenId> context_window(std::span<const TokenId> completion_prefix, int c, TokenId pad) {
  std::vector<TokenId> ctx(c, pad);
  const int n = static_cast<int>(completion_prefix.size());
  const int take = std::min(n, c);
  for (int i = 0; i < take; ++i) ctx[c - take + i] = completion_prefix[n - take + i];
  return ctx;
}

std::vector<double> bias_logits(std::span<const double> base, const policy::WGate& gate,
                                std::span<const double> membership_hard, double delta) {
  if (base.size() != membership_hard.size()) throw ShapeMismatch("logit/membership length mismatch");
  std::vector<double> out(base.begin(), base.end());
  if (gate.hard)
    for (std::size_t j = 0; j < out.size(); ++j) out[j] += delta * membership_hard[j];
  return out;
}

namespace {

policy::WGate apply_override(policy::WGate gate, GateOverride ov) {
  if (ov == GateOverride::force_on) gate.hard = true;
  if (ov == GateOverride::force_off) gate.hard = false;
  return gate;
}

policy::GreenSelection select_green(std::span<const double> l_phi, const WatermarkConfig& cfg,
                                    std::uint64_t seed) {
  if (cfg.noise == NoiseMode::keyed_hash) {
    std::vector<double> u = derive_u(seed, static_cast<int>(l_phi.size()));
    return policy::green_selection_with_u(l_phi, cfg.gamma, u);
  }
  return policy::green_selection_noiseless(l_phi, cfg.gamma);
}

}  // namespace

GenerationRecord generate_watermarked(const lm::BaseLM& lm, const policy::PolicyParams& params,
                                      std::span<const TokenId> prompt, const WatermarkConfig& cfg,
                                      Rng& rng) {
  const Vocabulary& voc = Vocabulary::standard();
  cfg.validate(voc.size());
  if (prompt.empty()) throw DomainError("prompt must be non-empty");

  GenerationRecord rec;
  rec.prompt.assign(prompt.begin(), prompt.end());
  std::vector<TokenId> prefix(prompt.begin(), prompt.end());
  bool in_comment = false;
  const int c = params.cfg.context;

  while (static_cast<int>(rec.completion.size()) < cfg.max_completion) {
    std::vector<TokenId> ctx = context_window(rec.completion, c, voc.pad());
    policy::PolicyOutput out = policy::policy_forward(params, ctx);
    policy::WGate gate = apply_override(policy::gate_decision(out.w_phi, cfg.switch_threshold),
                                        cfg.gate_override);
    std::uint64_t useed = noise_seed(cfg.key, ctx);
    policy::GreenSelection sel = select_green(out.l_phi, cfg, useed);

    lm::Logits base = lm.next_logits(prefix);
    std::vector<double> ltilde = base;
    if (gate.hard)
      for (int v : sel.green) ltilde[v] += cfg.delta;

    std::vector<double> probs = lm::softmax(ltilde, cfg.temperature);
    double u = rng.next_unit();
    TokenId tok = static_cast<TokenId>(probs.size() - 1);
    double acc = 0;
    for (std::size_t v = 0; v < probs.size(); ++v) {
      acc += probs[v];
      if (u < acc) {
        tok = static_cast<TokenId>(v);
        break;
      }
    }

    bool is_code;
    if (tok == voc.newline()) {
      is_code = true;
      in_comment = false;
    } else if (in_comment) {
      is_code = false;
    } else if (tok == voc.hash()) {
      is_code = true;
      in_comment = true;
    } else {
      is_code = voc.is_code(tok);
    }

    rec.trace.push_back({tok, gate.hard, sel.in_green[tok] != 0, std::log(probs[tok]), useed, is_code});
    rec.completion.push_back(tok);
    prefix.push_back(tok);
    if (cfg.stop_at_end && tok == voc.end()) break;
  }
  return rec;
}

std::vector<PositionDecision> reconstruct_decisions(const policy::PolicyParams& params,
                                                    std::span<const TokenId> s,
                                                    const WatermarkConfig& cfg) {
  const Vocabulary& voc = Vocabulary::standard();
  const int c = params.cfg.context;
  std::vector<PositionDecision> out;
  out.reserve(s.size());
  for (std::size_t t = 0; t < s.size(); ++t) {
    std::vector<TokenId> ctx = context_window(s.subspan(0, t), c, voc.pad());
    policy::PolicyOutput po = policy::policy_forward(params, ctx);
    policy::WGate gate = apply_override(policy::gate_decision(po.w_phi, cfg.switch_threshold),
                                        cfg.gate_override);
    policy::GreenSelection sel = select_green(po.l_phi, cfg, noise_seed(cfg.key, ctx));
    out.push_back({gate.hard, sel.in_green[s[t]] != 0});
  }
  return out;
}

double z_score(std::int64_t n_green, std::int64_t t, double gamma) {
  if (t < 1) throw DomainError("z-score requires T >= 1");
  if (n_green < 0 || n_green > t) throw DomainError("N_G must lie in [0, T]");
  if (!(gamma > 0 && gamma < 1)) throw DomainError("gamma must be in (0,1)");
  double T = static_cast<double>(t);
  return (static_cast<double>(n_green) - T * gamma) / std::sqrt(T * gamma * (1.0 - gamma));
}

const char* verdict_name(Verdict v) {
  switch (v) {
    case Verdict::watermarked: return "watermarked";
    case Verdict::not_watermarked: return "not_watermarked";
    case Verdict::insufficient_data: return "insufficient_data";
  }
  return "?";
}

DetectionReport detect(const policy::PolicyParams& params, std::span<const TokenId> s,
                       const WatermarkConfig& cfg) {
  DetectionReport rep;
  rep.per_position = reconstruct_decisions(params, s, cfg);
  for (const PositionDecision& d : rep.per_position) {
    if (d.gate) {
      ++rep.T;
      if (d.in_green) ++rep.N_G;
    }
  }
  if (rep.T < cfg.t_min) {
    rep.verdict = Verdict::insufficient_data;
    return rep;
  }
  rep.z = z_score(rep.N_G, rep.T, cfg.gamma);
  rep.verdict = *rep.z > cfg.tau ? Verdict::watermarked : Verdict::not_watermarked;
  return rep;
}

TraceStats trace_stats(const GenerationRecord& rec, double gamma) {
  TraceStats st;
  for (const StepTrace& t : rec.trace) {
    if (t.gate) {
      ++st.T;
      if (t.in_green) ++st.n_green;
    }
  }
  if (st.T >= 1) st.z = z_score(st.n_green, st.T, gamma);
  return st;
}

// ---------------------------------------------------------------------------

double WatermarkStep::forward(const policy::PolicyParams& params, const WatermarkConfig& cfg) {
  policy::PolicyOutput out = policy::policy_forward(params, ctx, &ws);
  w_phi = out.w_phi;
  l_phi = std::move(out.l_phi);
  gate = apply_override(policy::gate_decision(w_phi, cfg.switch_threshold), cfg.gate_override);
  sel = policy::green_selection_with_u(l_phi, cfg.gamma, u);
  double theta = freeze_theta ? frozen_theta : sel.theta_k;
  S = policy::membership_relaxation_at(sel.g, theta, cfg.relax_temperature);

  w_val = relaxed ? gate.relaxed : (gate.hard ? 1.0 : 0.0);
  if (cfg.gate_override == GateOverride::force_on) w_val = 1.0;
  if (cfg.gate_override == GateOverride::force_off) w_val = 0.0;

  std::vector<double> ltilde = base_logits;
  for (std::size_t j = 0; j < ltilde.size(); ++j) {
    double lg = relaxed ? S[j] : static_cast<double>(sel.in_green[j]);
    ltilde[j] += w_val * cfg.delta * lg;
  }
  probs = lm::softmax(ltilde, cfg.temperature);
  logp = std::log(probs[sampled]);
  return logp;
}

double WatermarkStep::kl_to(std::span<const double> ref_probs) const {
  double kl = 0;
  for (std::size_t j = 0; j < probs.size(); ++j)
    if (probs[j] > 0) kl += probs[j] * (std::log(probs[j]) - std::log(ref_probs[j]));
  return kl;
}

double WatermarkStep::gate_neg_entropy() const {
  double s = policy::sigmoid(w_phi);
  double eps = 1e-12;
  return s * std::log(s + eps) + (1 - s) * std::log(1 - s + eps);
}

double WatermarkStep::r3_value(double alpha) const {
  double lg = relaxed ? S[sampled] : static_cast<double>(sel.in_green[sampled]);
  return w_val * ((1.0 + alpha) * lg - alpha);
}

void WatermarkStep::backward(const policy::PolicyParams& params, const WatermarkConfig& cfg,
                             double dlogp, std::span<const double> ref_probs, double kl_scale,
                             double ent_scale, double r3_scale, double alpha,
                             policy::PolicyParams& grads) const {
  const std::size_t V = probs.size();
  std::vector<double> dltilde(V, 0.0);

  if (dlogp != 0.0) {
    for (std::size_t j = 0; j < V; ++j)
      dltilde[j] += dlogp * (((static_cast<TokenId>(j) == sampled) ? 1.0 : 0.0) - probs[j]) /
                    cfg.temperature;
  }
  if (kl_scale != 0.0 && !ref_probs.empty()) {
    double kl = kl_to(ref_probs);
    for (std::size_t j = 0; j < V; ++j) {
      double lr = std::log(probs[j]) - std::log(ref_probs[j]);
      dltilde[j] += kl_scale * probs[j] * (lr - kl) / cfg.temperature;
    }
  }

  // Chain through the bias: ltilde_j = base_j + w·delta·lg_j. Forward values
  // (hard or relaxed) appear in the product rule; gradients route through
  // sigmoid(w_phi) and S(g) as the straight-through estimators prescribe.
  double d_wval = 0;
  std::vector<double> d_lphi(V, 0.0);
  for (std::size_t j = 0; j < V; ++j) {
    if (dltilde[j] == 0.0) continue;
    double lg = relaxed ? S[j] : static_cast<double>(sel.in_green[j]);
    d_wval += dltilde[j] * cfg.delta * lg;
    double dS = dltilde[j] * cfg.delta * w_val * S[j] * (1 - S[j]) / cfg.relax_temperature;
    d_lphi[j] += dS;  // g = l_phi + gumbel(u), u and theta_k constant
  }

  if (r3_scale != 0.0) {
    double lg_s = relaxed ? S[sampled] : static_cast<double>(sel.in_green[sampled]);
    d_wval += r3_scale * ((1.0 + alpha) * lg_s - alpha);
    d_lphi[sampled] +=
        r3_scale * w_val * (1.0 + alpha) * S[sampled] * (1 - S[sampled]) / cfg.relax_temperature;
  }

  double sig = policy::sigmoid(w_phi);
  double d_wphi = 0;
  if (cfg.gate_override == GateOverride::none) d_wphi += d_wval * sig * (1 - sig);
  if (ent_scale != 0.0) {
    double eps = 1e-12;
    d_wphi += ent_scale * sig * (1 - sig) * (std::log(sig + eps) - std::log(1 - sig + eps));
  }

  policy::policy_backward(params, ws, d_wphi, d_lphi, grads);
}

}  // namespace minimark::codec
