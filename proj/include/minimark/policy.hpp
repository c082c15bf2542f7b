#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "minimark/rng.hpp"
#include "minimark/tensor.hpp"
#include "minimark/vocab.hpp"

namespace minimark::policy {

using minilang::TokenId;

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

struct PolicyConfig {
  int context = 4;  // window length c
  int dim = 64;
  int layers = 2;
  int heads = 4;
  int ffn = 256;
  double dropout = 0.0;
  // Watermark defaults the policy was trained with; recorded in checkpoints.
  double gamma = 0.5;
  double delta = 2.0;
  std::uint64_t vocab_fp = 0;

  void validate(int vocab_size) const;
};

struct LayerParams {
  Tensor ln1_g, ln1_b;
  Tensor wq, wk, wv, wo;
  Tensor bq, bk, bv, bo;
  Tensor ln2_g, ln2_b;
  Tensor w1, b1, w2, b2;
};

/// Trainable watermark model: pre-norm transformer encoder over a fixed-width
/// token window, projecting the last position to |V|+1 outputs (w_phi, l_phi).
struct PolicyParams {
  PolicyConfig cfg;
  Tensor tok_emb;  // V×d
  Tensor pos_emb;  // c×d
  std::vector<LayerParams> layers;
  Tensor lnf_g, lnf_b;
  Tensor w_out, b_out;  // d×(V+1), 1×(V+1)

  static PolicyParams init(const PolicyConfig& cfg, const minilang::Vocabulary& vocab,
                           std::uint64_t seed);
  static PolicyParams zeros_like(const PolicyParams& p);
  std::uint64_t params_hash() const;
};

/// Visits every tensor with a stable name; the order defines the checkpoint
/// tensor-block layout and the coordinate space of gradient checking.
template <typename P, typename F>
void for_each_tensor(P& p, F&& f) {
  f("tok_emb", p.tok_emb);
  f("pos_emb", p.pos_emb);
  for (std::size_t l = 0; l < p.layers.size(); ++l) {
    auto& L = p.layers[l];
    const std::string pre = "layer" + std::to_string(l) + ".";
    f(pre + "ln1_g", L.ln1_g);
    f(pre + "ln1_b", L.ln1_b);
    f(pre + "wq", L.wq);
    f(pre + "bq", L.bq);
    f(pre + "wk", L.wk);
    f(pre + "bk", L.bk);
    f(pre + "wv", L.wv);
    f(pre + "bv", L.bv);
    f(pre + "wo", L.wo);
    f(pre + "bo", L.bo);
    f(pre + "ln2_g", L.ln2_g);
    f(pre + "ln2_b", L.ln2_b);
    f(pre + "w1", L.w1);
    f(pre + "b1", L.b1);
    f(pre + "w2", L.w2);
    f(pre + "b2", L.b2);
  }
  f("lnf_g", p.lnf_g);
  f("lnf_b", p.lnf_b);
  f("w_out", p.w_out);
  f("b_out", p.b_out);
}

struct PolicyWorkspace {
  std::vector<TokenId> ctx;
  Tensor x0;
  std::vector<double> drop_mask;  // empty when dropout is off
  struct LayerCache {
    Tensor x_in, n1;
    std::vector<double> mu1, is1;
    Tensor q, k, v;
    std::vector<Tensor> att;  // per head, c×c row-softmax
    Tensor att_concat;
    Tensor x_mid, n2;
    std::vector<double> mu2, is2;
    Tensor ffn_pre, ffn_act, x_out;
  };
  std::vector<LayerCache> layers;
  Tensor nf;  // only the last row is read by the head
  std::vector<double> muf, isf;
  std::vector<double> out;  // V+1
};

struct PolicyOutput {
  double w_phi = 0;
  std::vector<double> l_phi;
};

/// Deterministic in (params, ctx) when dropout is off. Throws ShapeMismatch if
/// ctx length differs from the configured window. `dropout_rng` enables the
/// embedding dropout used during training only.
PolicyOutput policy_forward(const PolicyParams& params, std::span<const TokenId> ctx,
                            PolicyWorkspace* ws = nullptr, Rng* dropout_rng = nullptr);

/// Accumulates parameter gradients for the scalar loss with the given head
/// gradients. Requires the workspace of the matching forward call.
void policy_backward(const PolicyParams& params, const PolicyWorkspace& ws, double d_wphi,
                     std::span<const double> d_lphi, PolicyParams& grads);

// ---------------------------------------------------------------------------
// Discrete action machinery

struct WGate {
  bool hard = false;     // forward value
  double relaxed = 0.5;  // sigmoid(w_phi): the gradient carrier
  double raw = 0.0;
};

/// Straight-through gate: hard fires iff sigmoid(w_phi) > threshold (strict).
WGate gate_decision(double w_phi, double switch_threshold);

struct GreenSelection {
  int k = 0;
  std::vector<double> u;       // uniform noise, retained for replay
  std::vector<double> g;       // perturbed logits
  std::vector<char> in_green;  // hard membership indicator
  std::vector<int> green;      // selected ids, ascending
  double theta_k = 0.0;        // midpoint between k-th and (k+1)-th largest g
};

/// Gumbel-Top-k: g = l_phi − log(−log(u)), G = top-k(g) with ties broken by
/// lower token id; k = floor(gamma·|V|), which must be >= 1.
GreenSelection green_selection_with_u(std::span<const double> l_phi, double gamma,
                                      std::span<const double> u);
GreenSelection gumbel_green_selection(std::span<const double> l_phi, double gamma, Rng& rng);
/// Ablation mode: constant u, i.e. plain top-k of l_phi.
GreenSelection green_selection_noiseless(std::span<const double> l_phi, double gamma);

/// S(g)_v = sigmoid((g_v − theta_k)/relax_temperature) with theta_k constant.
std::vector<double> membership_relaxation(std::span<const double> g, int k,
                                          double relax_temperature);
std::vector<double> membership_relaxation_at(std::span<const double> g, double theta_k,
                                             double relax_temperature);

// ---------------------------------------------------------------------------
// Checkpoints: header (format version, config, vocabulary hash) followed by
// named tensor blocks of little-endian 64-bit floats; byte-exact round trip.

void save_checkpoint(const PolicyParams& params, const std::string& path);
PolicyParams load_checkpoint(const std::string& path, const minilang::Vocabulary& vocab);

}  // namespace minimark::policy
