#include "minimark/policy.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>
#include <numeric>

#include "minimark/errors.hpp"
#include "minimark/io_util.hpp"

namespace minimark::policy {

namespace {

constexpr double kLnEps = 1e-5;

void layernorm_forward(const Tensor& x, const Tensor& g, const Tensor& b, Tensor& y,
                       std::vector<double>& mu, std::vector<double>& istd) {
  y = Tensor(x.rows, x.cols);
  mu.assign(x.rows, 0.0);
  istd.assign(x.rows, 0.0);
  const int n = x.cols;
  for (int i = 0; i < x.rows; ++i) {
    double m = 0;
    for (int j = 0; j < n; ++j) m += x.at(i, j);
    m /= n;
    double var = 0;
    for (int j = 0; j < n; ++j) {
      double d = x.at(i, j) - m;
      var += d * d;
    }
    var /= n;
    double is = 1.0 / std::sqrt(var + kLnEps);
    mu[i] = m;
    istd[i] = is;
    for (int j = 0; j < n; ++j) y.at(i, j) = g.at(0, j) * (x.at(i, j) - m) * is + b.at(0, j);
  }
}

void layernorm_backward(const Tensor& x, const Tensor& g, const std::vector<double>& mu,
                        const std::vector<double>& istd, const Tensor& dy, Tensor& dx, Tensor& dg,
                        Tensor& db) {
  dx = Tensor(x.rows, x.cols);
  const int n = x.cols;
  for (int i = 0; i < x.rows; ++i) {
    const double m = mu[i];
    const double is = istd[i];
    double mean_dxh = 0, mean_dxh_xh = 0;
    for (int j = 0; j < n; ++j) {
      double xh = (x.at(i, j) - m) * is;
      double dyv = dy.at(i, j);
      double dxh = dyv * g.at(0, j);
      dg.at(0, j) += dyv * xh;
      db.at(0, j) += dyv;
      mean_dxh += dxh;
      mean_dxh_xh += dxh * xh;
    }
    mean_dxh /= n;
    mean_dxh_xh /= n;
    for (int j = 0; j < n; ++j) {
      double xh = (x.at(i, j) - m) * is;
      double dxh = dy.at(i, j) * g.at(0, j);
      dx.at(i, j) = is * (dxh - mean_dxh - xh * mean_dxh_xh);
    }
  }
}

PolicyParams make_shaped(const PolicyConfig& cfg, int vocab_size) {
  PolicyParams p;
  p.cfg = cfg;
  const int d = cfg.dim, c = cfg.context, f = cfg.ffn;
  p.tok_emb = Tensor(vocab_size, d);
  p.pos_emb = Tensor(c, d);
  p.layers.resize(cfg.layers);
  for (auto& L : p.layers) {
    L.ln1_g = Tensor(1, d);
    L.ln1_b = Tensor(1, d);
    L.wq = Tensor(d, d);
    L.wk = Tensor(d, d);
    L.wv = Tensor(d, d);
    L.wo = Tensor(d, d);
    L.bq = Tensor(1, d);
    L.bk = Tensor(1, d);
    L.bv = Tensor(1, d);
    L.bo = Tensor(1, d);
    L.ln2_g = Tensor(1, d);
    L.ln2_b = Tensor(1, d);
    L.w1 = Tensor(d, f);
    L.b1 = Tensor(1, f);
    L.w2 = Tensor(f, d);
    L.b2 = Tensor(1, d);
  }
  p.lnf_g = Tensor(1, d);
  p.lnf_b = Tensor(1, d);
  p.w_out = Tensor(d, vocab_size + 1);
  p.b_out = Tensor(1, vocab_size + 1);
  return p;
}

}  // namespace

void PolicyConfig::validate(int vocab_size) const {
  if (context < 1) throw DomainError("context window must be >= 1");
  if (dim < 1 || layers < 1 || ffn < 1 || heads < 1) throw DomainError("bad policy dimensions");
  if (dim % heads != 0) throw DomainError("dim must be divisible by heads");
  if (dropout < 0 || dropout >= 1) throw DomainError("dropout must be in [0,1)");
  if (vocab_size < 2) throw DomainError("vocabulary too small");
}

PolicyParams PolicyParams::init(const PolicyConfig& cfg, const minilang::Vocabulary& vocab,
                                std::uint64_t seed) {
  cfg.validate(vocab.size());
  PolicyConfig c2 = cfg;
  c2.vocab_fp = vocab.fingerprint();
  PolicyParams p = make_shaped(c2, vocab.size());
  Rng rng(mix64(seed, 0x706f6c696379ull));
  const double s = 0.02;
  p.tok_emb.fill_gaussian(rng, s);
  p.pos_emb.fill_gaussian(rng, s);
  for (auto& L : p.layers) {
    L.ln1_g.fill(1.0);
    L.wq.fill_gaussian(rng, s);
    L.wk.fill_gaussian(rng, s);
    L.wv.fill_gaussian(rng, s);
    L.wo.fill_gaussian(rng, s);
    L.ln2_g.fill(1.0);
    L.w1.fill_gaussian(rng, s);
    L.w2.fill_gaussian(rng, s);
  }
  p.lnf_g.fill(1.0);
  p.w_out.fill_gaussian(rng, s);
  return p;
}

PolicyParams PolicyParams::zeros_like(const PolicyParams& p) {
  PolicyParams z = p;
  for_each_tensor(z, [](const std::string&, Tensor& t) { t.zero(); });
  return z;
}

std::uint64_t PolicyParams::params_hash() const {
  std::uint64_t h = 0x504f4c4943ull;
  for_each_tensor(*this, [&](const std::string& name, const Tensor& t) {
    for (char c : name) h = mix64(h, static_cast<unsigned char>(c));
    h = mix64(h, static_cast<std::uint64_t>(t.rows));
    h = mix64(h, static_cast<std::uint64_t>(t.cols));
    for (double x : t.a) h = mix64(h, std::bit_cast<std::uint64_t>(x));
  });
  return h;
}

PolicyOutput policy_forward(const PolicyParams& params, std::span<const TokenId> ctx,
                            PolicyWorkspace* ws, Rng* dropout_rng) {
  const PolicyConfig& cfg = params.cfg;
  const int c = cfg.context, d = cfg.dim, h = cfg.heads, dh = cfg.dim / cfg.heads;
  if (static_cast<int>(ctx.size()) != c)
    throw ShapeMismatch("context length " + std::to_string(ctx.size()) + " != configured " +
                        std::to_string(c));

  PolicyWorkspace local;
  PolicyWorkspace& w = ws ? *ws : local;
  w.ctx.assign(ctx.begin(), ctx.end());

  w.x0 = Tensor(c, d);
  for (int i = 0; i < c; ++i)
    for (int j = 0; j < d; ++j) w.x0.at(i, j) = params.tok_emb.at(ctx[i], j) + params.pos_emb.at(i, j);

  w.drop_mask.clear();
  if (cfg.dropout > 0 && dropout_rng) {
    w.drop_mask.resize(static_cast<std::size_t>(c) * d);
    const double keep = 1.0 - cfg.dropout;
    for (std::size_t i = 0; i < w.drop_mask.size(); ++i)
      w.drop_mask[i] = dropout_rng->next_unit() < cfg.dropout ? 0.0 : 1.0 / keep;
    for (std::size_t i = 0; i < w.x0.a.size(); ++i) w.x0.a[i] *= w.drop_mask[i];
  }

  w.layers.assign(cfg.layers, {});
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  Tensor x = w.x0;
  for (int l = 0; l < cfg.layers; ++l) {
    auto& L = params.layers[l];
    auto& cache = w.layers[l];
    cache.x_in = x;
    layernorm_forward(cache.x_in, L.ln1_g, L.ln1_b, cache.n1, cache.mu1, cache.is1);
    linear_forward(cache.n1, L.wq, L.bq, cache.q);
    linear_forward(cache.n1, L.wk, L.bk, cache.k);
    linear_forward(cache.n1, L.wv, L.bv, cache.v);

    cache.att.assign(h, Tensor(c, c));
    cache.att_concat = Tensor(c, d);
    for (int a = 0; a < h; ++a) {
      const int base = a * dh;
      Tensor& P = cache.att[a];
      for (int i = 0; i < c; ++i) {
        double mx = -1e300;
        for (int j = 0; j < c; ++j) {
          double s = 0;
          for (int t = 0; t < dh; ++t) s += cache.q.at(i, base + t) * cache.k.at(j, base + t);
          s *= scale;
          P.at(i, j) = s;
          mx = std::max(mx, s);
        }
        double sum = 0;
        for (int j = 0; j < c; ++j) {
          P.at(i, j) = std::exp(P.at(i, j) - mx);
          sum += P.at(i, j);
        }
        for (int j = 0; j < c; ++j) P.at(i, j) /= sum;
        for (int t = 0; t < dh; ++t) {
          double o = 0;
          for (int j = 0; j < c; ++j) o += P.at(i, j) * cache.v.at(j, base + t);
          cache.att_concat.at(i, base + t) = o;
        }
      }
    }
    Tensor attn_out;
    linear_forward(cache.att_concat, L.wo, L.bo, attn_out);
    cache.x_mid = cache.x_in;
    for (std::size_t i = 0; i < cache.x_mid.a.size(); ++i) cache.x_mid.a[i] += attn_out.a[i];

    layernorm_forward(cache.x_mid, L.ln2_g, L.ln2_b, cache.n2, cache.mu2, cache.is2);
    linear_forward(cache.n2, L.w1, L.b1, cache.ffn_pre);
    cache.ffn_act = cache.ffn_pre;
    for (double& v : cache.ffn_act.a) v = v > 0 ? v : 0.0;
    Tensor ffn_out;
    linear_forward(cache.ffn_act, L.w2, L.b2, ffn_out);
    cache.x_out = cache.x_mid;
    for (std::size_t i = 0; i < cache.x_out.a.size(); ++i) cache.x_out.a[i] += ffn_out.a[i];
    x = cache.x_out;
  }

  layernorm_forward(x, params.lnf_g, params.lnf_b, w.nf, w.muf, w.isf);
  const int vout = params.w_out.cols;
  w.out.assign(vout, 0.0);
  for (int j = 0; j < vout; ++j) {
    double s = params.b_out.at(0, j);
    for (int kk = 0; kk < d; ++kk) s += w.nf.at(c - 1, kk) * params.w_out.at(kk, j);
    w.out[j] = s;
  }

  PolicyOutput out;
  out.w_phi = w.out[0];
  out.l_phi.assign(w.out.begin() + 1, w.out.end());
  return out;
}

void policy_backward(const PolicyParams& params, const PolicyWorkspace& w, double d_wphi,
                     std::span<const double> d_lphi, PolicyParams& grads) {
  const PolicyConfig& cfg = params.cfg;
  const int c = cfg.context, d = cfg.dim, h = cfg.heads, dh = cfg.dim / cfg.heads;
  const int vout = params.w_out.cols;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));

  std::vector<double> dy(vout, 0.0);
  dy[0] = d_wphi;
  for (int j = 1; j < vout; ++j) dy[j] = d_lphi[j - 1];

  // Output head.
  Tensor d_nf(c, d);
  for (int j = 0; j < vout; ++j) {
    double g = dy[j];
    if (g == 0.0) continue;
    grads.b_out.at(0, j) += g;
    for (int kk = 0; kk < d; ++kk) {
      grads.w_out.at(kk, j) += w.nf.at(c - 1, kk) * g;
      d_nf.at(c - 1, kk) += g * params.w_out.at(kk, j);
    }
  }

  const Tensor& x_last = cfg.layers > 0 ? w.layers.back().x_out : w.x0;
  Tensor dx;
  layernorm_backward(x_last, params.lnf_g, w.muf, w.isf, d_nf, dx, grads.lnf_g, grads.lnf_b);

  for (int l = cfg.layers - 1; l >= 0; --l) {
    const auto& L = params.layers[l];
    auto& G = grads.layers[l];
    const auto& cache = w.layers[l];

    // FFN block: x_out = x_mid + relu(LN2(x_mid)·w1 + b1)·w2 + b2
    Tensor d_act, d_n2, dx_ln2;
    linear_backward(cache.ffn_act, L.w2, dx, d_act, G.w2, G.b2);
    for (std::size_t i = 0; i < d_act.a.size(); ++i)
      if (cache.ffn_pre.a[i] <= 0) d_act.a[i] = 0.0;
    linear_backward(cache.n2, L.w1, d_act, d_n2, G.w1, G.b1);
    layernorm_backward(cache.x_mid, L.ln2_g, cache.mu2, cache.is2, d_n2, dx_ln2, G.ln2_g, G.ln2_b);
    Tensor dx_mid = dx;
    for (std::size_t i = 0; i < dx_mid.a.size(); ++i) dx_mid.a[i] += dx_ln2.a[i];

    // Attention block: x_mid = x_in + (heads(LN1(x_in)))·wo + bo
    Tensor d_att_concat;
    linear_backward(cache.att_concat, L.wo, dx_mid, d_att_concat, G.wo, G.bo);
    Tensor dq(c, d), dk(c, d), dv(c, d);
    for (int a = 0; a < h; ++a) {
      const int base = a * dh;
      const Tensor& P = cache.att[a];
      for (int i = 0; i < c; ++i) {
        std::vector<double> dp(c, 0.0);
        for (int j = 0; j < c; ++j) {
          double s = 0;
          for (int t = 0; t < dh; ++t) s += d_att_concat.at(i, base + t) * cache.v.at(j, base + t);
          dp[j] = s;
          for (int t = 0; t < dh; ++t)
            dv.at(j, base + t) += P.at(i, j) * d_att_concat.at(i, base + t);
        }
        double dot = 0;
        for (int j = 0; j < c; ++j) dot += dp[j] * P.at(i, j);
        for (int j = 0; j < c; ++j) {
          double ds = P.at(i, j) * (dp[j] - dot);
          if (ds == 0.0) continue;
          for (int t = 0; t < dh; ++t) {
            dq.at(i, base + t) += ds * cache.k.at(j, base + t) * scale;
            dk.at(j, base + t) += ds * cache.q.at(i, base + t) * scale;
          }
        }
      }
    }
    Tensor dn1_q, dn1_k, dn1_v, dx_ln1;
    linear_backward(cache.n1, L.wq, dq, dn1_q, G.wq, G.bq);
    linear_backward(cache.n1, L.wk, dk, dn1_k, G.wk, G.bk);
    linear_backward(cache.n1, L.wv, dv, dn1_v, G.wv, G.bv);
    for (std::size_t i = 0; i < dn1_q.a.size(); ++i) dn1_q.a[i] += dn1_k.a[i] + dn1_v.a[i];
    layernorm_backward(cache.x_in, L.ln1_g, cache.mu1, cache.is1, dn1_q, dx_ln1, G.ln1_g, G.ln1_b);
    dx = dx_mid;
    for (std::size_t i = 0; i < dx.a.size(); ++i) dx.a[i] += dx_ln1.a[i];
  }

  // Embeddings.
  if (!w.drop_mask.empty())
    for (std::size_t i = 0; i < dx.a.size(); ++i) dx.a[i] *= w.drop_mask[i];
  for (int i = 0; i < c; ++i)
    for (int j = 0; j < d; ++j) {
      grads.tok_emb.at(w.ctx[i], j) += dx.at(i, j);
      grads.pos_emb.at(i, j) += dx.at(i, j);
    }
}

WGate gate_decision(double w_phi, double switch_threshold) {
  WGate g;
  g.raw = w_phi;
  g.relaxed = sigmoid(w_phi);
  g.hard = g.relaxed > switch_threshold;
  return g;
}

GreenSelection green_selection_with_u(std::span<const double> l_phi, double gamma,
                                      std::span<const double> u) {
  const int V = static_cast<int>(l_phi.size());
  if (!(gamma > 0.0 && gamma < 1.0)) throw DomainError("gamma must be in (0,1)");
  const int k = static_cast<int>(std::floor(gamma * V));
  if (k < 1 || k >= V) throw DomainError("gamma yields an empty green or red list");
  GreenSelection sel;
  sel.k = k;
  sel.u.assign(u.begin(), u.end());
  sel.g.resize(V);
  for (int v = 0; v < V; ++v) sel.g[v] = l_phi[v] - std::log(-std::log(u[v]));
  std::vector<int> idx(V);
  std::iota(idx.begin(), idx.end(), 0);
  std::sort(idx.begin(), idx.end(), [&](int a, int b) {
    if (sel.g[a] != sel.g[b]) return sel.g[a] > sel.g[b];
    return a < b;  // ties broken by lower token id
  });
  sel.in_green.assign(V, 0);
  sel.green.assign(idx.begin(), idx.begin() + k);
  std::sort(sel.green.begin(), sel.green.end());
  for (int v : sel.green) sel.in_green[v] = 1;
  sel.theta_k = 0.5 * (sel.g[idx[k - 1]] + sel.g[idx[k]]);
  return sel;
}

GreenSelection gumbel_green_selection(std::span<const double> l_phi, double gamma, Rng& rng) {
  std::vector<double> u(l_phi.size());
  for (double& x : u) x = rng.next_unit();
  return green_selection_with_u(l_phi, gamma, u);
}

GreenSelection green_selection_noiseless(std::span<const double> l_phi, double gamma) {
  std::vector<double> u(l_phi.size(), 0.5);
  return green_selection_with_u(l_phi, gamma, u);
}

std::vector<double> membership_relaxation_at(std::span<const double> g, double theta_k,
                                             double relax_temperature) {
  if (relax_temperature <= 0) throw DomainError("relax temperature must be > 0");
  std::vector<double> s(g.size());
  for (std::size_t v = 0; v < g.size(); ++v) s[v] = sigmoid((g[v] - theta_k) / relax_temperature);
  return s;
}

std::vector<double> membership_relaxation(std::span<const double> g, int k,
                                          double relax_temperature) {
  const int V = static_cast<int>(g.size());
  if (k < 1 || k >= V) throw DomainError("k out of range");
  std::vector<double> sorted(g.begin(), g.end());
  std::nth_element(sorted.begin(), sorted.begin() + (k - 1), sorted.end(), std::greater<>());
  double gk = sorted[k - 1];
  std::nth_element(sorted.begin(), sorted.begin() + k, sorted.end(), std::greater<>());
  double gk1 = sorted[k];
  return membership_relaxation_at(g, 0.5 * (gk + gk1), relax_temperature);
}

namespace {
constexpr char kCkptMagic[5] = "MMPC";
constexpr std::uint32_t kCkptVersion = 1;
}  // namespace

void save_checkpoint(const PolicyParams& params, const std::string& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open " + path + " for writing");
  io::write_bytes(f, kCkptMagic, 4);
  io::write_pod<std::uint32_t>(f, kCkptVersion);
  const PolicyConfig& c = params.cfg;
  io::write_pod<std::int32_t>(f, c.context);
  io::write_pod<std::int32_t>(f, c.dim);
  io::write_pod<std::int32_t>(f, c.layers);
  io::write_pod<std::int32_t>(f, c.heads);
  io::write_pod<std::int32_t>(f, c.ffn);
  io::write_pod<double>(f, c.dropout);
  io::write_pod<double>(f, c.gamma);
  io::write_pod<double>(f, c.delta);
  io::write_pod<std::uint64_t>(f, c.vocab_fp);
  std::uint32_t n = 0;
  for_each_tensor(params, [&](const std::string&, const Tensor&) { ++n; });
  io::write_pod<std::uint32_t>(f, n);
  for_each_tensor(params, [&](const std::string& name, const Tensor& t) {
    io::write_string(f, name);
    io::write_pod<std::int32_t>(f, t.rows);
    io::write_pod<std::int32_t>(f, t.cols);
    io::write_bytes(f, t.a.data(), t.a.size() * sizeof(double));
  });
  if (!f) throw IoError("failed writing " + path);
}

PolicyParams load_checkpoint(const std::string& path, const minilang::Vocabulary& vocab) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open " + path);
  char magic[4];
  io::read_bytes(f, magic, 4);
  if (std::string(magic, 4) != "MMPC") throw IoError(path + " is not a policy checkpoint");
  auto version = io::read_pod<std::uint32_t>(f);
  if (version != kCkptVersion) throw VersionMismatch("unsupported checkpoint format version");
  PolicyConfig cfg;
  cfg.context = io::read_pod<std::int32_t>(f);
  cfg.dim = io::read_pod<std::int32_t>(f);
  cfg.layers = io::read_pod<std::int32_t>(f);
  cfg.heads = io::read_pod<std::int32_t>(f);
  cfg.ffn = io::read_pod<std::int32_t>(f);
  cfg.dropout = io::read_pod<double>(f);
  cfg.gamma = io::read_pod<double>(f);
  cfg.delta = io::read_pod<double>(f);
  cfg.vocab_fp = io::read_pod<std::uint64_t>(f);
  if (cfg.vocab_fp != vocab.fingerprint())
    throw VocabHashMismatch("checkpoint was trained against a different vocabulary");
  PolicyParams p = make_shaped(cfg, vocab.size());
  auto n = io::read_pod<std::uint32_t>(f);
  std::uint32_t expected = 0;
  for_each_tensor(p, [&](const std::string&, const Tensor&) { ++expected; });
  if (n != expected) throw IoError("checkpoint tensor count mismatch");
  for_each_tensor(p, [&](const std::string& name, Tensor& t) {
    std::string got = io::read_string(f);
    if (got != name) throw IoError("checkpoint tensor order mismatch: " + got + " vs " + name);
    auto rows = io::read_pod<std::int32_t>(f);
    auto cols = io::read_pod<std::int32_t>(f);
    if (rows != t.rows || cols != t.cols) throw IoError("checkpoint tensor shape mismatch: " + name);
    io::read_bytes(f, t.a.data(), t.a.size() * sizeof(double));
  });
  return p;
}

}  // namespace minimark::policy
