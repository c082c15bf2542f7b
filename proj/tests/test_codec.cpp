#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "minimark/codec.hpp"
#include "minimark/corpus.hpp"
#include "minimark/errors.hpp"
#include "minimark/gradcheck.hpp"

using namespace minimark;
using namespace minimark::codec;
using minilang::TokenId;
using minilang::Vocabulary;

namespace {

const Vocabulary& V = Vocabulary::standard();

policy::PolicyConfig small_policy() {
  policy::PolicyConfig c;
  c.context = 4;
  c.dim = 32;
  c.layers = 2;
  c.heads = 4;
  c.ffn = 64;
  return c;
}

struct Fixture {
  std::vector<corpus::Task> tasks;
  lm::BaseLM model;
  policy::PolicyParams params;

  Fixture()
      : tasks(make_tasks()),
        model(lm::BaseLM::fit(tasks, 14, 0.001, V)),
        params(policy::PolicyParams::init(small_policy(), V, 17)) {}

  static std::vector<corpus::Task> make_tasks() {
    const corpus::TemplatePool& pool = corpus::TemplatePool::standard();
    std::vector<corpus::Task> t;
    for (int i = 0; i < 400; ++i) t.push_back(corpus::sample_task(pool, mix64(0xF00D, i)));
    return t;
  }
};

Fixture& fixture() {
  static Fixture f;
  return f;
}

double chi2_critical(int df, double alpha_tail) {
  // Wilson-Hilferty approximation; alpha_tail = upper tail probability
  double z = alpha_tail == 0.001 ? 3.0902 : 2.3263;  // 0.001 / 0.01
  double a = 2.0 / (9.0 * df);
  double t = 1.0 - a + z * std::sqrt(a);
  return df * t * t * t;
}

}  // namespace

TEST_CASE("bias_logits") {
  std::vector<double> l(V.size(), 0.0);
  l[5] = 0.3;
  std::vector<double> membership(V.size(), 0.0);
  membership[5] = 1.0;

  policy::WGate off = policy::gate_decision(-5.0, 0.5);
  std::vector<double> same = bias_logits(l, off, membership, 2.0);
  CHECK(same == l);  // w = 0: untouched

  policy::WGate on = policy::gate_decision(5.0, 0.5);
  std::vector<double> biased = bias_logits(l, on, membership, 2.0);
  CHECK(biased[5] == doctest::Approx(2.3));
  CHECK(biased[6] == 0.0);

  // softmax green mass is nondecreasing in delta
  Rng rng(3);
  std::vector<double> rl(V.size());
  for (double& x : rl) x = rng.next_gaussian();
  std::vector<double> mem(V.size(), 0.0);
  for (int v = 0; v < V.size(); v += 2) mem[v] = 1.0;
  double prev = -1;
  for (double delta : {0.0, 1.0, 2.0, 4.0, 8.0}) {
    std::vector<double> lt = bias_logits(rl, on, mem, delta);
    std::vector<double> p = lm::softmax(lt);
    double mass = 0;
    for (int v = 0; v < V.size(); v += 2) mass += p[v];
    CHECK(mass >= prev);
    prev = mass;
  }
}

TEST_CASE("z score") {
  CHECK(z_score(50, 100, 0.5) == 0.0);
  CHECK(z_score(75, 100, 0.5) == doctest::Approx(5.0).epsilon(1e-12));
  CHECK(z_score(30, 40, 0.5) == doctest::Approx(3.1623).epsilon(1e-4));
  CHECK(z_score(90, 100, 0.5) == doctest::Approx(8.0).epsilon(1e-12));
  CHECK_THROWS_AS(z_score(5, 4, 0.5), DomainError);
  CHECK_THROWS_AS(z_score(0, 0, 0.5), DomainError);

  // strictly increasing in N_G
  double last = -100;
  for (int ng = 0; ng <= 40; ++ng) {
    double z = z_score(ng, 40, 0.5);
    CHECK(z > last);
    last = z;
  }
}

TEST_CASE("detect verdicts: insufficient data and threshold") {
  Fixture& f = fixture();
  WatermarkConfig cfg;

  DetectionReport empty = detect(f.params, std::vector<TokenId>{}, cfg);
  CHECK(empty.verdict == Verdict::insufficient_data);
  CHECK(empty.T == 0);
  CHECK(!empty.z.has_value());

  std::vector<TokenId> pads(6, V.pad());
  DetectionReport padded = detect(f.params, pads, cfg);
  CHECK(padded.T <= 6);  // below t_min either way
  CHECK(padded.verdict == Verdict::insufficient_data);

  // forced-gate watermarked long generation is detected
  WatermarkConfig strong;
  strong.gate_override = GateOverride::force_on;
  strong.delta = 4.0;
  strong.stop_at_end = false;
  strong.max_completion = 150;
  for (int s = 0; s < 3; ++s) {
    Rng rng(mix64(5, s));
    codec::GenerationRecord rec =
        generate_watermarked(f.model, f.params, f.tasks[s].prompt.ids, strong, rng);
    DetectionReport rep = detect(f.params, rec.completion, strong);
    REQUIRE(rep.z.has_value());
    CHECK(rep.T == 150);
    CHECK(*rep.z > strong.tau);
    CHECK(rep.verdict == Verdict::watermarked);
  }
}

TEST_CASE("generation determinism") {
  Fixture& f = fixture();
  WatermarkConfig cfg;
  Rng r1(42), r2(42);
  GenerationRecord a = generate_watermarked(f.model, f.params, f.tasks[1].prompt.ids, cfg, r1);
  GenerationRecord b = generate_watermarked(f.model, f.params, f.tasks[1].prompt.ids, cfg, r2);
  CHECK(a.completion == b.completion);
  REQUIRE(a.trace.size() == b.trace.size());
  for (std::size_t i = 0; i < a.trace.size(); ++i) {
    CHECK(a.trace[i].gate == b.trace[i].gate);
    CHECK(a.trace[i].in_green == b.trace[i].in_green);
    CHECK(a.trace[i].logp == b.trace[i].logp);
    CHECK(a.trace[i].noise_seed == b.trace[i].noise_seed);
    CHECK(a.trace[i].is_code == b.trace[i].is_code);
  }
}

TEST_CASE("round trip: reconstruction equals the generation trace") {
  Fixture& f = fixture();
  WatermarkConfig cfg;
  for (int i = 0; i < 50; ++i) {
    Rng rng(mix64(777, i));
    GenerationRecord rec =
        generate_watermarked(f.model, f.params, f.tasks[i % f.tasks.size()].prompt.ids, cfg, rng);
    std::vector<PositionDecision> dec = reconstruct_decisions(f.params, rec.completion, cfg);
    REQUIRE(dec.size() == rec.trace.size());
    for (std::size_t t = 0; t < dec.size(); ++t) {
      CHECK(dec[t].gate == rec.trace[t].gate);
      CHECK(dec[t].in_green == rec.trace[t].in_green);
    }
  }
}

TEST_CASE("reconstruction locality: a flip touches at most c+1 positions") {
  Fixture& f = fixture();
  WatermarkConfig cfg;
  Rng rng(31);
  GenerationRecord rec = generate_watermarked(f.model, f.params, f.tasks[3].prompt.ids, cfg, rng);
  REQUIRE(rec.completion.size() >= 8);
  std::vector<PositionDecision> before = reconstruct_decisions(f.params, rec.completion, cfg);

  std::vector<TokenId> flipped = rec.completion;
  std::size_t t = rec.completion.size() / 2;
  flipped[t] = flipped[t] == V.digit_token(3) ? V.digit_token(4) : V.digit_token(3);
  std::vector<PositionDecision> after = reconstruct_decisions(f.params, flipped, cfg);

  const int c = f.params.cfg.context;
  for (std::size_t j = 0; j < before.size(); ++j) {
    if (j < t || j > t + static_cast<std::size_t>(c)) {
      CHECK(before[j].gate == after[j].gate);
      CHECK(before[j].in_green == after[j].in_green);
    }
  }

  // shorter-than-window sequences reconstruct fine
  std::vector<TokenId> tiny{V.kw_return()};
  CHECK(reconstruct_decisions(f.params, tiny, cfg).size() == 1);
}

TEST_CASE("delta=0 leaves the sampling distribution exactly at the base model") {
  Fixture& f = fixture();
  WatermarkConfig cfg;
  cfg.delta = 0.0;
  cfg.max_completion = 1;

  const int draws = 20000;
  Rng rng(99);
  for (int pi = 0; pi < 5; ++pi) {
    const std::vector<TokenId>& prompt = f.tasks[pi].prompt.ids;
    std::vector<double> expected = lm::softmax(f.model.next_logits(prompt));
    std::vector<int> counts(V.size(), 0);
    for (int d = 0; d < draws; ++d) {
      GenerationRecord rec = generate_watermarked(f.model, f.params, prompt, cfg, rng);
      ++counts[rec.completion[0]];
    }
    // chi-squared with cells of expected count >= 5 merged into a tail cell
    double chi2 = 0;
    int cells = 0;
    double tail_exp = 0;
    int tail_obs = 0;
    for (int v = 0; v < V.size(); ++v) {
      double e = expected[v] * draws;
      if (e < 5.0) {
        tail_exp += e;
        tail_obs += counts[v];
      } else {
        chi2 += (counts[v] - e) * (counts[v] - e) / e;
        ++cells;
      }
    }
    if (tail_exp > 0) {
      chi2 += (tail_obs - tail_exp) * (tail_obs - tail_exp) / tail_exp;
      ++cells;
    }
    double crit = chi2_critical(cells - 1, 0.001);
    MESSAGE("prefix ", pi, ": chi2 ", chi2, " crit ", crit, " cells ", cells);
    CHECK(chi2 < crit);
  }
}

TEST_CASE("forced gate with large delta pushes code tokens green") {
  Fixture& f = fixture();
  WatermarkConfig cfg;
  cfg.gate_override = GateOverride::force_on;
  cfg.delta = 8.0;
  double green = 0, total = 0;
  for (int i = 0; i < 50; ++i) {
    Rng rng(mix64(4242, i));
    GenerationRecord rec =
        generate_watermarked(f.model, f.params, f.tasks[i % f.tasks.size()].prompt.ids, cfg, rng);
    for (const StepTrace& t : rec.trace) {
      if (!t.is_code) continue;
      total += 1;
      green += t.in_green ? 1 : 0;
    }
  }
  REQUIRE(total > 0);
  CHECK(green / total > 0.5);
}

TEST_CASE("null calibration snapshot for unwatermarked text") {
  Fixture& f = fixture();
  WatermarkConfig gen_cfg;
  gen_cfg.gate_override = GateOverride::force_off;
  gen_cfg.stop_at_end = false;
  gen_cfg.max_completion = 120;
  WatermarkConfig det_cfg;  // natural policy gate at detection

  const int n = 200;
  std::vector<double> zs;
  int verdicts = 0;
  for (int i = 0; i < n; ++i) {
    Rng rng(mix64(0xBAD5EED, i));
    GenerationRecord rec =
        generate_watermarked(f.model, f.params, f.tasks[i % f.tasks.size()].prompt.ids, gen_cfg, rng);
    DetectionReport rep = detect(f.params, rec.completion, det_cfg);
    REQUIRE(rep.z.has_value());
    zs.push_back(*rep.z);
    if (rep.verdict == Verdict::watermarked) ++verdicts;
  }
  double mean = 0;
  for (double z : zs) mean += z;
  mean /= n;
  double var = 0;
  for (double z : zs) var += (z - mean) * (z - mean);
  double sd = std::sqrt(var / n);
  MESSAGE("null z: mean ", mean, " sd ", sd, " verdicts ", verdicts);
  CHECK(std::abs(mean) < 0.4);
  CHECK(sd > 0.6);
  CHECK(sd < 1.4);
  CHECK(verdicts <= n / 50);
}

TEST_CASE("pipeline gradients match finite differences on the relaxed path") {
  Fixture& f = fixture();
  WatermarkConfig cfg;

  Rng rng(55);
  for (int point = 0; point < 5; ++point) {
    policy::PolicyParams params = policy::PolicyParams::init(small_policy(), V, mix64(300, point));
    WatermarkStep step;
    step.ctx = {V.pad(), V.kw_return(), *V.id_of("a"), V.op_plus()};
    step.base_logits = f.model.next_logits(f.tasks[point].prompt.ids);
    step.sampled = static_cast<TokenId>(rng.next_below(V.size()));
    step.u.resize(V.size());
    for (double& x : step.u) x = rng.next_unit();
    step.relaxed = true;

    // freeze theta at the base point
    WatermarkStep probe = step;
    probe.forward(params, cfg);
    step.freeze_theta = true;
    step.frozen_theta = probe.sel.theta_k;

    WatermarkStep at = step;
    at.forward(params, cfg);
    policy::PolicyParams grads = policy::PolicyParams::zeros_like(params);
    at.backward(params, cfg, 1.0, {}, 0.0, 0.0, 0.0, 3.0, grads);

    auto fval = [&](const policy::PolicyParams& q) {
      WatermarkStep s = step;
      return s.forward(q, cfg);
    };
    Rng crng(mix64(77, point));
    std::vector<policy::ParamCoord> coords = policy::sample_coords(params, 40, crng);
    double err = policy::gradient_check(params, fval, grads, coords, 1e-5);
    MESSAGE("pipeline gradcheck point ", point, ": max rel err ", err);
    CHECK(err < 1e-4);
  }
}

TEST_CASE("STE sanity: green sampled token never gets negative gate gradient") {
  Fixture& f = fixture();
  WatermarkConfig cfg;
  Rng rng(66);
  int checked = 0;
  for (int it = 0; it < 200; ++it) {
    policy::PolicyParams params = policy::PolicyParams::init(small_policy(), V, mix64(400, it));
    WatermarkStep step;
    step.ctx = codec::context_window(f.tasks[it % 50].reference.ids, 4, V.pad());
    step.base_logits = f.model.next_logits(f.tasks[it % 50].prompt.ids);
    step.u.resize(V.size());
    for (double& x : step.u) x = rng.next_unit();
    step.relaxed = false;
    step.forward(params, cfg);
    if (!step.gate.hard) continue;
    // pick a sampled token inside G
    step.sampled = step.sel.green[it % step.sel.green.size()];
    step.forward(params, cfg);

    // analytic d logp / d w_phi via the straight-through route
    double green_mass = 0;
    for (int v : step.sel.green) green_mass += step.probs[v];
    double d_wval = cfg.delta * (1.0 - green_mass) / cfg.temperature;
    double sig = policy::sigmoid(step.w_phi);
    double d_wphi = d_wval * sig * (1 - sig);
    CHECK(d_wphi >= 0.0);
    ++checked;
  }
  CHECK(checked > 50);
}

TEST_CASE("keyed hash noise: same context same list, key changes the list") {
  Fixture& f = fixture();
  std::vector<TokenId> ctx = {V.pad(), V.kw_let(), *V.id_of("t"), V.assign()};
  std::uint64_t s1 = noise_seed(1, ctx);
  std::uint64_t s2 = noise_seed(1, ctx);
  std::uint64_t s3 = noise_seed(2, ctx);
  CHECK(s1 == s2);
  CHECK(s1 != s3);

  policy::PolicyOutput out = policy::policy_forward(f.params, ctx);
  auto a = policy::green_selection_with_u(out.l_phi, 0.5, derive_u(s1, V.size()));
  auto b = policy::green_selection_with_u(out.l_phi, 0.5, derive_u(s2, V.size()));
  auto c = policy::green_selection_with_u(out.l_phi, 0.5, derive_u(s3, V.size()));
  CHECK(a.green == b.green);
  CHECK(a.green != c.green);
}

TEST_CASE("trace stats and config validation") {
  GenerationRecord rec;
  rec.trace.push_back({0, true, true, -0.5, 1, true});
  rec.trace.push_back({1, false, true, -0.5, 2, true});
  rec.trace.push_back({2, true, false, -0.5, 3, true});
  TraceStats st = trace_stats(rec, 0.5);
  CHECK(st.T == 2);
  CHECK(st.n_green == 1);
  CHECK(st.z.has_value());

  WatermarkConfig bad;
  bad.gamma = 0.001;  // k = 0
  CHECK_THROWS_AS(bad.validate(V.size()), DomainError);
  WatermarkConfig neg;
  neg.delta = -1;
  CHECK_THROWS_AS(neg.validate(V.size()), DomainError);
}
