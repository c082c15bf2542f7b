#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "minimark/attack.hpp"
#include "minimark/errors.hpp"
#include "minimark/evaluate.hpp"
#include "minimark/metrics.hpp"
#include "minimark/minilang.hpp"

using namespace minimark;
using namespace minimark::eval;
using minilang::TokenId;
using minilang::Vocabulary;

namespace {

const Vocabulary& V = Vocabulary::standard();

double auroc_bruteforce(std::span<const ScoreSample> samples) {
  double num = 0;
  long pairs = 0;
  for (const ScoreSample& p : samples) {
    if (!p.watermarked) continue;
    for (const ScoreSample& n : samples) {
      if (n.watermarked) continue;
      ++pairs;
      if (p.z > n.z)
        num += 1.0;
      else if (p.z == n.z)
        num += 0.5;
    }
  }
  return num / pairs;
}

double pass_at_k_enumeration(int n, int c, int k) {
  // enumerate all C(n,k) index subsets; fraction containing at least one of
  // the first c (passing) samples
  std::vector<int> idx(k);
  for (int i = 0; i < k; ++i) idx[i] = i;
  long total = 0, hit = 0;
  for (;;) {
    ++total;
    bool any = false;
    for (int i = 0; i < k; ++i) any |= idx[i] < c;
    if (any) ++hit;
    int j = k - 1;
    while (j >= 0 && idx[j] == n - k + j) --j;
    if (j < 0) break;
    ++idx[j];
    for (int m = j + 1; m < k; ++m) idx[m] = idx[m - 1] + 1;
  }
  return static_cast<double>(hit) / total;
}

}  // namespace

TEST_CASE("auroc basics and brute-force agreement") {
  std::vector<ScoreSample> perfect;
  for (int i = 0; i < 10; ++i) perfect.push_back({5.0, true, i});
  for (int i = 0; i < 10; ++i) perfect.push_back({0.0, false, 10 + i});
  CHECK(auroc(perfect) == 1.0);

  std::vector<ScoreSample> ties;
  for (int i = 0; i < 20; ++i) ties.push_back({1.5, i % 2 == 0, i});
  CHECK(auroc(ties) == 0.5);

  CHECK_THROWS_AS(auroc(std::vector<ScoreSample>{{1.0, true, 0}}), DegenerateLabels);

  Rng rng(4);
  std::vector<ScoreSample> random;
  for (int i = 0; i < 200; ++i) {
    double z = std::floor(rng.next_gaussian() * 4.0) / 2.0;  // force ties
    random.push_back({z, rng.next_below(2) == 0, i});
  }
  CHECK(std::abs(auroc(random) - auroc_bruteforce(random)) < 1e-12);
}

TEST_CASE("tpr at fixed fpr") {
  std::vector<ScoreSample> perfect;
  for (int i = 0; i < 40; ++i) perfect.push_back({5.0 + i * 0.01, true, i});
  for (int i = 0; i < 40; ++i) perfect.push_back({0.0 - i * 0.01, false, 40 + i});
  CHECK(tpr_at_fpr(perfect, 0.05) == 1.0);

  // hand-enumerated small case: threshold must exclude every negative
  std::vector<ScoreSample> tiny = {
      {3.0, true, 0}, {4.0, true, 1}, {0.0, false, 2}, {1.0, false, 3}, {2.0, false, 4}, {5.0, false, 5}};
  CHECK(tpr_at_fpr(tiny, 0.05) == 0.0);

  // identical distributions: TPR tracks the cap
  Rng rng(9);
  std::vector<ScoreSample> null;
  for (int i = 0; i < 4000; ++i) null.push_back({rng.next_gaussian(), i % 2 == 0, i});
  double t = tpr_at_fpr(null, 0.05);
  CHECK(t > 0.02);
  CHECK(t < 0.09);

  // monotone nonincreasing as the cap tightens
  double prev = 1.0;
  for (double cap : {0.5, 0.2, 0.1, 0.05, 0.02, 0.01}) {
    double v = tpr_at_fpr(null, cap);
    CHECK(v <= prev + 1e-12);
    prev = v;
  }
}

TEST_CASE("pass@k closed form matches exhaustive enumeration") {
  CHECK(pass_at_k(10, 0, 1) == 0.0);
  CHECK(pass_at_k(10, 3, 10) == 1.0);
  CHECK(pass_at_k(5, 2, 2) == doctest::Approx(0.7).epsilon(1e-12));

  for (int n = 1; n <= 8; ++n)
    for (int c = 0; c <= n; ++c)
      for (int k = 1; k <= n; ++k)
        CHECK(pass_at_k(n, c, k) == doctest::Approx(pass_at_k_enumeration(n, c, k)).epsilon(1e-12));

  CHECK_THROWS_AS(pass_at_k(5, 6, 1), DomainError);
  CHECK_THROWS_AS(pass_at_k(5, 1, 0), DomainError);
  CHECK_THROWS_AS(pass_at_k(5, 1, 6), DomainError);
}

TEST_CASE("rename attack preserves program semantics") {
  // identity permutation leaves sequences unchanged
  std::uint64_t identity_seed = 0;
  bool found = false;
  for (std::uint64_t s = 0; s < 2000000 && !found; ++s) {
    std::array<int, 8> p = identifier_permutation(s);
    bool id = true;
    for (int i = 0; i < 8; ++i) id &= p[i] == i;
    if (id) {
      identity_seed = s;
      found = true;
    }
  }
  REQUIRE(found);
  minilang::TokenSequence prog = minilang::tokenize("fn c ( a , b ) :\nreturn a + b\n", V);
  CHECK(rename_attack(prog, identity_seed).ids == prog.ids);

  // any permutation preserves the suite outcome
  minilang::TestSuite suite;
  suite.cases = {{{2, 3}, 5}, {{-4, 1}, -3}};
  for (std::uint64_t s = 1; s <= 20; ++s) {
    minilang::TokenSequence att = rename_attack(prog, s);
    CHECK(minilang::run_tests(att, suite, minilang::kDefaultFuel, V).pass);
  }

  // exhaustive over the template pool: canonical variants keep their suites
  const corpus::TemplatePool& pool = corpus::TemplatePool::standard();
  for (std::uint64_t seed = 0; seed < 60; ++seed) {
    corpus::Task task = corpus::sample_task(pool, seed);
    minilang::TokenSequence full;
    full.ids = task.prompt.ids;
    full.ids.insert(full.ids.end(), task.reference.ids.begin(), task.reference.ids.end());
    for (std::uint64_t s = 0; s < 4; ++s) {
      minilang::TokenSequence att = rename_attack(full, mix64(seed, s));
      CHECK(minilang::run_tests(att, task.suite, minilang::kDefaultFuel, V).pass ==
            minilang::run_tests(full, task.suite, minilang::kDefaultFuel, V).pass);
    }
  }
}

TEST_CASE("paired one-sided test") {
  std::vector<double> before(100), after(100);
  Rng rng(11);
  for (int i = 0; i < 100; ++i) {
    before[i] = rng.next_gaussian() + 1.0;
    after[i] = before[i] - 0.8 - 0.1 * rng.next_unit();
  }
  CHECK(paired_one_sided_p(before, after) < 1e-6);
  CHECK(paired_one_sided_p(after, before) > 0.5);
}

TEST_CASE("run_evaluation: unwatermarked policy yields chance auroc, bytes are stable") {
  const corpus::TemplatePool& pool = corpus::TemplatePool::standard();
  std::vector<corpus::Task> tasks;
  for (int i = 0; i < 100; ++i) tasks.push_back(corpus::sample_task(pool, mix64(0xE11A, i)));
  lm::BaseLM model = lm::BaseLM::fit(tasks, 14, 0.001, V);

  policy::PolicyConfig pc;
  pc.context = 4;
  pc.dim = 32;
  pc.layers = 2;
  pc.heads = 4;
  pc.ffn = 64;
  policy::PolicyParams params = policy::PolicyParams::init(pc, V, 5);

  codec::WatermarkConfig wm;
  wm.delta = 0.0;  // no watermark signal at all
  EvalOptions opts;
  opts.samples_per_task = 3;
  opts.seed = 123;
  EvalReport rep = run_evaluation(params, model, tasks, wm, opts);
  MESSAGE("delta=0 auroc: ", rep.auroc, " pass@1: ", rep.pass_at_1);
  CHECK(rep.auroc > 0.35);
  CHECK(rep.auroc < 0.65);
  CHECK(rep.pass_at_1 > 0.0);

  EvalReport rep2 = run_evaluation(params, model, tasks, wm, opts);
  CHECK(rep.auroc == rep2.auroc);
  CHECK(rep.pass_at_1 == rep2.pass_at_1);
  REQUIRE(rep.scores.size() == rep2.scores.size());
  for (std::size_t i = 0; i < rep.scores.size(); ++i) CHECK(rep.scores[i].z == rep2.scores[i].z);

  // threads must not change results
  opts.threads = 4;
  EvalReport rep4 = run_evaluation(params, model, tasks, wm, opts);
  CHECK(rep4.auroc == rep.auroc);
  for (std::size_t i = 0; i < rep.scores.size(); ++i) CHECK(rep4.scores[i].z == rep.scores[i].z);
}

TEST_CASE("rename attack lowers z on forced-gate watermarked text") {
  const corpus::TemplatePool& pool = corpus::TemplatePool::standard();
  std::vector<corpus::Task> tasks;
  for (int i = 0; i < 40; ++i) tasks.push_back(corpus::sample_task(pool, mix64(0xA77A, i)));
  lm::BaseLM model = lm::BaseLM::fit(tasks, 14, 0.001, V);

  policy::PolicyConfig pc;
  pc.context = 4;
  pc.dim = 32;
  pc.layers = 2;
  pc.heads = 4;
  pc.ffn = 64;
  policy::PolicyParams params = policy::PolicyParams::init(pc, V, 6);

  codec::WatermarkConfig wm;
  wm.gate_override = codec::GateOverride::force_on;
  wm.stop_at_end = false;
  wm.max_completion = 120;

  double z_orig = 0, z_att = 0;
  for (int i = 0; i < 40; ++i) {
    Rng rng(mix64(0x5EED, i));
    codec::GenerationRecord rec =
        codec::generate_watermarked(model, params, tasks[i].prompt.ids, wm, rng);
    minilang::TokenSequence seq;
    seq.ids = rec.completion;
    minilang::TokenSequence att = rename_attack(seq, mix64(0xF0, i));
    z_orig += detection_z(params, seq.ids, wm);
    z_att += detection_z(params, att.ids, wm);
  }
  MESSAGE("mean z original ", z_orig / 40, " attacked ", z_att / 40);
  CHECK(z_att < z_orig);
  CHECK(z_att / 40 > 0.0);  // attack attenuates, does not erase
}
