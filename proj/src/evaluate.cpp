#include "minimark/evaluate.hpp"

#include <fstream>

#include "minimark/attack.hpp"
#include "minimark/errors.hpp"
#include "minimark/parallel.hpp"
#include "minimark/rl.hpp"

namespace minimark::eval {

using minilang::TokenId;
using minilang::Vocabulary;

double detection_z(const policy::PolicyParams& params, std::span<const TokenId> s,
                   const codec::WatermarkConfig& wm) {
  std::vector<codec::PositionDecision> dec = codec::reconstruct_decisions(params, s, wm);
  int T = 0, ng = 0;
  for (const auto& d : dec) {
    if (d.gate) {
      ++T;
      if (d.in_green) ++ng;
    }
  }
  if (T < 1) return 0.0;
  return codec::z_score(ng, T, wm.gamma);
}

EvalReport run_evaluation(const policy::PolicyParams& params, const lm::BaseLM& lm,
                          const std::vector<corpus::Task>& tasks, const codec::WatermarkConfig& wm,
                          const EvalOptions& opts) {
  if (tasks.empty()) throw DomainError("no evaluation tasks");
  const Vocabulary& voc = Vocabulary::standard();
  const int n_tasks = static_cast<int>(tasks.size());
  const int n = opts.samples_per_task;

  EvalReport rep;
  rep.n_tasks = n_tasks;
  rep.attack = opts.attack == AttackKind::rename ? "rename" : "none";

  struct PerTask {
    double p1 = 0, p10 = 0;
    double z_pos = 0, z_neg = 0;
  };
  std::vector<PerTask> rows(n_tasks);

  parallel_for(n_tasks, opts.threads, [&](int i) {
    const corpus::Task& task = tasks[i];
    int c_pass = 0;
    std::vector<TokenId> first_completion;
    for (int s = 0; s < n; ++s) {
      Rng rng(mix64(opts.seed, 0x67656e32ull, mix64(i, s)));
      codec::GenerationRecord rec = codec::generate_watermarked(lm, params, task.prompt.ids, wm, rng);
      minilang::TokenSequence prog;
      prog.ids = rec.prompt;
      prog.ids.insert(prog.ids.end(), rec.completion.begin(), rec.completion.end());
      if (minilang::run_tests(prog, task.suite, minilang::kDefaultFuel, voc).pass) ++c_pass;
      if (s == 0) first_completion = rec.completion;
    }
    rows[i].p1 = pass_at_k(n, c_pass, 1);
    rows[i].p10 = pass_at_k(n, c_pass, std::min(10, n));

    minilang::TokenSequence pos_seq;
    pos_seq.ids = first_completion;
    if (opts.attack == AttackKind::rename)
      pos_seq = rename_attack(pos_seq, mix64(opts.seed, 0x61746bull, i));
    rows[i].z_pos = detection_z(params, pos_seq.ids, wm);

    // Clean negatives: 50/50 fresh base-LM completions and corpus references.
    if (i % 2 == 0) {
      codec::WatermarkConfig off = wm;
      off.gate_override = codec::GateOverride::force_off;
      Rng rng(mix64(opts.seed, 0x6e656732ull, i));
      codec::GenerationRecord rec = codec::generate_watermarked(lm, params, task.prompt.ids, off, rng);
      rows[i].z_neg = detection_z(params, rec.completion, wm);
    } else {
      rows[i].z_neg = detection_z(params, task.reference.ids, wm);
    }
  });

  for (int i = 0; i < n_tasks; ++i) {
    rep.pass_at_1 += rows[i].p1;
    rep.pass_at_10 += rows[i].p10;
    rep.scores.push_back({rows[i].z_pos, true, i});
    rep.scores.push_back({rows[i].z_neg, false, i});
    rep.mean_z_watermarked += rows[i].z_pos;
    rep.mean_z_clean += rows[i].z_neg;
  }
  rep.pass_at_1 /= n_tasks;
  rep.pass_at_10 /= n_tasks;
  rep.mean_z_watermarked /= n_tasks;
  rep.mean_z_clean /= n_tasks;
  rep.n_positive = n_tasks;
  rep.n_negative = n_tasks;
  rep.auroc = auroc(rep.scores);
  rep.tpr_at_5fpr = tpr_at_fpr(rep.scores, 0.05);
  return rep;
}

void write_scores_csv(const std::string& path, const EvalReport& report) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open " + path + " for writing");
  f << "sequence_id,label,z\n";
  for (const ScoreSample& s : report.scores) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", s.z);
    f << s.sequence_id << ',' << (s.watermarked ? "watermarked" : "clean") << ',' << buf << '\n';
  }
  if (!f) throw IoError("failed writing " + path);
}

}  // namespace minimark::eval
