#include "minimark/commands.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "minimark/attack.hpp"
#include "minimark/errors.hpp"
#include "minimark/evaluate.hpp"
#include "minimark/io_util.hpp"
#include "minimark/metrics.hpp"
#include "minimark/tokenizer.hpp"

namespace minimark::cli {

namespace fs = std::filesystem;
using minilang::TokenId;
using minilang::Vocabulary;
using nlohmann::json;

namespace {

void write_meta(const std::string& path, const std::string& command, const RunConfig& cfg,
                const json& extra = json::object()) {
  json meta;
  meta["command"] = command;
  meta["config"] = cfg.to_json();
  meta["vocab_fingerprint"] = Vocabulary::standard().fingerprint();
  for (auto it = extra.begin(); it != extra.end(); ++it) meta[it.key()] = it.value();
  io::write_file(path, meta.dump(2) + "\n");
}

std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

json record_to_json(const codec::GenerationRecord& rec) {
  json j;
  j["prompt_ids"] = rec.prompt;
  j["completion_ids"] = rec.completion;
  json tr = json::array();
  for (std::size_t t = 0; t < rec.trace.size(); ++t) {
    const codec::StepTrace& s = rec.trace[t];
    tr.push_back({{"t", t},
                  {"token", s.token},
                  {"w", s.gate ? 1 : 0},
                  {"in_G", s.in_green},
                  {"logp", s.logp},
                  {"noise_seed", s.noise_seed},
                  {"is_code", s.is_code}});
  }
  j["trace"] = std::move(tr);
  return j;
}

json report_to_json(const codec::DetectionReport& rep, const RunConfig& cfg,
                    std::uint64_t ckpt_hash) {
  json j;
  j["T"] = rep.T;
  j["N_G"] = rep.N_G;
  if (rep.z)
    j["z"] = *rep.z;
  else
    j["z"] = nullptr;
  j["verdict"] = codec::verdict_name(rep.verdict);
  j["gamma"] = cfg.wm_gamma;
  j["tau"] = cfg.wm_tau;
  j["policy_checkpoint_hash"] = ckpt_hash;
  json pp = json::array();
  for (std::size_t t = 0; t < rep.per_position.size(); ++t)
    pp.push_back({{"t", t}, {"w", rep.per_position[t].gate ? 1 : 0}, {"in_G", rep.per_position[t].in_green}});
  j["per_position"] = std::move(pp);
  return j;
}

json eval_report_to_json(const eval::EvalReport& rep, const RunConfig& cfg) {
  json j;
  j["pass_at_1"] = rep.pass_at_1;
  j["pass_at_10"] = rep.pass_at_10;
  j["auroc"] = rep.auroc;
  j["tpr_at_5fpr"] = rep.tpr_at_5fpr;
  j["mean_z_watermarked"] = rep.mean_z_watermarked;
  j["mean_z_clean"] = rep.mean_z_clean;
  j["n_tasks"] = rep.n_tasks;
  j["n_positive"] = rep.n_positive;
  j["n_negative"] = rep.n_negative;
  j["attack"] = rep.attack;
  j["partial"] = rep.partial;
  j["config"] = cfg.to_json();
  return j;
}

std::vector<TokenId> read_detect_input(const std::string& path) {
  const Vocabulary& voc = Vocabulary::standard();
  std::string text = io::read_file(path);
  if (path.size() >= 4 && path.substr(path.size() - 4) == ".ids") {
    std::vector<TokenId> ids;
    std::size_t i = 0;
    while (i < text.size()) {
      while (i < text.size() && std::isspace(static_cast<unsigned char>(text[i]))) ++i;
      if (i >= text.size()) break;
      std::size_t j = i;
      while (j < text.size() && !std::isspace(static_cast<unsigned char>(text[j]))) ++j;
      int id = std::stoi(text.substr(i, j - i));
      if (id < 0 || id >= voc.size()) throw DomainError("token id out of range: " + std::to_string(id));
      ids.push_back(id);
      i = j;
    }
    return ids;
  }
  return minilang::tokenize(text, voc).ids;
}

}  // namespace

int cmd_corpus_gen(const RunConfig& cfg, const std::string& out_dir) {
  fs::create_directories(out_dir);
  const corpus::TemplatePool& pool = corpus::TemplatePool::standard();
  std::vector<corpus::Task> train, evald;
  train.reserve(cfg.corpus_train_tasks);
  for (int i = 0; i < cfg.corpus_train_tasks; ++i)
    train.push_back(corpus::sample_task(pool, mix64(cfg.seed, 0x747261696eull, i), cfg.corpus_test_cases));
  for (int i = 0; i < cfg.corpus_eval_tasks; ++i)
    evald.push_back(corpus::sample_task(pool, mix64(cfg.seed, 0x6576616cull, i), cfg.corpus_test_cases));
  corpus::save_tasks(out_dir + "/train.jsonl", train);
  corpus::save_tasks(out_dir + "/eval.jsonl", evald);
  write_meta(out_dir + "/run_meta.json", "corpus-gen", cfg,
             {{"train_file", out_dir + "/train.jsonl"}, {"eval_file", out_dir + "/eval.jsonl"}});
  std::printf("corpus-gen: %zu train, %zu eval tasks -> %s\n", train.size(), evald.size(),
              out_dir.c_str());
  return 0;
}

int cmd_fit_lm(const RunConfig& cfg, const std::string& corpus_path, const std::string& out_path) {
  std::vector<corpus::Task> tasks = corpus::load_tasks(corpus_path);
  lm::BaseLM model = lm::BaseLM::fit(tasks, cfg.lm_order, cfg.lm_lambda, Vocabulary::standard());
  model.save(out_path);
  write_meta(out_path + ".meta.json", "fit-lm", cfg,
             {{"corpus", corpus_path}, {"model", out_path}, {"table_hash", model.table_hash()}});
  std::printf("fit-lm: order %d lambda %s -> %s\n", cfg.lm_order, format_double(cfg.lm_lambda).c_str(),
              out_path.c_str());
  return 0;
}

int cmd_sft(const RunConfig& cfg, const std::string& corpus_path, const std::string& lm_path,
            const std::string& out_ckpt) {
  const Vocabulary& voc = Vocabulary::standard();
  std::vector<corpus::Task> tasks = corpus::load_tasks(corpus_path);
  lm::BaseLM model = lm::BaseLM::load(lm_path, voc);
  policy::PolicyParams params = policy::PolicyParams::init(cfg.policy_config(), voc, cfg.seed);

  std::vector<rl::SftItem> items =
      rl::build_sft_items(tasks, model, cfg.policy_context, cfg.sft_max_items, cfg.seed);
  double h = cfg.sft_h_threshold >= 0 ? cfg.sft_h_threshold : rl::median_entropy(items);

  Rng batch_rng(mix64(cfg.seed, 0x73667462ull));
  double last_loss = 0;
  for (int step = 0; step < cfg.sft_steps; ++step) {
    std::vector<rl::SftItem> batch;
    batch.reserve(cfg.sft_batch);
    for (int b = 0; b < cfg.sft_batch; ++b)
      batch.push_back(items[batch_rng.next_below(items.size())]);
    last_loss = rl::sft_step(params, batch, h, cfg.sft_lr);
  }
  policy::save_checkpoint(params, out_ckpt);
  write_meta(out_ckpt + ".meta.json", "sft", cfg,
             {{"corpus", corpus_path},
              {"lm", lm_path},
              {"h_threshold", h},
              {"final_loss", last_loss},
              {"checkpoint", out_ckpt}});
  std::printf("sft: %d steps, final loss %s -> %s\n", cfg.sft_steps, format_double(last_loss).c_str(),
              out_ckpt.c_str());
  return 0;
}

int cmd_train(const RunConfig& cfg, const std::string& corpus_path, const std::string& eval_path,
              const std::string& lm_path, const std::string& init_ckpt, const std::string& out_dir) {
  const Vocabulary& voc = Vocabulary::standard();
  fs::create_directories(out_dir);
  std::vector<corpus::Task> train_tasks = corpus::load_tasks(corpus_path);
  std::vector<corpus::Task> eval_tasks = corpus::load_tasks(eval_path);
  lm::BaseLM model = lm::BaseLM::load(lm_path, voc);
  policy::PolicyParams params = init_ckpt.empty()
                                    ? policy::PolicyParams::init(cfg.policy_config(), voc, cfg.seed)
                                    : policy::load_checkpoint(init_ckpt, voc);

  rl::TrainResult result =
      rl::train(train_tasks, eval_tasks, std::move(params), model, cfg.train_config(), cfg.watermark(),
                cfg.threads);

  policy::save_checkpoint(result.params, out_dir + "/policy.ckpt");
  std::ofstream mf(out_dir + "/metrics.jsonl", std::ios::binary);
  if (!mf) throw IoError("cannot open metrics file");
  for (const rl::MetricsRow& row : result.metrics) {
    json j;
    j["step"] = row.step;
    j["mean_r1"] = row.mean_r1;
    j["mean_r2"] = row.mean_r2;
    j["mean_z_eval"] = row.mean_z_eval;
    j["pass_rate_eval"] = row.pass_rate_eval;
    j["loss"] = row.loss;
    j["grad_norm"] = row.grad_norm;
    j["lr"] = row.lr;
    mf << j.dump() << '\n';
  }
  write_meta(out_dir + "/run_meta.json", "train", cfg,
             {{"train_corpus", corpus_path},
              {"eval_corpus", eval_path},
              {"lm", lm_path},
              {"init_checkpoint", init_ckpt},
              {"checkpoint", out_dir + "/policy.ckpt"},
              {"final_policy_hash", result.params.params_hash()}});
  if (!result.metrics.empty()) {
    const rl::MetricsRow& last = result.metrics.back();
    std::printf("train: %d steps, eval mean z %.3f pass rate %.3f -> %s\n", cfg.train_steps,
                last.mean_z_eval, last.pass_rate_eval, out_dir.c_str());
  } else {
    std::printf("train: 0 steps, checkpoint equals init -> %s\n", out_dir.c_str());
  }
  return 0;
}

int cmd_generate(const RunConfig& cfg, const std::string& tasks_path, const std::string& lm_path,
                 const std::string& ckpt_path, int task_index, const std::string& out_text,
                 const std::string& out_record) {
  const Vocabulary& voc = Vocabulary::standard();
  std::vector<corpus::Task> tasks = corpus::load_tasks(tasks_path);
  if (task_index < 0 || task_index >= static_cast<int>(tasks.size()))
    throw DomainError("task index out of range");
  lm::BaseLM model = lm::BaseLM::load(lm_path, voc);
  policy::PolicyParams params = policy::load_checkpoint(ckpt_path, voc);

  Rng rng(mix64(cfg.seed, 0x67656eull, static_cast<std::uint64_t>(task_index)));
  codec::GenerationRecord rec =
      codec::generate_watermarked(model, params, tasks[task_index].prompt.ids, cfg.watermark(), rng);

  minilang::TokenSequence completion;
  completion.ids = rec.completion;
  io::write_file(out_text, minilang::detokenize(completion, voc));
  if (!out_record.empty()) io::write_file(out_record, record_to_json(rec).dump(2) + "\n");
  write_meta(out_text + ".meta.json", "generate", cfg,
             {{"tasks", tasks_path},
              {"task_index", task_index},
              {"lm", lm_path},
              {"checkpoint", ckpt_path},
              {"text", out_text},
              {"record", out_record}});
  std::printf("generate: task %d, %zu tokens -> %s\n", task_index, rec.completion.size(),
              out_text.c_str());
  return 0;
}

int cmd_detect(const RunConfig& cfg, const std::string& ckpt_path, const std::string& input_path,
               const std::string& report_path) {
  const Vocabulary& voc = Vocabulary::standard();
  policy::PolicyParams params = policy::load_checkpoint(ckpt_path, voc);
  std::vector<TokenId> s = read_detect_input(input_path);
  codec::DetectionReport rep = codec::detect(params, s, cfg.watermark());

  io::write_file(report_path, report_to_json(rep, cfg, params.params_hash()).dump(2) + "\n");
  write_meta(report_path + ".meta.json", "detect", cfg,
             {{"checkpoint", ckpt_path}, {"input", input_path}, {"report", report_path}});
  if (rep.z)
    std::printf("detect: T=%d N_G=%d z=%.4f verdict=%s\n", rep.T, rep.N_G, *rep.z,
                codec::verdict_name(rep.verdict));
  else
    std::printf("detect: T=%d N_G=%d z=NA verdict=%s\n", rep.T, rep.N_G,
                codec::verdict_name(rep.verdict));
  return 0;
}

int cmd_eval(const RunConfig& cfg, const std::string& tasks_path, const std::string& lm_path,
             const std::string& ckpt_path, const std::string& out_report, const std::string& csv_path,
             const std::string& attack) {
  const Vocabulary& voc = Vocabulary::standard();
  std::vector<corpus::Task> tasks = corpus::load_tasks(tasks_path);
  lm::BaseLM model = lm::BaseLM::load(lm_path, voc);
  policy::PolicyParams params = policy::load_checkpoint(ckpt_path, voc);

  eval::EvalOptions opts;
  opts.samples_per_task = cfg.eval_samples_per_task;
  opts.seed = cfg.seed;
  opts.threads = cfg.threads;
  if (attack == "rename")
    opts.attack = eval::AttackKind::rename;
  else if (attack != "none")
    throw DomainError("attack must be none|rename");

  eval::EvalReport rep = eval::run_evaluation(params, model, tasks, cfg.watermark(), opts);
  io::write_file(out_report, eval_report_to_json(rep, cfg).dump(2) + "\n");
  if (!csv_path.empty()) eval::write_scores_csv(csv_path, rep);
  write_meta(out_report + ".meta.json", "eval", cfg,
             {{"tasks", tasks_path},
              {"lm", lm_path},
              {"checkpoint", ckpt_path},
              {"report", out_report},
              {"csv", csv_path},
              {"attack", attack}});
  std::printf("eval[%s]: pass@1 %.3f pass@10 %.3f auroc %.3f tpr@5 %.3f\n", rep.attack.c_str(),
              rep.pass_at_1, rep.pass_at_10, rep.auroc, rep.tpr_at_5fpr);
  return 0;
}

int cmd_attack_eval(const RunConfig& cfg, const std::string& tasks_path, const std::string& lm_path,
                    const std::string& ckpt_path, const std::string& out_report) {
  const Vocabulary& voc = Vocabulary::standard();
  std::vector<corpus::Task> tasks = corpus::load_tasks(tasks_path);
  lm::BaseLM model = lm::BaseLM::load(lm_path, voc);
  policy::PolicyParams params = policy::load_checkpoint(ckpt_path, voc);

  eval::EvalOptions opts;
  opts.samples_per_task = cfg.eval_samples_per_task;
  opts.seed = cfg.seed;
  opts.threads = cfg.threads;

  eval::EvalReport base = eval::run_evaluation(params, model, tasks, cfg.watermark(), opts);
  opts.attack = eval::AttackKind::rename;
  eval::EvalReport attacked = eval::run_evaluation(params, model, tasks, cfg.watermark(), opts);

  // Positives share generation seeds, so z values are paired per task.
  std::vector<double> before, after;
  for (const eval::ScoreSample& s : base.scores)
    if (s.watermarked) before.push_back(s.z);
  for (const eval::ScoreSample& s : attacked.scores)
    if (s.watermarked) after.push_back(s.z);
  double p = eval::paired_one_sided_p(before, after);

  json j;
  j["original"] = eval_report_to_json(base, cfg);
  j["rename"] = eval_report_to_json(attacked, cfg);
  j["paired"] = {{"mean_z_original", base.mean_z_watermarked},
                 {"mean_z_rename", attacked.mean_z_watermarked},
                 {"one_sided_p", p}};
  io::write_file(out_report, j.dump(2) + "\n");
  write_meta(out_report + ".meta.json", "attack-eval", cfg,
             {{"tasks", tasks_path}, {"lm", lm_path}, {"checkpoint", ckpt_path}, {"report", out_report}});
  std::printf("attack-eval: auroc %.3f -> %.3f, mean z %.3f -> %.3f (p=%.2e)\n", base.auroc,
              attacked.auroc, base.mean_z_watermarked, attacked.mean_z_watermarked, p);
  return 0;
}

}  // namespace minimark::cli
