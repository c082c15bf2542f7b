#include "minimark/run_config.hpp"

#include <charconv>
#include <fstream>

#include "minimark/errors.hpp"

namespace minimark::cli {

namespace {

std::string trim(const std::string& s) {
  std::size_t b = s.find_first_not_of(" \t\r");
  std::size_t e = s.find_last_not_of(" \t\r");
  if (b == std::string::npos) return "";
  return s.substr(b, e - b + 1);
}

std::int64_t parse_int(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    std::int64_t x = std::stoll(v, &used, 0);
    if (used != v.size()) throw std::invalid_argument(v);
    return x;
  } catch (const std::exception&) {
    throw DomainError("bad integer for " + key + ": '" + v + "'");
  }
}

std::uint64_t parse_u64(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    std::uint64_t x = std::stoull(v, &used, 0);
    if (used != v.size()) throw std::invalid_argument(v);
    return x;
  } catch (const std::exception&) {
    throw DomainError("bad integer for " + key + ": '" + v + "'");
  }
}

double parse_double(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    double x = std::stod(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return x;
  } catch (const std::exception&) {
    throw DomainError("bad number for " + key + ": '" + v + "'");
  }
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw DomainError("bad boolean for " + key + ": '" + v + "'");
}

}  // namespace

void RunConfig::apply(const std::string& key, const std::string& value) {
  auto i = [&] { return static_cast<int>(parse_int(key, value)); };
  auto d = [&] { return parse_double(key, value); };
  auto b = [&] { return parse_bool(key, value); };

  if (key == "seed") seed = parse_u64(key, value);
  else if (key == "threads") threads = i();
  else if (key == "corpus_train_tasks") corpus_train_tasks = i();
  else if (key == "corpus_eval_tasks") corpus_eval_tasks = i();
  else if (key == "corpus_test_cases") corpus_test_cases = i();
  else if (key == "lm_order") lm_order = i();
  else if (key == "lm_lambda") lm_lambda = d();
  else if (key == "policy_dim") policy_dim = i();
  else if (key == "policy_layers") policy_layers = i();
  else if (key == "policy_heads") policy_heads = i();
  else if (key == "policy_ffn") policy_ffn = i();
  else if (key == "policy_context") policy_context = i();
  else if (key == "policy_dropout") policy_dropout = d();
  else if (key == "wm_delta") wm_delta = d();
  else if (key == "wm_gamma") wm_gamma = d();
  else if (key == "wm_tau") wm_tau = d();
  else if (key == "wm_switch_threshold") wm_switch_threshold = d();
  else if (key == "wm_temperature") wm_temperature = d();
  else if (key == "wm_relax_temperature") wm_relax_temperature = d();
  else if (key == "wm_t_min") wm_t_min = i();
  else if (key == "wm_max_completion") wm_max_completion = i();
  else if (key == "wm_key") wm_key = parse_u64(key, value);
  else if (key == "wm_gate") {
    if (value != "policy" && value != "on" && value != "off")
      throw DomainError("wm_gate must be policy|on|off");
    wm_gate = value;
  } else if (key == "wm_noise") {
    if (value != "hash" && value != "none") throw DomainError("wm_noise must be hash|none");
    wm_noise = value;
  } else if (key == "wm_stop_at_end") wm_stop_at_end = b();
  else if (key == "train_lr") train_lr = d();
  else if (key == "train_lr_floor") train_lr_floor = d();
  else if (key == "train_warmup_ratio") train_warmup_ratio = d();
  else if (key == "train_steps") train_steps = i();
  else if (key == "train_group_size") train_group_size = i();
  else if (key == "train_clip_eps") train_clip_eps = d();
  else if (key == "train_beta_kl") train_beta_kl = d();
  else if (key == "train_lambda_ent") train_lambda_ent = d();
  else if (key == "train_alpha_red") train_alpha_red = d();
  else if (key == "train_grad_clip") train_grad_clip = d();
  else if (key == "train_w_exec") train_w_exec = d();
  else if (key == "train_w_wm") train_w_wm = d();
  else if (key == "train_ref_refresh") train_ref_refresh = i();
  else if (key == "train_eval_every") train_eval_every = i();
  else if (key == "train_eval_subset") train_eval_subset = i();
  else if (key == "sft_steps") sft_steps = i();
  else if (key == "sft_batch") sft_batch = i();
  else if (key == "sft_lr") sft_lr = d();
  else if (key == "sft_h_threshold") sft_h_threshold = d();
  else if (key == "sft_max_items") sft_max_items = i();
  else if (key == "eval_samples_per_task") eval_samples_per_task = i();
  else throw DomainError("unknown config key '" + key + "'");
}

void RunConfig::load_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot open config " + path);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(f, line)) {
    ++line_no;
    std::size_t hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    std::size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw FormatError(line_no, "expected 'key = value' in " + path);
    apply(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
}

nlohmann::json RunConfig::to_json() const {
  nlohmann::json j;
  j["seed"] = seed;
  j["threads"] = threads;
  j["corpus_train_tasks"] = corpus_train_tasks;
  j["corpus_eval_tasks"] = corpus_eval_tasks;
  j["corpus_test_cases"] = corpus_test_cases;
  j["lm_order"] = lm_order;
  j["lm_lambda"] = lm_lambda;
  j["policy_dim"] = policy_dim;
  j["policy_layers"] = policy_layers;
  j["policy_heads"] = policy_heads;
  j["policy_ffn"] = policy_ffn;
  j["policy_context"] = policy_context;
  j["policy_dropout"] = policy_dropout;
  j["wm_delta"] = wm_delta;
  j["wm_gamma"] = wm_gamma;
  j["wm_tau"] = wm_tau;
  j["wm_switch_threshold"] = wm_switch_threshold;
  j["wm_temperature"] = wm_temperature;
  j["wm_relax_temperature"] = wm_relax_temperature;
  j["wm_t_min"] = wm_t_min;
  j["wm_max_completion"] = wm_max_completion;
  j["wm_key"] = wm_key;
  j["wm_gate"] = wm_gate;
  j["wm_noise"] = wm_noise;
  j["wm_stop_at_end"] = wm_stop_at_end;
  j["train_lr"] = train_lr;
  j["train_lr_floor"] = train_lr_floor;
  j["train_warmup_ratio"] = train_warmup_ratio;
  j["train_steps"] = train_steps;
  j["train_group_size"] = train_group_size;
  j["train_clip_eps"] = train_clip_eps;
  j["train_beta_kl"] = train_beta_kl;
  j["train_lambda_ent"] = train_lambda_ent;
  j["train_alpha_red"] = train_alpha_red;
  j["train_grad_clip"] = train_grad_clip;
  j["train_w_exec"] = train_w_exec;
  j["train_w_wm"] = train_w_wm;
  j["train_ref_refresh"] = train_ref_refresh;
  j["train_eval_every"] = train_eval_every;
  j["train_eval_subset"] = train_eval_subset;
  j["sft_steps"] = sft_steps;
  j["sft_batch"] = sft_batch;
  j["sft_lr"] = sft_lr;
  j["sft_h_threshold"] = sft_h_threshold;
  j["sft_max_items"] = sft_max_items;
  j["eval_samples_per_task"] = eval_samples_per_task;
  return j;
}

codec::WatermarkConfig RunConfig::watermark() const {
  codec::WatermarkConfig wm;
  wm.delta = wm_delta;
  wm.gamma = wm_gamma;
  wm.tau = wm_tau;
  wm.switch_threshold = wm_switch_threshold;
  wm.temperature = wm_temperature;
  wm.relax_temperature = wm_relax_temperature;
  wm.t_min = wm_t_min;
  wm.max_completion = wm_max_completion;
  wm.key = wm_key;
  wm.gate_override = wm_gate == "on" ? codec::GateOverride::force_on
                     : wm_gate == "off" ? codec::GateOverride::force_off
                                        : codec::GateOverride::none;
  wm.noise = wm_noise == "none" ? codec::NoiseMode::noiseless : codec::NoiseMode::keyed_hash;
  wm.stop_at_end = wm_stop_at_end;
  return wm;
}

policy::PolicyConfig RunConfig::policy_config() const {
  policy::PolicyConfig pc;
  pc.context = policy_context;
  pc.dim = policy_dim;
  pc.layers = policy_layers;
  pc.heads = policy_heads;
  pc.ffn = policy_ffn;
  pc.dropout = policy_dropout;
  pc.gamma = wm_gamma;
  pc.delta = wm_delta;
  return pc;
}

rl::TrainConfig RunConfig::train_config() const {
  rl::TrainConfig tc;
  tc.lr = train_lr;
  tc.lr_floor = train_lr_floor;
  tc.warmup_ratio = train_warmup_ratio;
  tc.steps = train_steps;
  tc.group_size = train_group_size;
  tc.clip_eps = train_clip_eps;
  tc.beta_kl = train_beta_kl;
  tc.lambda_ent = train_lambda_ent;
  tc.alpha_red = train_alpha_red;
  tc.grad_clip = train_grad_clip;
  tc.w_exec = train_w_exec;
  tc.w_wm = train_w_wm;
  tc.ref_refresh = train_ref_refresh;
  tc.eval_every = train_eval_every;
  tc.eval_subset = train_eval_subset;
  tc.seed = seed;
  return tc;
}

}  // namespace minimark::cli
