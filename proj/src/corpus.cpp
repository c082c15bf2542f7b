#include "minimark/corpus.hpp"

#include <fstream>
#include <variant>

#include <json.hpp>

#include "minimark/errors.hpp"

namespace minimark::corpus {

using minilang::TokenId;
using minilang::Vocabulary;

namespace {

// Function name shared by every template; parameters are drawn from the rest
// of the identifier pool.
constexpr int kFuncNameIndex = 2;  // 'c'

// Comment-word indices (pool: note this adds value result temp fast todo).
enum Word { W_NOTE = 0, W_THIS, W_ADDS, W_VALUE, W_RESULT, W_TEMP, W_FAST, W_TODO };

}  // namespace

TemplatePool::TemplatePool() {
  auto add = [&](const std::string& name, int arity, int word, bool swap, bool temp) {
    Template t;
    t.id = static_cast<int>(templates_.size());
    t.name = name;
    t.arity = arity;
    t.comment_word = word;
    t.has_swap = swap;
    t.has_temp = temp;
    templates_.push_back(t);
  };
  // Same-arity templates must diverge within a few body tokens so the base
  // model's context keeps the template identity once the comment word slides
  // out of its window.
  add("scale3", 1, W_FAST, true, false);    // return p * 3
  add("shift5", 1, W_ADDS, true, false);    // return p + 5
  add("square", 1, W_THIS, false, false);   // return p * p
  add("affine32", 1, W_VALUE, true, false); // return p * 3 + 2
  add("neg", 1, W_NOTE, false, false);      // return 0 - p
  add("clamp0", 1, W_RESULT, false, false); // if p < 0: 0 else p
  add("signpos", 1, W_TODO, false, false);  // if 0 < p: 1 else 0
  add("chain6", 1, W_TEMP, true, true);     // let t = p + p ; return t * 3
  add("add", 2, W_ADDS, true, false);       // return p + q
  add("sub", 2, W_NOTE, false, false);      // return p - q
  add("mul", 2, W_FAST, true, false);       // return p * q
  add("mod", 2, W_TEMP, false, false);      // return p % q
  add("max2", 2, W_RESULT, false, false);   // if p < q: q else p
  add("min2", 2, W_TODO, false, false);     // if q < p: q else p
  add("eqind", 2, W_THIS, true, false);     // if p == q: 1 else 0
}

const TemplatePool& TemplatePool::standard() {
  static const TemplatePool pool;
  return pool;
}

int TemplatePool::param_choices(const Template&) const {
  return 7;  // identifier pool minus the function name
}

namespace {

// Pool indices available for parameters (function name excluded).
int param_pool(int i) { return i < kFuncNameIndex ? i : i + 1; }

struct Idents {
  TokenId fname;
  TokenId p = -1, q = -1, tmp = -1;
  TokenId redundant[2] = {-1, -1};
};

Idents resolve_idents(const Template& t, const VariantSpec& v, const Vocabulary& voc) {
  Idents ids;
  ids.fname = voc.identifier_token(kFuncNameIndex);
  if (t.arity == 1) {
    ids.p = voc.identifier_token(param_pool(v.param_choice));
  } else {
    ids.p = voc.identifier_token(param_pool(v.param_choice));
    ids.q = voc.identifier_token(param_pool((v.param_choice + 1) % 7));
  }
  if (t.has_temp) {
    // temp drawn from the pool indices not used by the name or parameter
    int used_p = param_pool(v.param_choice);
    int k = 0;
    for (int i = 0; i < 8 && ids.tmp < 0; ++i) {
      if (i == kFuncNameIndex || i == used_p) continue;
      if (k == v.temp_choice) ids.tmp = voc.identifier_token(i);
      ++k;
    }
  }
  // redundant-let targets: any pool ids unused so far, in choice order
  for (int r = 0; r < v.n_redundant; ++r) {
    int k = 0;
    for (int i = 0; i < 8; ++i) {
      TokenId cand = voc.identifier_token(i);
      if (cand == ids.fname || cand == ids.p || cand == ids.q || cand == ids.tmp ||
          cand == ids.redundant[0])
        continue;
      if (k == v.redundant_ident[r]) {
        ids.redundant[r] = cand;
        break;
      }
      ++k;
    }
  }
  return ids;
}

}  // namespace

VariantSpec TemplatePool::sample_variant(const Template& t, Rng& rng) const {
  VariantSpec v;
  v.param_choice = static_cast<int>(rng.next_below(param_choices(t)));
  v.swap = t.has_swap && rng.next_below(2) == 1;
  v.temp_choice = t.has_temp ? static_cast<int>(rng.next_below(temp_choices())) : 0;
  v.n_redundant = static_cast<int>(rng.next_below(3));
  for (int r = 0; r < v.n_redundant; ++r) {
    v.redundant_ident[r] = static_cast<int>(rng.next_below(4));
    v.redundant_digit[r] = static_cast<int>(rng.next_below(10));
  }
  return v;
}

std::vector<TokenId> TemplatePool::build_prompt(const Template& t, const VariantSpec& v) const {
  const Vocabulary& voc = Vocabulary::standard();
  Idents ids = resolve_idents(t, v, voc);
  std::vector<TokenId> p;
  p.push_back(voc.hash());
  p.push_back(voc.comment_word(t.comment_word));
  p.push_back(voc.newline());
  p.push_back(voc.kw_fn());
  p.push_back(ids.fname);
  p.push_back(voc.lparen());
  p.push_back(ids.p);
  if (t.arity == 2) {
    p.push_back(voc.comma());
    p.push_back(ids.q);
  }
  p.push_back(voc.rparen());
  p.push_back(voc.colon());
  p.push_back(voc.newline());
  return p;
}

std::vector<TokenId> TemplatePool::build_body(const Template& t, const VariantSpec& v) const {
  const Vocabulary& voc = Vocabulary::standard();
  Idents ids = resolve_idents(t, v, voc);
  const TokenId NL = voc.newline();
  const TokenId RET = voc.kw_return();
  const TokenId LET = voc.kw_let();
  const TokenId IF = voc.kw_if();
  const TokenId ELSE = voc.kw_else();
  const TokenId COLON = voc.colon();
  const TokenId EQ = voc.assign();
  auto d = [&](int x) { return voc.digit_token(x); };

  std::vector<TokenId> b;
  auto ret1 = [&](TokenId x, TokenId op, TokenId y) {
    b.insert(b.end(), {RET, x, op, y, NL});
  };
  auto if_ret = [&](TokenId lhs, TokenId cmp, TokenId rhs, TokenId then_v, TokenId else_v) {
    b.insert(b.end(), {IF, lhs, cmp, rhs, COLON, NL, RET, then_v, NL, ELSE, COLON, NL, RET, else_v, NL});
  };

  switch (t.id) {
    case 0:  // scale3
      v.swap ? ret1(d(3), voc.op_star(), ids.p) : ret1(ids.p, voc.op_star(), d(3));
      break;
    case 1:  // shift5
      v.swap ? ret1(d(5), voc.op_plus(), ids.p) : ret1(ids.p, voc.op_plus(), d(5));
      break;
    case 2:  // square
      ret1(ids.p, voc.op_star(), ids.p);
      break;
    case 3:  // affine32: return p * 3 + 2
      if (v.swap)
        b.insert(b.end(), {RET, d(3), voc.op_star(), ids.p, voc.op_plus(), d(2), NL});
      else
        b.insert(b.end(), {RET, ids.p, voc.op_star(), d(3), voc.op_plus(), d(2), NL});
      break;
    case 4:  // neg
      ret1(d(0), voc.op_minus(), ids.p);
      break;
    case 5:  // clamp0
      if_ret(ids.p, voc.op_lt(), d(0), d(0), ids.p);
      break;
    case 6:  // signpos
      if_ret(d(0), voc.op_lt(), ids.p, d(1), d(0));
      break;
    case 7:  // chain6: let t = p + p ; return t * 3
      b.insert(b.end(), {LET, ids.tmp, EQ, ids.p, voc.op_plus(), ids.p, NL});
      v.swap ? ret1(d(3), voc.op_star(), ids.tmp) : ret1(ids.tmp, voc.op_star(), d(3));
      break;
    case 8:  // add
      v.swap ? ret1(ids.q, voc.op_plus(), ids.p) : ret1(ids.p, voc.op_plus(), ids.q);
      break;
    case 9:  // sub
      ret1(ids.p, voc.op_minus(), ids.q);
      break;
    case 10:  // mul
      v.swap ? ret1(ids.q, voc.op_star(), ids.p) : ret1(ids.p, voc.op_star(), ids.q);
      break;
    case 11:  // mod
      ret1(ids.p, voc.op_percent(), ids.q);
      break;
    case 12:  // max2
      if_ret(ids.p, voc.op_lt(), ids.q, ids.q, ids.p);
      break;
    case 13:  // min2
      if_ret(ids.q, voc.op_lt(), ids.p, ids.q, ids.p);
      break;
    case 14:  // eqind
      v.swap ? if_ret(ids.q, voc.op_eq(), ids.p, d(1), d(0))
             : if_ret(ids.p, voc.op_eq(), ids.q, d(1), d(0));
      break;
    default:
      throw std::logic_error("unknown template id");
  }

  // Trailing dead bindings: free-choice tokens after the semantic core.
  for (int r = 0; r < v.n_redundant; ++r)
    b.insert(b.end(), {LET, ids.redundant[r], EQ, d(v.redundant_digit[r]), NL});
  return b;
}

minilang::TestSuite derive_tests(const minilang::Program& reference, int n_cases, std::uint64_t seed) {
  minilang::TestSuite suite;
  Rng rng(mix64(seed, 0x5355495445ull));
  for (int c = 0; c < n_cases; ++c) {
    bool found = false;
    for (int attempt = 0; attempt < 100 && !found; ++attempt) {
      std::vector<std::int64_t> args;
      for (int a = 0; a < reference.arity(); ++a) args.push_back(rng.next_int(-9, 9));
      minilang::ExecOutcome out = minilang::execute(reference, args, minilang::kDefaultFuel);
      if (out.ok()) {
        suite.cases.push_back({std::move(args), out.value});
        found = true;
      }
    }
    if (!found) throw DegenerateTemplate("no valid test case found in 100 draws");
  }
  return suite;
}

Task sample_task(const TemplatePool& pool, std::uint64_t seed, int n_cases) {
  const Vocabulary& voc = Vocabulary::standard();
  Rng rng(mix64(seed, 0x7461736bull));
  const Template& t = pool.at(static_cast<int>(rng.next_below(pool.size())));
  VariantSpec v = pool.sample_variant(t, rng);

  Task task;
  task.task_id = seed;
  task.template_id = t.id;
  task.prompt.ids = pool.build_prompt(t, v);
  task.prompt.origin = minilang::Origin::prompt;
  task.reference.ids = pool.build_body(t, v);
  task.reference.origin = minilang::Origin::completion;

  minilang::TokenSequence full;
  full.ids = task.prompt.ids;
  full.ids.insert(full.ids.end(), task.reference.ids.begin(), task.reference.ids.end());
  auto parsed = minilang::parse_program(full, voc);
  if (std::holds_alternative<minilang::ParseError>(parsed))
    throw std::logic_error("template '" + t.name + "' produced an unparseable program");
  task.suite = derive_tests(std::get<minilang::Program>(parsed), n_cases, seed);
  return task;
}

void save_tasks(const std::string& path, const std::vector<Task>& tasks) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open " + path + " for writing");
  nlohmann::json header;
  header["format"] = "minimark-tasks";
  header["version"] = 1;
  header["count"] = tasks.size();
  f << header.dump() << '\n';
  for (const Task& t : tasks) {
    nlohmann::json rec;
    rec["task_id"] = t.task_id;
    rec["template_id"] = t.template_id;
    rec["prompt_ids"] = t.prompt.ids;
    rec["reference_ids"] = t.reference.ids;
    nlohmann::json tests = nlohmann::json::array();
    for (const auto& c : t.suite.cases) tests.push_back({{"args", c.args}, {"expected", c.expected}});
    rec["tests"] = std::move(tests);
    f << rec.dump() << '\n';
  }
  if (!f) throw IoError("failed writing " + path);
}

std::vector<Task> load_tasks(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open " + path);
  std::string line;
  std::size_t line_no = 1;
  if (!std::getline(f, line)) throw FormatError(1, "missing header line");
  std::size_t expected_count = 0;
  try {
    nlohmann::json header = nlohmann::json::parse(line);
    if (header.at("format") != "minimark-tasks") throw FormatError(1, "not a task file");
    if (header.at("version") != 1) throw FormatError(1, "unsupported task file version");
    expected_count = header.at("count").get<std::size_t>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(1, std::string("bad header: ") + e.what());
  }
  std::vector<Task> tasks;
  while (std::getline(f, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      nlohmann::json rec = nlohmann::json::parse(line);
      Task t;
      t.task_id = rec.at("task_id").get<std::uint64_t>();
      t.template_id = rec.at("template_id").get<int>();
      t.prompt.ids = rec.at("prompt_ids").get<std::vector<TokenId>>();
      t.prompt.origin = minilang::Origin::prompt;
      t.reference.ids = rec.at("reference_ids").get<std::vector<TokenId>>();
      t.reference.origin = minilang::Origin::completion;
      for (const auto& c : rec.at("tests")) {
        minilang::TestCase tc;
        tc.args = c.at("args").get<std::vector<std::int64_t>>();
        tc.expected = c.at("expected").get<std::int64_t>();
        t.suite.cases.push_back(std::move(tc));
      }
      tasks.push_back(std::move(t));
    } catch (const nlohmann::json::exception& e) {
      throw FormatError(line_no, std::string("bad record: ") + e.what());
    }
  }
  if (tasks.size() != expected_count) throw FormatError(line_no + 1, "truncated task file");
  return tasks;
}

}  // namespace minimark::corpus
