#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>

#include "minimark/base_lm.hpp"
#include "minimark/corpus.hpp"
#include "minimark/errors.hpp"
#include "minimark/io_util.hpp"
#include "minimark/tokenizer.hpp"

using namespace minimark;
using namespace minimark::minilang;
using corpus::Task;
using corpus::TemplatePool;

namespace {

const Vocabulary& V = Vocabulary::standard();

Program must_parse(const std::vector<TokenId>& ids) {
  TokenSequence s;
  s.ids = ids;
  ParseResult r = parse_program(s, V);
  REQUIRE(std::holds_alternative<Program>(r));
  return std::move(std::get<Program>(r));
}

std::vector<TokenId> concat(const TokenSequence& a, const TokenSequence& b) {
  std::vector<TokenId> out = a.ids;
  out.insert(out.end(), b.ids.begin(), b.ids.end());
  return out;
}

}  // namespace

TEST_CASE("sample_task is deterministic and self-consistent") {
  const TemplatePool& pool = TemplatePool::standard();
  CHECK(pool.size() >= 12);

  Task a = corpus::sample_task(pool, 0);
  Task b = corpus::sample_task(pool, 0);
  CHECK(a.template_id == b.template_id);
  CHECK(a.prompt.ids == b.prompt.ids);
  CHECK(a.reference.ids == b.reference.ids);
  REQUIRE(a.suite.cases.size() == b.suite.cases.size());
  for (std::size_t i = 0; i < a.suite.cases.size(); ++i) {
    CHECK(a.suite.cases[i].args == b.suite.cases[i].args);
    CHECK(a.suite.cases[i].expected == b.suite.cases[i].expected);
  }

  // prompt shape: ends with NEWLINE right after the signature colon
  REQUIRE(a.prompt.ids.size() >= 2);
  CHECK(a.prompt.ids.back() == V.newline());
  CHECK(a.prompt.ids[a.prompt.ids.size() - 2] == V.colon());

  // every sampled task passes its own suite
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    Task t = corpus::sample_task(pool, seed);
    TokenSequence full;
    full.ids = concat(t.prompt, t.reference);
    CHECK(run_tests(full, t.suite, kDefaultFuel, V).pass);
  }
}

TEST_CASE("template coverage over 1000 samples") {
  const TemplatePool& pool = TemplatePool::standard();
  std::set<int> seen;
  for (std::uint64_t seed = 0; seed < 1000; ++seed)
    seen.insert(corpus::sample_task(pool, seed).template_id);
  CHECK(static_cast<int>(seen.size()) == pool.size());
}

TEST_CASE("derive_tests semantics and skip rule") {
  Program add = must_parse(tokenize("fn c ( a , b ) :\nreturn a + b\n", V).ids);
  TestSuite s = corpus::derive_tests(add, 3, 11);
  REQUIRE(s.cases.size() == 3);
  for (const TestCase& tc : s.cases) CHECK(tc.expected == tc.args[0] + tc.args[1]);

  // determinism
  TestSuite s2 = corpus::derive_tests(add, 3, 11);
  for (std::size_t i = 0; i < 3; ++i) CHECK(s.cases[i].args == s2.cases[i].args);

  // modulo template: zero divisors are skipped, never emitted
  Program mod = must_parse(tokenize("fn c ( a , b ) :\nreturn a % b\n", V).ids);
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    TestSuite ms = corpus::derive_tests(mod, 4, seed);
    for (const TestCase& tc : ms.cases) {
      CHECK(tc.args[1] != 0);
      CHECK(tc.expected == tc.args[0] % tc.args[1]);
    }
  }

  // a template that always fails is degenerate
  Program broken = must_parse(tokenize("fn c ( a ) :\nreturn a % 0\n", V).ids);
  CHECK_THROWS_AS(corpus::derive_tests(broken, 1, 0), DegenerateTemplate);
}

TEST_CASE("all variants of each template are semantically equivalent") {
  const TemplatePool& pool = TemplatePool::standard();
  Rng rng(99);
  for (int ti = 0; ti < pool.size(); ++ti) {
    const corpus::Template& t = pool.at(ti);
    corpus::VariantSpec canonical;
    Program canon;
    {
      std::vector<TokenId> ids = pool.build_prompt(t, canonical);
      std::vector<TokenId> body = pool.build_body(t, canonical);
      ids.insert(ids.end(), body.begin(), body.end());
      canon = must_parse(ids);
    }
    for (int pc = 0; pc < pool.param_choices(t); ++pc) {
      for (int swap = 0; swap <= (t.has_swap ? 1 : 0); ++swap) {
        for (int nred : {0, 2}) {
          corpus::VariantSpec v;
          v.param_choice = pc;
          v.swap = swap == 1;
          v.temp_choice = t.has_temp ? pc % 6 : 0;
          v.n_redundant = nred;
          v.redundant_ident[0] = 1;
          v.redundant_digit[0] = 7;
          v.redundant_ident[1] = 2;
          v.redundant_digit[1] = 0;
          std::vector<TokenId> ids = pool.build_prompt(t, v);
          std::vector<TokenId> body = pool.build_body(t, v);
          ids.insert(ids.end(), body.begin(), body.end());
          Program prog = must_parse(ids);
          for (int trial = 0; trial < 100; ++trial) {
            std::vector<std::int64_t> args;
            for (int a = 0; a < t.arity; ++a) args.push_back(rng.next_int(-9, 9));
            ExecOutcome ea = execute(canon, args, kDefaultFuel);
            ExecOutcome eb = execute(prog, args, kDefaultFuel);
            CHECK(ea.kind == eb.kind);
            if (ea.ok()) CHECK(ea.value == eb.value);
          }
        }
      }
    }
  }
}

TEST_CASE("task file io round trip and errors") {
  const TemplatePool& pool = TemplatePool::standard();
  std::vector<Task> tasks;
  for (std::uint64_t seed = 0; seed < 100; ++seed) tasks.push_back(corpus::sample_task(pool, seed));

  std::string path = std::filesystem::temp_directory_path() / "mm_tasks_test.jsonl";
  corpus::save_tasks(path, tasks);
  std::vector<Task> loaded = corpus::load_tasks(path);
  REQUIRE(loaded.size() == tasks.size());
  for (std::size_t i = 0; i < tasks.size(); ++i) {
    CHECK(loaded[i].task_id == tasks[i].task_id);
    CHECK(loaded[i].template_id == tasks[i].template_id);
    CHECK(loaded[i].prompt.ids == tasks[i].prompt.ids);
    CHECK(loaded[i].reference.ids == tasks[i].reference.ids);
    REQUIRE(loaded[i].suite.cases.size() == tasks[i].suite.cases.size());
    for (std::size_t j = 0; j < tasks[i].suite.cases.size(); ++j) {
      CHECK(loaded[i].suite.cases[j].args == tasks[i].suite.cases[j].args);
      CHECK(loaded[i].suite.cases[j].expected == tasks[i].suite.cases[j].expected);
    }
  }

  // empty list: header line only
  std::string empty_path = std::filesystem::temp_directory_path() / "mm_tasks_empty.jsonl";
  corpus::save_tasks(empty_path, {});
  CHECK(corpus::load_tasks(empty_path).empty());
  std::ifstream f(empty_path);
  std::string line;
  int lines = 0;
  while (std::getline(f, line)) ++lines;
  CHECK(lines == 1);

  // truncation detected with a line number
  std::string full = io::read_file(path);
  std::string cut = full.substr(0, full.size() * 2 / 3);
  std::string trunc_path = std::filesystem::temp_directory_path() / "mm_tasks_trunc.jsonl";
  io::write_file(trunc_path, cut);
  CHECK_THROWS_AS(corpus::load_tasks(trunc_path), FormatError);

  std::remove(path.c_str());
  std::remove(empty_path.c_str());
  std::remove(trunc_path.c_str());
}

TEST_CASE("corpus entropy profile under the default base model") {
  const TemplatePool& pool = TemplatePool::standard();
  std::vector<Task> tasks;
  for (std::uint64_t seed = 0; seed < 2000; ++seed)
    tasks.push_back(corpus::sample_task(pool, mix64(0xC0FFEE, seed)));
  lm::BaseLM model = lm::BaseLM::fit(tasks, 14, 0.001, V);

  // keyword positions: the grammar-forced `fn` after the comment line
  double h_kw = 0;
  // identifier-choice positions: the first parameter name after `(`
  double h_id = 0;
  int n = 0;
  for (std::size_t i = 0; i < tasks.size() && n < 1200; ++i, ++n) {
    const std::vector<TokenId>& p = tasks[i].prompt.ids;
    // prompt: # word NL fn c ( p ...
    std::span<const TokenId> pre_fn(p.data(), 3);
    std::span<const TokenId> pre_param(p.data(), 6);
    h_kw += lm::token_entropy(model.next_logits(pre_fn));
    h_id += lm::token_entropy(model.next_logits(pre_param));
  }
  h_kw /= n;
  h_id /= n;
  MESSAGE("mean entropy at keyword positions: ", h_kw);
  MESSAGE("mean entropy at identifier positions: ", h_id);
  CHECK(n >= 1000);
  CHECK(h_kw < 0.1);
  CHECK(h_id > 0.5);
}
