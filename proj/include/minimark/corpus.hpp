#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "minimark/minilang.hpp"
#include "minimark/rng.hpp"

namespace minimark::corpus {

struct Task {
  std::uint64_t task_id = 0;
  int template_id = 0;
  minilang::TokenSequence prompt;     // comment line + signature line
  minilang::TokenSequence reference;  // body statements, no END token
  minilang::TestSuite suite;
};

/// Axes of surface variation within one semantic template. Every variant of a
/// template computes the same function on all integer inputs.
struct VariantSpec {
  int param_choice = 0;                    // arity-1: pool index; arity-2: rotation-pair index
  bool swap = false;                       // commutative operand order
  int temp_choice = 0;                     // temp identifier for let-chain templates
  int n_redundant = 0;                     // 0..2 trailing dead let bindings
  int redundant_ident[2] = {0, 0};
  int redundant_digit[2] = {0, 0};
};

struct Template {
  int id = 0;
  std::string name;
  int arity = 1;
  int comment_word = 0;  // index into the comment-word pool
  bool has_swap = false;
  bool has_temp = false;
};

/// Fixed pool of semantic templates. Prompts carry a comment word that,
/// together with the signature arity, uniquely identifies the template.
class TemplatePool {
 public:
  static const TemplatePool& standard();

  int size() const { return static_cast<int>(templates_.size()); }
  const Template& at(int idx) const { return templates_[idx]; }

  VariantSpec sample_variant(const Template& t, Rng& rng) const;
  int param_choices(const Template& t) const;
  int temp_choices() const { return 6; }

  std::vector<minilang::TokenId> build_prompt(const Template& t, const VariantSpec& v) const;
  std::vector<minilang::TokenId> build_body(const Template& t, const VariantSpec& v) const;

 private:
  TemplatePool();
  std::vector<Template> templates_;
};

/// Random argument tuples in [-9, 9] with expected values from executing the
/// reference; draws whose execution errors (e.g. modulo by zero) are skipped.
/// Throws DegenerateTemplate when 100 consecutive draws fail for one case.
minilang::TestSuite derive_tests(const minilang::Program& reference, int n_cases, std::uint64_t seed);

/// Deterministic in seed; the returned task's prompt+reference parses and
/// passes its own suite.
Task sample_task(const TemplatePool& pool, std::uint64_t seed, int n_cases = 3);

void save_tasks(const std::string& path, const std::vector<Task>& tasks);
std::vector<Task> load_tasks(const std::string& path);

}  // namespace minimark::corpus
