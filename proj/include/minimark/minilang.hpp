#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "minimark/tokenizer.hpp"
#include "minimark/vocab.hpp"

namespace minimark::minilang {

inline constexpr std::int64_t kDefaultFuel = 10000;

struct Expr;
using ExprPtr = std::unique_ptr<Expr>;

struct Expr {
  enum class Kind { literal, ident, paren, binary };
  Kind kind = Kind::literal;
  std::int64_t value = 0;  // literal
  TokenId ident = -1;      // ident
  TokenId op = -1;         // binary
  ExprPtr lhs, rhs;        // binary children; paren wraps lhs
  std::size_t pos = 0;     // token index, for diagnostics
};

struct Stmt {
  enum class Kind { let, ret, if_else };
  Kind kind = Kind::ret;
  TokenId name = -1;  // let target
  ExprPtr expr;       // let value / return value / if condition
  std::vector<Stmt> then_branch;  // exactly one statement
  std::vector<Stmt> else_branch;  // exactly one statement
  std::size_t pos = 0;
};

/// One function per program: fn <name> ( params ) : then a statement list.
struct Program {
  TokenId fname = -1;
  std::vector<TokenId> params;
  std::vector<Stmt> body;
  int arity() const { return static_cast<int>(params.size()); }
};

struct ParseError {
  std::size_t position = 0;  // token index of the first offending token
  std::string expected;
};

using ParseResult = std::variant<Program, ParseError>;

/// Recursive-descent parse plus semantic validation (identifiers definitely
/// bound before use, a return on every path). Comment lines (# .. NEWLINE)
/// may appear before the header and between statements; their content is
/// skipped without inspection.
ParseResult parse_program(const TokenSequence& seq, const Vocabulary& vocab);

struct ExecOutcome {
  enum class Kind { value, parse_error, runtime_error, fuel_exhausted };
  Kind kind = Kind::runtime_error;
  std::int64_t value = 0;
  std::int64_t steps_used = 0;
  std::string detail;

  bool ok() const { return kind == Kind::value; }
};

/// Tree-walking evaluation with checked 64-bit arithmetic. Each statement and
/// each expression node costs one fuel step. Never throws: unbound
/// identifiers, modulo by zero and overflow all fold into the outcome.
ExecOutcome execute(const Program& prog, std::span<const std::int64_t> args, std::int64_t fuel);

struct TestCase {
  std::vector<std::int64_t> args;
  std::int64_t expected = 0;
};

struct TestSuite {
  std::vector<TestCase> cases;
};

struct TestRunResult {
  bool pass = false;
  std::optional<ParseError> parse_error;
  std::vector<ExecOutcome> outcomes;  // one per case when the program parsed
  std::vector<bool> case_pass;
};

/// Parses the token sequence (PAD stripped, trailing ENDs ignored) and runs
/// every case. pass is true iff the parse succeeds and every case returns its
/// expected value. Unparseable input is a legal argument, not an error.
TestRunResult run_tests(const TokenSequence& prog_tokens, const TestSuite& suite, std::int64_t fuel,
                        const Vocabulary& vocab);

/// Sequence-level code mask: false for PAD and vocabulary-level non-code
/// tokens and for tokens strictly between '#' and the next NEWLINE.
std::vector<bool> code_mask(std::span<const TokenId> tokens, const Vocabulary& vocab);

}  // namespace minimark::minilang
