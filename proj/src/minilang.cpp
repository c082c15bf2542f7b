#include "minimark/minilang.hpp"

#include <algorithm>
#include <array>

namespace minimark::minilang {

namespace {

class Parser {
 public:
  Parser(std::span<const TokenId> toks, const Vocabulary& v) : toks_(toks), v_(v) {}

  Program parse() {
    skip_comment_lines();
    Program prog;
    expect(v_.kw_fn(), "fn");
    prog.fname = expect_identifier();
    expect(v_.lparen(), "(");
    if (!at(v_.rparen())) {
      prog.params.push_back(expect_identifier());
      if (at(v_.comma())) {
        advance();
        prog.params.push_back(expect_identifier());
      }
    }
    expect(v_.rparen(), ")");
    expect(v_.colon(), ":");
    expect(v_.newline(), "NEWLINE");
    skip_comment_lines();
    if (eof()) fail("statement");
    while (!eof()) {
      prog.body.push_back(parse_stmt());
      skip_comment_lines();
    }
    return prog;
  }

 private:
  Stmt parse_stmt() {
    Stmt s;
    s.pos = pos_;
    if (at(v_.kw_let())) {
      advance();
      s.kind = Stmt::Kind::let;
      s.name = expect_identifier();
      expect(v_.assign(), "=");
      s.expr = parse_expr();
      expect(v_.newline(), "NEWLINE");
    } else if (at(v_.kw_return())) {
      advance();
      s.kind = Stmt::Kind::ret;
      s.expr = parse_expr();
      expect(v_.newline(), "NEWLINE");
    } else if (at(v_.kw_if())) {
      advance();
      s.kind = Stmt::Kind::if_else;
      s.expr = parse_expr();
      expect(v_.colon(), ":");
      expect(v_.newline(), "NEWLINE");
      skip_comment_lines();
      s.then_branch.push_back(parse_stmt());
      skip_comment_lines();
      expect(v_.kw_else(), "else");
      expect(v_.colon(), ":");
      expect(v_.newline(), "NEWLINE");
      skip_comment_lines();
      s.else_branch.push_back(parse_stmt());
    } else {
      fail("let, return or if");
    }
    return s;
  }

  // cmp := add (('<' | '==') add)?   single, non-associative comparison
  ExprPtr parse_expr() {
    ExprPtr lhs = parse_add();
    if (at(v_.op_lt()) || at(v_.op_eq())) {
      auto e = std::make_unique<Expr>();
      e->kind = Expr::Kind::binary;
      e->pos = pos_;
      e->op = current();
      advance();
      e->lhs = std::move(lhs);
      e->rhs = parse_add();
      return e;
    }
    return lhs;
  }

  ExprPtr parse_add() {
    ExprPtr lhs = parse_mul();
    while (at(v_.op_plus()) || at(v_.op_minus())) {
      auto e = std::make_unique<Expr>();
      e->kind = Expr::Kind::binary;
      e->pos = pos_;
      e->op = current();
      advance();
      e->lhs = std::move(lhs);
      e->rhs = parse_mul();
      lhs = std::move(e);
    }
    return lhs;
  }

  ExprPtr parse_mul() {
    ExprPtr lhs = parse_primary();
    while (at(v_.op_star()) || at(v_.op_percent())) {
      auto e = std::make_unique<Expr>();
      e->kind = Expr::Kind::binary;
      e->pos = pos_;
      e->op = current();
      advance();
      e->lhs = std::move(lhs);
      e->rhs = parse_primary();
      lhs = std::move(e);
    }
    return lhs;
  }

  ExprPtr parse_primary() {
    if (eof()) fail("digit, identifier or (");
    auto e = std::make_unique<Expr>();
    e->pos = pos_;
    TokenId id = current();
    if (v_.is_digit(id)) {
      e->kind = Expr::Kind::literal;
      e->value = v_.digit_value(id);
      advance();
      return e;
    }
    if (v_.is_identifier(id)) {
      e->kind = Expr::Kind::ident;
      e->ident = id;
      advance();
      return e;
    }
    if (id == v_.lparen()) {
      advance();
      e->kind = Expr::Kind::paren;
      e->lhs = parse_expr();
      expect(v_.rparen(), ")");
      return e;
    }
    fail("digit, identifier or (");
    return nullptr;  // unreachable
  }

  void skip_comment_lines() {
    while (at(v_.hash())) {
      advance();
      while (!eof() && !at(v_.newline())) advance();
      expect(v_.newline(), "NEWLINE");
    }
  }

  bool eof() const { return pos_ >= toks_.size(); }
  TokenId current() const { return toks_[pos_]; }
  bool at(TokenId id) const { return !eof() && toks_[pos_] == id; }
  void advance() { ++pos_; }

  void expect(TokenId id, const char* what) {
    if (!at(id)) fail(what);
    advance();
  }

  TokenId expect_identifier() {
    if (eof() || !v_.is_identifier(current())) fail("identifier");
    TokenId id = current();
    advance();
    return id;
  }

  [[noreturn]] void fail(const std::string& expected) { throw ParseError{pos_, expected}; }

  std::span<const TokenId> toks_;
  const Vocabulary& v_;
  std::size_t pos_ = 0;
};

using BoundSet = std::array<bool, 8>;

void check_expr(const Expr& e, const BoundSet& bound, const Vocabulary& v) {
  switch (e.kind) {
    case Expr::Kind::literal:
      return;
    case Expr::Kind::ident:
      if (!bound[v.identifier_index(e.ident)])
        throw ParseError{e.pos, "identifier bound by a parameter or earlier let"};
      return;
    case Expr::Kind::paren:
      check_expr(*e.lhs, bound, v);
      return;
    case Expr::Kind::binary:
      check_expr(*e.lhs, bound, v);
      check_expr(*e.rhs, bound, v);
      return;
  }
}

// Definite-binding and definite-return analysis. Returns whether the statement
// list returns on every path; `bound` is updated to the definitely-bound set
// after the list.
bool check_stmts(const std::vector<Stmt>& stmts, BoundSet& bound, const Vocabulary& v) {
  bool returns = false;
  for (const Stmt& s : stmts) {
    switch (s.kind) {
      case Stmt::Kind::let:
        check_expr(*s.expr, bound, v);
        bound[v.identifier_index(s.name)] = true;
        break;
      case Stmt::Kind::ret:
        check_expr(*s.expr, bound, v);
        returns = true;
        break;
      case Stmt::Kind::if_else: {
        check_expr(*s.expr, bound, v);
        BoundSet b_then = bound;
        BoundSet b_else = bound;
        bool r_then = check_stmts(s.then_branch, b_then, v);
        bool r_else = check_stmts(s.else_branch, b_else, v);
        if (r_then && r_else) {
          returns = true;
        } else if (r_then) {
          bound = b_else;
        } else if (r_else) {
          bound = b_then;
        } else {
          for (int i = 0; i < 8; ++i) bound[i] = b_then[i] && b_else[i];
        }
        break;
      }
    }
  }
  return returns;
}

struct RuntimeFailure {
  std::string what;
};

struct FuelExhausted {};

class Interp {
 public:
  Interp(const Vocabulary& v, std::int64_t fuel) : v_(v), fuel_(fuel) {}

  std::optional<std::int64_t> run_block(const std::vector<Stmt>& stmts) {
    for (const Stmt& s : stmts) {
      step();
      switch (s.kind) {
        case Stmt::Kind::let:
          env_[v_.identifier_index(s.name)] = eval(*s.expr);
          break;
        case Stmt::Kind::ret:
          return eval(*s.expr);
        case Stmt::Kind::if_else: {
          std::int64_t cond = eval(*s.expr);
          auto r = run_block(cond != 0 ? s.then_branch : s.else_branch);
          if (r) return r;
          break;
        }
      }
    }
    return std::nullopt;
  }

  void bind(TokenId ident, std::int64_t value) { env_[v_.identifier_index(ident)] = value; }
  std::int64_t steps() const { return steps_; }

 private:
  std::int64_t eval(const Expr& e) {
    step();
    switch (e.kind) {
      case Expr::Kind::literal:
        return e.value;
      case Expr::Kind::ident: {
        auto& slot = env_[v_.identifier_index(e.ident)];
        if (!slot) throw RuntimeFailure{"unbound identifier '" + v_.spelling(e.ident) + "'"};
        return *slot;
      }
      case Expr::Kind::paren:
        return eval(*e.lhs);
      case Expr::Kind::binary: {
        std::int64_t a = eval(*e.lhs);
        std::int64_t b = eval(*e.rhs);
        return apply(e.op, a, b);
      }
    }
    throw RuntimeFailure{"corrupt expression"};
  }

  std::int64_t apply(TokenId op, std::int64_t a, std::int64_t b) {
    std::int64_t r = 0;
    if (op == v_.op_plus()) {
      if (__builtin_add_overflow(a, b, &r)) throw RuntimeFailure{"arithmetic overflow"};
      return r;
    }
    if (op == v_.op_minus()) {
      if (__builtin_sub_overflow(a, b, &r)) throw RuntimeFailure{"arithmetic overflow"};
      return r;
    }
    if (op == v_.op_star()) {
      if (__builtin_mul_overflow(a, b, &r)) throw RuntimeFailure{"arithmetic overflow"};
      return r;
    }
    if (op == v_.op_percent()) {
      if (b == 0) throw RuntimeFailure{"modulo by zero"};
      if (a == INT64_MIN && b == -1) throw RuntimeFailure{"arithmetic overflow"};
      return a % b;
    }
    if (op == v_.op_lt()) return a < b ? 1 : 0;
    if (op == v_.op_eq()) return a == b ? 1 : 0;
    throw RuntimeFailure{"unknown operator"};
  }

  void step() {
    if (steps_ >= fuel_) throw FuelExhausted{};
    ++steps_;
  }

  const Vocabulary& v_;
  std::int64_t fuel_;
  std::int64_t steps_ = 0;
  std::array<std::optional<std::int64_t>, 8> env_;
};

}  // namespace

ParseResult parse_program(const TokenSequence& seq, const Vocabulary& vocab) {
  try {
    Parser p(seq.ids, vocab);
    Program prog = p.parse();
    if (prog.params.size() == 2 && prog.params[0] == prog.params[1])
      return ParseError{0, "distinct parameter names"};
    BoundSet bound{};
    for (TokenId param : prog.params) bound[vocab.identifier_index(param)] = true;
    if (!check_stmts(prog.body, bound, vocab))
      return ParseError{seq.ids.size(), "a return on every path"};
    return prog;
  } catch (const ParseError& e) {
    return e;
  }
}

ExecOutcome execute(const Program& prog, std::span<const std::int64_t> args, std::int64_t fuel) {
  const Vocabulary& v = Vocabulary::standard();
  ExecOutcome out;
  if (args.size() != prog.params.size()) {
    out.kind = ExecOutcome::Kind::runtime_error;
    out.detail = "arity mismatch";
    return out;
  }
  Interp interp(v, fuel);
  for (std::size_t i = 0; i < args.size(); ++i) interp.bind(prog.params[i], args[i]);
  try {
    auto r = interp.run_block(prog.body);
    out.steps_used = interp.steps();
    if (r) {
      out.kind = ExecOutcome::Kind::value;
      out.value = *r;
    } else {
      out.kind = ExecOutcome::Kind::runtime_error;
      out.detail = "no return executed";
    }
  } catch (const RuntimeFailure& f) {
    out.kind = ExecOutcome::Kind::runtime_error;
    out.steps_used = interp.steps();
    out.detail = f.what;
  } catch (const FuelExhausted&) {
    out.kind = ExecOutcome::Kind::fuel_exhausted;
    out.steps_used = interp.steps();
    out.detail = "fuel exhausted";
  }
  return out;
}

TestRunResult run_tests(const TokenSequence& prog_tokens, const TestSuite& suite, std::int64_t fuel,
                        const Vocabulary& vocab) {
  TestRunResult result;
  TokenSequence cleaned;
  cleaned.origin = prog_tokens.origin;
  for (TokenId id : prog_tokens.ids)
    if (id != vocab.pad()) cleaned.ids.push_back(id);
  while (!cleaned.ids.empty() && cleaned.ids.back() == vocab.end()) cleaned.ids.pop_back();

  ParseResult parsed = parse_program(cleaned, vocab);
  if (auto* err = std::get_if<ParseError>(&parsed)) {
    result.pass = false;
    result.parse_error = *err;
    result.case_pass.assign(suite.cases.size(), false);
    return result;
  }
  const Program& prog = std::get<Program>(parsed);
  result.pass = true;
  for (const TestCase& tc : suite.cases) {
    ExecOutcome out = execute(prog, tc.args, fuel);
    bool ok = out.ok() && out.value == tc.expected;
    result.outcomes.push_back(std::move(out));
    result.case_pass.push_back(ok);
    if (!ok) result.pass = false;
  }
  return result;
}

std::vector<bool> code_mask(std::span<const TokenId> tokens, const Vocabulary& vocab) {
  std::vector<bool> mask;
  mask.reserve(tokens.size());
  bool in_comment = false;
  for (TokenId id : tokens) {
    if (id == vocab.newline()) {
      mask.push_back(true);
      in_comment = false;
    } else if (in_comment) {
      mask.push_back(false);
    } else if (id == vocab.hash()) {
      mask.push_back(true);
      in_comment = true;
    } else {
      mask.push_back(vocab.is_code(id));
    }
  }
  return mask;
}

}  // namespace minimark::minilang
