#include "minimark/vocab.hpp"

#include <unordered_map>

#include "minimark/rng.hpp"

namespace minimark::minilang {

namespace {

// Spelling table index shared by id_of across calls.
const std::unordered_map<std::string_view, TokenId>& lookup_table(const std::vector<std::string>& spellings) {
  static const std::unordered_map<std::string_view, TokenId> table = [&] {
    std::unordered_map<std::string_view, TokenId> t;
    for (TokenId i = 0; i < static_cast<TokenId>(spellings.size()); ++i) t.emplace(spellings[i], i);
    return t;
  }();
  return table;
}

}  // namespace

Vocabulary::Vocabulary() {
  auto add = [&](const std::string& s, bool code) {
    spellings_.push_back(s);
    code_class_.push_back(code);
    return static_cast<TokenId>(spellings_.size() - 1);
  };

  pad_ = add("<pad>", false);
  end_ = add("<end>", false);

  kw_fn_ = add("fn", true);
  kw_let_ = add("let", true);
  kw_return_ = add("return", true);
  kw_if_ = add("if", true);
  kw_else_ = add("else", true);

  lparen_ = add("(", true);
  rparen_ = add(")", true);
  colon_ = add(":", true);
  comma_ = add(",", true);
  assign_ = add("=", true);
  hash_ = add("#", true);
  newline_ = add("\n", true);

  op_plus_ = add("+", true);
  op_minus_ = add("-", true);
  op_star_ = add("*", true);
  op_percent_ = add("%", true);

  op_lt_ = add("<", true);
  op_eq_ = add("==", true);

  first_digit_ = static_cast<TokenId>(spellings_.size());
  for (int d = 0; d <= 9; ++d) add(std::string(1, static_cast<char>('0' + d)), true);

  first_ident_ = static_cast<TokenId>(spellings_.size());
  for (const char* s : {"a", "b", "c", "x", "y", "z", "t", "u"}) add(s, true);

  first_comment_ = static_cast<TokenId>(spellings_.size());
  for (const char* s : {"note", "this", "adds", "value", "result", "temp", "fast", "todo"}) add(s, false);

  std::uint64_t h = 0x4d4c564f43414231ull;  // format tag
  for (TokenId i = 0; i < size(); ++i) {
    for (char c : spellings_[i]) h = mix64(h, static_cast<std::uint64_t>(static_cast<unsigned char>(c)));
    h = mix64(h, code_class_[i] ? 1 : 0);
  }
  fingerprint_ = h;
}

const Vocabulary& Vocabulary::standard() {
  static const Vocabulary v;
  return v;
}

std::optional<TokenId> Vocabulary::id_of(std::string_view spelling) const {
  const auto& table = lookup_table(spellings_);
  auto it = table.find(spelling);
  if (it == table.end()) return std::nullopt;
  return it->second;
}

}  // namespace minimark::minilang
