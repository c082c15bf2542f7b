#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace minimark::minilang {

using TokenId = int;

/// Fixed token inventory of MiniLang. Ids are assigned in declaration order
/// and never change for a given vocabulary version; every persisted artifact
/// carries fingerprint() so stale models are rejected on load.
class Vocabulary {
 public:
  static const Vocabulary& standard();

  int size() const { return static_cast<int>(spellings_.size()); }
  const std::string& spelling(TokenId id) const { return spellings_[id]; }
  std::optional<TokenId> id_of(std::string_view spelling) const;

  // Vocabulary-level classification: PAD, END and the comment-word pool are
  // non-code; keywords, identifiers, digits, operators and punctuation are code.
  bool is_code(TokenId id) const { return code_class_[id]; }

  bool is_identifier(TokenId id) const { return id >= first_ident_ && id < first_ident_ + 8; }
  bool is_digit(TokenId id) const { return id >= first_digit_ && id < first_digit_ + 10; }
  int digit_value(TokenId id) const { return id - first_digit_; }
  TokenId digit_token(int value) const { return first_digit_ + value; }
  int identifier_index(TokenId id) const { return id - first_ident_; }
  TokenId identifier_token(int index) const { return first_ident_ + index; }

  TokenId pad() const { return pad_; }
  TokenId end() const { return end_; }
  TokenId hash() const { return hash_; }
  TokenId newline() const { return newline_; }

  TokenId kw_fn() const { return kw_fn_; }
  TokenId kw_let() const { return kw_let_; }
  TokenId kw_return() const { return kw_return_; }
  TokenId kw_if() const { return kw_if_; }
  TokenId kw_else() const { return kw_else_; }
  TokenId lparen() const { return lparen_; }
  TokenId rparen() const { return rparen_; }
  TokenId colon() const { return colon_; }
  TokenId comma() const { return comma_; }
  TokenId assign() const { return assign_; }
  TokenId op_plus() const { return op_plus_; }
  TokenId op_minus() const { return op_minus_; }
  TokenId op_star() const { return op_star_; }
  TokenId op_percent() const { return op_percent_; }
  TokenId op_lt() const { return op_lt_; }
  TokenId op_eq() const { return op_eq_; }
  TokenId comment_word(int index) const { return first_comment_ + index; }
  int comment_word_count() const { return 8; }

  std::uint64_t fingerprint() const { return fingerprint_; }

 private:
  Vocabulary();

  std::vector<std::string> spellings_;
  std::vector<bool> code_class_;
  TokenId pad_ = 0, end_ = 0, hash_ = 0, newline_ = 0;
  TokenId kw_fn_ = 0, kw_let_ = 0, kw_return_ = 0, kw_if_ = 0, kw_else_ = 0;
  TokenId lparen_ = 0, rparen_ = 0, colon_ = 0, comma_ = 0, assign_ = 0;
  TokenId op_plus_ = 0, op_minus_ = 0, op_star_ = 0, op_percent_ = 0;
  TokenId op_lt_ = 0, op_eq_ = 0;
  TokenId first_digit_ = 0, first_ident_ = 0, first_comment_ = 0;
  std::uint64_t fingerprint_ = 0;
};

enum class Origin { prompt, completion, external };

struct TokenSequence {
  std::vector<TokenId> ids;
  Origin origin = Origin::external;

  bool operator==(const TokenSequence& o) const { return ids == o.ids; }
};

}  // namespace minimark::minilang
