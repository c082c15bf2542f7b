#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace minimark {

struct UnknownLexeme : std::runtime_error {
  std::size_t position;  // byte offset into the source text
  std::string lexeme;
  UnknownLexeme(std::size_t pos, std::string lex)
      : std::runtime_error("unknown lexeme '" + lex + "' at offset " + std::to_string(pos)),
        position(pos),
        lexeme(std::move(lex)) {}
};

struct FormatError : std::runtime_error {
  std::size_t line;
  FormatError(std::size_t line_no, const std::string& what)
      : std::runtime_error("line " + std::to_string(line_no) + ": " + what), line(line_no) {}
};

struct DegenerateTemplate : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct EmptyCorpus : std::runtime_error {
  EmptyCorpus() : std::runtime_error("cannot fit a language model on an empty corpus") {}
};

struct ShapeMismatch : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct VersionMismatch : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct VocabHashMismatch : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct NonFiniteGradient : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct NonFiniteLoss : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct DomainError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct DegenerateLabels : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace minimark
