#include "minimark/tokenizer.hpp"

#include "minimark/errors.hpp"

namespace minimark::minilang {

TokenSequence tokenize(std::string_view text, const Vocabulary& vocab) {
  TokenSequence out;
  std::size_t i = 0;
  const std::size_t n = text.size();
  while (i < n) {
    char ch = text[i];
    if (ch == '\n') {
      out.ids.push_back(vocab.newline());
      ++i;
      continue;
    }
    if (ch == ' ' || ch == '\t' || ch == '\r') {
      ++i;
      continue;
    }
    std::size_t start = i;
    while (i < n && text[i] != ' ' && text[i] != '\t' && text[i] != '\r' && text[i] != '\n') ++i;
    std::string_view word = text.substr(start, i - start);
    auto id = vocab.id_of(word);
    if (!id) throw UnknownLexeme(start, std::string(word));
    if (*id == vocab.pad()) continue;  // PAD never surfaces from text
    out.ids.push_back(*id);
  }
  return out;
}

std::string detokenize(const TokenSequence& seq, const Vocabulary& vocab) {
  std::string out;
  bool line_has_word = false;
  for (TokenId id : seq.ids) {
    if (id == vocab.pad()) continue;
    if (id == vocab.newline()) {
      out.push_back('\n');
      line_has_word = false;
      continue;
    }
    if (line_has_word) out.push_back(' ');
    out += vocab.spelling(id);
    line_has_word = true;
  }
  return out;
}

}  // namespace minimark::minilang
