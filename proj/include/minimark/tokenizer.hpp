#pragma once

#include <string>
#include <string_view>

#include "minimark/vocab.hpp"

namespace minimark::minilang {

/// Splits whitespace-separated spellings into token ids. A literal newline in
/// the text is the NEWLINE token; space/tab/CR only separate. PAD spellings
/// are dropped. Throws UnknownLexeme for anything not in the vocabulary.
TokenSequence tokenize(std::string_view text, const Vocabulary& vocab);

/// Inverse of tokenize: words on a line joined by single spaces, NEWLINE
/// rendered as '\n'. PAD tokens are omitted, so
/// tokenize(detokenize(s)) == s after dropping PAD from s.
std::string detokenize(const TokenSequence& seq, const Vocabulary& vocab);

}  // namespace minimark::minilang
