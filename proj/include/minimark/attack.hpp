#pragma once

#include <array>
#include <cstdint>

#include "minimark/vocab.hpp"

namespace minimark::eval {

/// Random permutation of the 8-identifier pool (may be the identity).
std::array<int, 8> identifier_permutation(std::uint64_t seed);

/// Applies the permutation consistently to every identifier token. Output
/// parses iff the input parses and computes the same function.
minilang::TokenSequence rename_attack(const minilang::TokenSequence& seq, std::uint64_t seed);

}  // namespace minimark::eval
