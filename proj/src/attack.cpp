#include "minimark/attack.hpp"

#include "minimark/rng.hpp"

namespace minimark::eval {

std::array<int, 8> identifier_permutation(std::uint64_t seed) {
  std::array<int, 8> perm;
  for (int i = 0; i < 8; ++i) perm[i] = i;
  Rng rng(mix64(seed, 0x72656e616d65ull));
  for (int i = 7; i > 0; --i) {
    int j = static_cast<int>(rng.next_below(i + 1));
    std::swap(perm[i], perm[j]);
  }
  return perm;
}

minilang::TokenSequence rename_attack(const minilang::TokenSequence& seq, std::uint64_t seed) {
  const minilang::Vocabulary& voc = minilang::Vocabulary::standard();
  std::array<int, 8> perm = identifier_permutation(seed);
  minilang::TokenSequence out = seq;
  for (minilang::TokenId& id : out.ids)
    if (voc.is_identifier(id)) id = voc.identifier_token(perm[voc.identifier_index(id)]);
  return out;
}

}  // namespace minimark::eval
