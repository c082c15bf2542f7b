#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "minimark/corpus.hpp"
#include "minimark/rng.hpp"
#include "minimark/vocab.hpp"

namespace minimark::lm {

using Logits = std::vector<double>;  // natural-log scale, length |V|

/// Frozen stupid-backoff n-gram over MiniLang tokens with add-lambda smoothed
/// conditionals: the longest observed context order answers a query; shorter
/// orders are consulted only when the context was never seen. Immutable after
/// fit; safe for unbounded concurrent reads.
class BaseLM {
 public:
  /// Counts every task's concat(prompt, reference, END). Throws EmptyCorpus.
  static BaseLM fit(const std::vector<corpus::Task>& tasks, int order, double lambda,
                    const minilang::Vocabulary& vocab);

  /// Smoothed log-probabilities of the next token after `prefix` (any length;
  /// the last order-1 tokens are used, empty prefixes fall back to unigrams).
  Logits next_logits(std::span<const minilang::TokenId> prefix) const;

  int order() const { return order_; }
  double lambda() const { return lambda_; }
  std::uint64_t vocab_fingerprint() const { return vocab_fp_; }

  /// Order-independent digest of all count tables (frozen-ness checks).
  std::uint64_t table_hash() const;

  void save(const std::string& path) const;
  static BaseLM load(const std::string& path, const minilang::Vocabulary& vocab);

 private:
  struct Entry {
    std::uint64_t total = 0;
    std::vector<std::pair<std::uint8_t, std::uint32_t>> counts;  // sorted by token id
    void add(int token);
    std::uint32_t count_of(int token) const;
  };

  BaseLM() = default;

  int order_ = 0;
  double lambda_ = 0.0;
  int vocab_size_ = 0;
  std::uint64_t vocab_fp_ = 0;
  // tables_[k]: context of length k (one byte per token) -> continuation counts
  std::vector<std::unordered_map<std::string, Entry>> tables_;
};

/// Draw from softmax(logits / temperature) using the caller's stream.
minilang::TokenId sample_token(const Logits& logits, double temperature, Rng& rng);

/// Shannon entropy (nats) of softmax(logits).
double token_entropy(const Logits& logits);

/// softmax(logits / temperature), numerically shifted.
std::vector<double> softmax(std::span<const double> logits, double temperature = 1.0);

}  // namespace minimark::lm
