#include "minimark/base_lm.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "minimark/errors.hpp"
#include "minimark/io_util.hpp"

namespace minimark::lm {

using minilang::TokenId;

void BaseLM::Entry::add(int token) {
  ++total;
  auto it = std::lower_bound(counts.begin(), counts.end(), token,
                             [](const auto& p, int t) { return p.first < t; });
  if (it != counts.end() && it->first == token)
    ++it->second;
  else
    counts.insert(it, {static_cast<std::uint8_t>(token), 1u});
}

std::uint32_t BaseLM::Entry::count_of(int token) const {
  auto it = std::lower_bound(counts.begin(), counts.end(), token,
                             [](const auto& p, int t) { return p.first < t; });
  if (it != counts.end() && it->first == token) return it->second;
  return 0;
}

BaseLM BaseLM::fit(const std::vector<corpus::Task>& tasks, int order, double lambda,
                   const minilang::Vocabulary& vocab) {
  if (tasks.empty()) throw EmptyCorpus();
  if (order < 1) throw DomainError("n-gram order must be >= 1");
  if (lambda <= 0) throw DomainError("smoothing lambda must be > 0");

  BaseLM lm;
  lm.order_ = order;
  lm.lambda_ = lambda;
  lm.vocab_size_ = vocab.size();
  lm.vocab_fp_ = vocab.fingerprint();
  lm.tables_.resize(order);

  std::string seq;
  for (const corpus::Task& task : tasks) {
    seq.clear();
    for (TokenId id : task.prompt.ids) seq.push_back(static_cast<char>(id));
    for (TokenId id : task.reference.ids) seq.push_back(static_cast<char>(id));
    seq.push_back(static_cast<char>(vocab.end()));
    const int len = static_cast<int>(seq.size());
    for (int pos = 0; pos < len; ++pos) {
      int max_k = std::min(pos, order - 1);
      for (int k = 0; k <= max_k; ++k)
        lm.tables_[k][seq.substr(pos - k, k)].add(static_cast<unsigned char>(seq[pos]));
    }
  }
  return lm;
}

Logits BaseLM::next_logits(std::span<const TokenId> prefix) const {
  std::string key;
  int max_k = std::min<int>(order_ - 1, static_cast<int>(prefix.size()));
  const Entry* entry = nullptr;
  for (int k = max_k; k >= 0 && !entry; --k) {
    key.clear();
    for (std::size_t i = prefix.size() - k; i < prefix.size(); ++i)
      key.push_back(static_cast<char>(prefix[i]));
    auto it = tables_[k].find(key);
    if (it != tables_[k].end()) entry = &it->second;
  }
  // The length-0 context always exists after fit.
  Logits logits(vocab_size_);
  const double denom = static_cast<double>(entry->total) + lambda_ * vocab_size_;
  for (int v = 0; v < vocab_size_; ++v)
    logits[v] = std::log((entry->count_of(v) + lambda_) / denom);
  return logits;
}

std::uint64_t BaseLM::table_hash() const {
  std::uint64_t h = 0x4c4d4841ull;
  for (std::size_t k = 0; k < tables_.size(); ++k) {
    std::vector<const std::string*> keys;
    keys.reserve(tables_[k].size());
    for (const auto& [key, entry] : tables_[k]) keys.push_back(&key);
    std::sort(keys.begin(), keys.end(), [](const std::string* a, const std::string* b) { return *a < *b; });
    for (const std::string* key : keys) {
      h = mix64(h, k);
      for (char c : *key) h = mix64(h, static_cast<unsigned char>(c));
      const Entry& e = tables_[k].at(*key);
      h = mix64(h, e.total);
      for (const auto& [tok, cnt] : e.counts) h = mix64(mix64(h, tok), cnt);
    }
  }
  return h;
}

namespace {
constexpr char kMagic[5] = "MMLM";
constexpr std::uint32_t kVersion = 1;
}  // namespace

void BaseLM::save(const std::string& path) const {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open " + path + " for writing");
  io::write_bytes(f, kMagic, 4);
  io::write_pod<std::uint32_t>(f, kVersion);
  io::write_pod<std::int32_t>(f, order_);
  io::write_pod<double>(f, lambda_);
  io::write_pod<std::uint64_t>(f, vocab_fp_);
  io::write_pod<std::int32_t>(f, vocab_size_);
  for (int k = 0; k < order_; ++k) {
    std::vector<const std::string*> keys;
    keys.reserve(tables_[k].size());
    for (const auto& [key, entry] : tables_[k]) keys.push_back(&key);
    std::sort(keys.begin(), keys.end(), [](const std::string* a, const std::string* b) { return *a < *b; });
    io::write_pod<std::uint64_t>(f, keys.size());
    for (const std::string* key : keys) {
      io::write_pod<std::uint8_t>(f, static_cast<std::uint8_t>(key->size()));
      io::write_bytes(f, key->data(), key->size());
      const Entry& e = tables_[k].at(*key);
      io::write_pod<std::uint64_t>(f, e.total);
      io::write_pod<std::uint32_t>(f, static_cast<std::uint32_t>(e.counts.size()));
      for (const auto& [tok, cnt] : e.counts) {
        io::write_pod<std::uint8_t>(f, tok);
        io::write_pod<std::uint32_t>(f, cnt);
      }
    }
  }
  if (!f) throw IoError("failed writing " + path);
}

BaseLM BaseLM::load(const std::string& path, const minilang::Vocabulary& vocab) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open " + path);
  char magic[4];
  io::read_bytes(f, magic, 4);
  if (std::string(magic, 4) != "MMLM") throw IoError(path + " is not a base-lm file");
  auto version = io::read_pod<std::uint32_t>(f);
  if (version != kVersion) throw VersionMismatch("unsupported base-lm file version");
  BaseLM lm;
  lm.order_ = io::read_pod<std::int32_t>(f);
  lm.lambda_ = io::read_pod<double>(f);
  lm.vocab_fp_ = io::read_pod<std::uint64_t>(f);
  lm.vocab_size_ = io::read_pod<std::int32_t>(f);
  if (lm.vocab_fp_ != vocab.fingerprint())
    throw VocabHashMismatch("base-lm file was built against a different vocabulary");
  lm.tables_.resize(lm.order_);
  for (int k = 0; k < lm.order_; ++k) {
    auto n = io::read_pod<std::uint64_t>(f);
    lm.tables_[k].reserve(n);
    for (std::uint64_t i = 0; i < n; ++i) {
      auto len = io::read_pod<std::uint8_t>(f);
      std::string key(len, '\0');
      if (len) io::read_bytes(f, key.data(), len);
      Entry e;
      e.total = io::read_pod<std::uint64_t>(f);
      auto m = io::read_pod<std::uint32_t>(f);
      e.counts.resize(m);
      for (auto& [tok, cnt] : e.counts) {
        tok = io::read_pod<std::uint8_t>(f);
        cnt = io::read_pod<std::uint32_t>(f);
      }
      lm.tables_[k].emplace(std::move(key), std::move(e));
    }
  }
  return lm;
}

std::vector<double> softmax(std::span<const double> logits, double temperature) {
  std::vector<double> p(logits.size());
  double mx = -1e300;
  for (double l : logits) mx = std::max(mx, l / temperature);
  double sum = 0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    p[i] = std::exp(logits[i] / temperature - mx);
    sum += p[i];
  }
  for (double& x : p) x /= sum;
  return p;
}

TokenId sample_token(const Logits& logits, double temperature, Rng& rng) {
  std::vector<double> p = softmax(logits, temperature);
  double u = rng.next_unit();
  double acc = 0;
  for (std::size_t v = 0; v < p.size(); ++v) {
    acc += p[v];
    if (u < acc) return static_cast<TokenId>(v);
  }
  return static_cast<TokenId>(p.size() - 1);
}

double token_entropy(const Logits& logits) {
  std::vector<double> p = softmax(logits, 1.0);
  double h = 0;
  for (double x : p)
    if (x > 0) h -= x * std::log(x);
  return h;
}

}  // namespace minimark::lm
