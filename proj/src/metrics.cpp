#include "minimark/metrics.hpp"

#include <algorithm>
#include <cmath>

#include "minimark/errors.hpp"

namespace minimark::eval {

double auroc(std::span<const ScoreSample> samples) {
  std::vector<double> pos, neg;
  for (const ScoreSample& s : samples) (s.watermarked ? pos : neg).push_back(s.z);
  if (pos.empty() || neg.empty()) throw DegenerateLabels("need at least one sample of each label");
  std::sort(pos.begin(), pos.end());
  std::sort(neg.begin(), neg.end());
  // For each positive, count negatives strictly below and ties via two scans.
  double numer = 0;
  for (double z : pos) {
    auto lo = std::lower_bound(neg.begin(), neg.end(), z);
    auto hi = std::upper_bound(neg.begin(), neg.end(), z);
    numer += static_cast<double>(lo - neg.begin());
    numer += 0.5 * static_cast<double>(hi - lo);
  }
  return numer / (static_cast<double>(pos.size()) * static_cast<double>(neg.size()));
}

double tpr_at_fpr(std::span<const ScoreSample> samples, double fpr_cap) {
  std::vector<double> pos, neg;
  for (const ScoreSample& s : samples) (s.watermarked ? pos : neg).push_back(s.z);
  if (pos.empty() || neg.empty()) throw DegenerateLabels("need at least one sample of each label");
  std::vector<double> thresholds(samples.size());
  for (std::size_t i = 0; i < samples.size(); ++i) thresholds[i] = samples[i].z;
  std::sort(thresholds.begin(), thresholds.end());
  thresholds.erase(std::unique(thresholds.begin(), thresholds.end()), thresholds.end());

  auto fpr_at = [&](double th) {
    std::size_t fp = 0;
    for (double z : neg)
      if (z >= th) ++fp;
    return static_cast<double>(fp) / neg.size();
  };
  // FPR is nonincreasing in the threshold: scan ascending for the smallest
  // admissible one.
  for (double th : thresholds) {
    if (fpr_at(th) <= fpr_cap) {
      std::size_t tp = 0;
      for (double z : pos)
        if (z >= th) ++tp;
      return static_cast<double>(tp) / pos.size();
    }
  }
  return 0.0;  // only an infinite threshold satisfies the cap
}

double pass_at_k(int n, int c, int k) {
  if (c < 0 || c > n || k < 1 || k > n) throw DomainError("pass@k requires 0 <= c <= n, 1 <= k <= n");
  if (c == 0) return 0.0;
  if (n - c < k) return 1.0;
  double prod = 1.0;
  for (int i = 0; i < k; ++i) prod *= static_cast<double>(n - c - i) / static_cast<double>(n - i);
  return 1.0 - prod;
}

double paired_one_sided_p(std::span<const double> before, std::span<const double> after) {
  if (before.size() != after.size() || before.size() < 2) throw DomainError("need paired samples");
  const std::size_t n = before.size();
  double mean = 0;
  for (std::size_t i = 0; i < n; ++i) mean += before[i] - after[i];
  mean /= n;
  double var = 0;
  for (std::size_t i = 0; i < n; ++i) {
    double d = before[i] - after[i] - mean;
    var += d * d;
  }
  var /= (n - 1);
  if (var == 0) return mean > 0 ? 0.0 : 1.0;
  double t = mean / std::sqrt(var / n);
  // Normal approximation of the t distribution; fine for n >= 30.
  return 0.5 * std::erfc(t / std::sqrt(2.0));
}

}  // namespace minimark::eval
