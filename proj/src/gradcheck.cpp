#include "minimark/gradcheck.hpp"

#include <cmath>

#include "minimark/errors.hpp"

namespace minimark::policy {

int tensor_count(const PolicyParams& p) {
  int n = 0;
  for_each_tensor(p, [&](const std::string&, const Tensor&) { ++n; });
  return n;
}

Tensor& tensor_at(PolicyParams& p, int index) {
  Tensor* found = nullptr;
  int n = 0;
  for_each_tensor(p, [&](const std::string&, Tensor& t) {
    if (n == index) found = &t;
    ++n;
  });
  if (!found) throw DomainError("tensor index out of range");
  return *found;
}

std::vector<ParamCoord> sample_coords(const PolicyParams& p, int total, Rng& rng) {
  std::vector<int> sizes;
  for_each_tensor(p, [&](const std::string&, const Tensor& t) { sizes.push_back(t.size()); });
  std::vector<ParamCoord> coords;
  const int nt = static_cast<int>(sizes.size());
  for (int i = 0; i < total; ++i) {
    int t = (i < nt) ? i : static_cast<int>(rng.next_below(nt));  // cover each tensor first
    coords.push_back({t, static_cast<int>(rng.next_below(sizes[t]))});
  }
  return coords;
}

double gradient_check(const PolicyParams& at, const std::function<double(const PolicyParams&)>& f,
                      const PolicyParams& analytic, std::span<const ParamCoord> coords,
                      double eps) {
  if (eps < 1e-6 || eps > 1e-3) throw DomainError("eps must be in [1e-6, 1e-3]");
  PolicyParams work = at;
  double max_rel = 0.0;
  for (const ParamCoord& c : coords) {
    Tensor& t = tensor_at(work, c.tensor);
    const double keep = t.a[c.elem];
    t.a[c.elem] = keep + eps;
    double fp = f(work);
    t.a[c.elem] = keep - eps;
    double fm = f(work);
    t.a[c.elem] = keep;
    double fd = (fp - fm) / (2 * eps);
    PolicyParams& an = const_cast<PolicyParams&>(analytic);
    double a = tensor_at(an, c.tensor).a[c.elem];
    if (!std::isfinite(fd) || !std::isfinite(a)) throw NonFiniteGradient("non-finite gradient");
    double denom = std::max(std::abs(a) + std::abs(fd), 1e-6);
    max_rel = std::max(max_rel, std::abs(fd - a) / denom);
  }
  return max_rel;
}

}  // namespace minimark::policy
