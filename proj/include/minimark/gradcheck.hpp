#pragma once

#include <functional>
#include <span>
#include <vector>

#include "minimark/policy.hpp"

namespace minimark::policy {

struct ParamCoord {
  int tensor = 0;  // index in for_each_tensor order
  int elem = 0;
};

int tensor_count(const PolicyParams& p);
Tensor& tensor_at(PolicyParams& p, int index);

/// Random coordinates, stratified so every tensor is represented when the
/// budget allows.
std::vector<ParamCoord> sample_coords(const PolicyParams& p, int total, Rng& rng);

/// Central finite differences of `f` against `analytic` at the listed
/// coordinates; returns the maximum relative error. Throws NonFiniteGradient
/// on non-finite values. eps should lie in [1e-6, 1e-3].
double gradient_check(const PolicyParams& at, const std::function<double(const PolicyParams&)>& f,
                      const PolicyParams& analytic, std::span<const ParamCoord> coords, double eps);

}  // namespace minimark::policy
