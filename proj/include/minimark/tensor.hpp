#pragma once

#include <cstddef>
#include <vector>

#include "minimark/rng.hpp"

namespace minimark::policy {

/// Dense row-major matrix of doubles. Row vectors use rows == 1.
struct Tensor {
  int rows = 0, cols = 0;
  std::vector<double> a;

  Tensor() = default;
  Tensor(int r, int c) : rows(r), cols(c), a(static_cast<std::size_t>(r) * c, 0.0) {}

  double& at(int i, int j) { return a[static_cast<std::size_t>(i) * cols + j]; }
  double at(int i, int j) const { return a[static_cast<std::size_t>(i) * cols + j]; }
  int size() const { return rows * cols; }
  void zero() { std::fill(a.begin(), a.end(), 0.0); }
  void fill_gaussian(Rng& rng, double stddev) {
    for (double& x : a) x = rng.next_gaussian() * stddev;
  }
  void fill(double v) { std::fill(a.begin(), a.end(), v); }
};

// y = x · w + b, x: n×k, w: k×m, b: 1×m
void linear_forward(const Tensor& x, const Tensor& w, const Tensor& b, Tensor& y);

// Accumulates dw += xᵀ·dy, db += column-sums(dy); writes dx = dy·wᵀ.
void linear_backward(const Tensor& x, const Tensor& w, const Tensor& dy, Tensor& dx, Tensor& dw,
                     Tensor& db);

}  // namespace minimark::policy
