#include "minimark/tensor.hpp"

namespace minimark::policy {

void linear_forward(const Tensor& x, const Tensor& w, const Tensor& b, Tensor& y) {
  y = Tensor(x.rows, w.cols);
  for (int i = 0; i < x.rows; ++i) {
    for (int k = 0; k < x.cols; ++k) {
      double xv = x.at(i, k);
      if (xv == 0.0) continue;
      for (int j = 0; j < w.cols; ++j) y.at(i, j) += xv * w.at(k, j);
    }
    for (int j = 0; j < w.cols; ++j) y.at(i, j) += b.at(0, j);
  }
}

void linear_backward(const Tensor& x, const Tensor& w, const Tensor& dy, Tensor& dx, Tensor& dw,
                     Tensor& db) {
  dx = Tensor(x.rows, x.cols);
  for (int i = 0; i < x.rows; ++i) {
    for (int j = 0; j < w.cols; ++j) {
      double d = dy.at(i, j);
      if (d == 0.0) continue;
      db.at(0, j) += d;
      for (int k = 0; k < x.cols; ++k) {
        dw.at(k, j) += x.at(i, k) * d;
        dx.at(i, k) += d * w.at(k, j);
      }
    }
  }
}

}  // namespace minimark::policy
