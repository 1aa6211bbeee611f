#ifndef ECMOE_KERNELS_HPP
#define ECMOE_KERNELS_HPP

#include <cstddef>
#include <utility>

#include "ecmoe/matrix.hpp"

namespace ecmoe {

// Dense kernels, OpenMP-parallel over rows. Each output element is produced
// by the same per-element arithmetic (and the same accumulation order) as the
// serial reference in ecmoe::ref, so results are bit-identical to it at any
// thread count.

// c[i][j] = sum_t a[i][t] * b[t][j], f64 accumulation, ascending t.
Matrix matmul(const Matrix& a, const Matrix& b);

// Row-wise softmax with per-row max subtraction.
Matrix softmax_rows(const Matrix& m);

// Per row: the k largest entries, value-descending, ties broken by lowest
// column index. Returns (values, indices); indices domain = m.cols().
std::pair<Matrix, IndexMatrix> topk_rows(const Matrix& m, std::size_t k);

Matrix transpose(const Matrix& m);

// GeLU, tanh approximation: 0.5*x*(1 + tanh(sqrt(2/pi)*(x + 0.044715*x^3))).
double gelu(double x);
double gelu_grad(double x);

// Given s = softmax_rows(z) and dL/ds, returns dL/dz.
Matrix softmax_backward_rows(const Matrix& s, const Matrix& grad_s);

namespace ref {

// Serial reference implementations. matmul here is the definitional naive
// i,j,t triple loop; the parallel kernel must match it bitwise.
Matrix matmul(const Matrix& a, const Matrix& b);
Matrix softmax_rows(const Matrix& m);
std::pair<Matrix, IndexMatrix> topk_rows(const Matrix& m, std::size_t k);
Matrix transpose(const Matrix& m);

}  // namespace ref

// Honors ECMOE_THREADS (0 or unset = OpenMP default). Call once at startup.
void configure_threads_from_env();

}  // namespace ecmoe

#endif
