#pragma once
#include <vector>

#include "fp/tape.hpp"
#include "fp/tensor.hpp"

namespace fp {

// All ops share one convention: pass a Tape* to record for backward, or
// nullptr for plain evaluation. A node is recorded only when some input is
// differentiable (on the tape already, or requiring grad).

// b must have a's shape, or match a trailing suffix of it (bias broadcast).
Tensor add(Tape* t, const Tensor& a, const Tensor& b);
Tensor sub(Tape* t, const Tensor& a, const Tensor& b);
Tensor mul(Tape* t, const Tensor& a, const Tensor& b);  // elementwise

Tensor matmul(Tape* t, const Tensor& a, const Tensor& b);  // (m,k)x(k,n)

// x: (B,Cin,H,W), w: (Cout,Cin,kh,kw), bias: (Cout) or undefined
Tensor conv2d(Tape* t, const Tensor& x, const Tensor& w, const Tensor& bias,
              int stride, int padding);

Tensor relu(Tape* t, const Tensor& x);

Tensor maxpool2d(Tape* t, const Tensor& x, int kernel, int stride);
Tensor avgpool2d(Tape* t, const Tensor& x, int kernel, int stride);

Tensor flatten(Tape* t, const Tensor& x);  // (d0, rest...) -> (d0, prod(rest))

// Fused, numerically stable: mean over the batch of -log softmax(logits)[label].
// per_sample, when given, receives the B unreduced losses.
Tensor softmax_cross_entropy(Tape* t, const Tensor& logits, const std::vector<int>& labels,
                             std::vector<double>* per_sample = nullptr);

Tensor l2_norm_squared(Tape* t, const Tensor& x);  // scalar: sum of squares
Tensor scalar_scale(Tape* t, const Tensor& x, double c);
Tensor sum(Tape* t, const Tensor& x);   // scalar
Tensor mean(Tape* t, const Tensor& x);  // scalar

// Plain kernels shared with the ops; handy for tests and inference paths.
void matmul_kernel(const double* a, const double* b, double* c, int m, int k, int n);
std::vector<double> row_softmax(const std::vector<double>& logits, int rows, int cols);

}  // namespace fp
