#pragma once

#include "phonogan/tensor.hpp"

namespace phonogan::nn {

// Elementwise arithmetic (same-shape operands).
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double c);
Tensor add_scalar(const Tensor& a, double c);
Tensor neg(const Tensor& a);
Tensor square(const Tensor& a);
Tensor sqrt_(const Tensor& a);
Tensor exp_(const Tensor& a);
Tensor log_(const Tensor& a);

enum class Nonlin { relu, leaky_relu, tanh };
Tensor relu(const Tensor& a);
Tensor leaky_relu(const Tensor& a, double slope = 0.2);
Tensor tanh_(const Tensor& a);
Tensor nonlinearity(const Tensor& a, Nonlin kind);

// Reductions and broadcasts.
Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);
Tensor broadcast_fill(const Tensor& s, Shape shape);      // scalar -> shape
Tensor rowsum(const Tensor& x);                           // [C,T] -> [C]
Tensor broadcast_col(const Tensor& b, int cols);          // [C] -> [C,cols]
Tensor reshape(const Tensor& a, Shape shape);
Tensor pick(const Tensor& x, long i);                     // [n] -> scalar
Tensor scatter1(const Tensor& s, long n, long i);         // scalar -> e_i * s

// Dense algebra. Weight is [m x n] row-major.
Tensor matvec(const Tensor& w, const Tensor& x);          // W x
Tensor matvec_t(const Tensor& w, const Tensor& y);        // W^T y
Tensor outer(const Tensor& u, const Tensor& v);           // u v^T

/// y = W x + b with shape diagnostics naming both sides.
Tensor dense(const Tensor& x, const Tensor& w, const Tensor& b);

/// Strided cross-correlation of [C_in x T] with kernels [C_out x C_in x K].
/// Zero-padded symmetrically so the output length is ceil(T / stride); when
/// the total padding is odd the extra zero goes on the right.
Tensor conv1d(const Tensor& x, const Tensor& kernels, int stride);

/// Fractionally-strided convolution of [C_in x T] with kernels
/// [C_in x C_out x K]. The full scatter has length (T-1)*stride + K; the
/// extra (K - stride) samples are trimmed half from each end (left gets the
/// smaller share) so the output is exactly [C_out x T*stride]. K < stride
/// leaves unreachable zeros and is flagged once on stderr.
Tensor conv1d_transpose(const Tensor& x, const Tensor& kernels, int stride);

/// Shift [C x T] along time by `shift` (positive = right), reflecting at the
/// edges (index -1 maps to 0, T to T-1). Shape preserved; linear op.
Tensor time_shift_reflect(const Tensor& x, int shift);

/// The phase-shuffle layer: draws shift uniformly from {-n..n} and applies
/// time_shift_reflect. n = 0 is the identity.
Tensor phase_shuffle(const Tensor& x, int n, Rng& rng);

// Exposed for tests: the raw adjoint kernels behind conv1d / conv1d_transpose.
Tensor conv1d_grad_input(const Tensor& gy, const Tensor& kernels, int stride, int t_in);
Tensor conv1d_grad_kernel(const Tensor& x, const Tensor& gy, int stride, int k_width);
Tensor conv1d_transpose_grad_input(const Tensor& gy, const Tensor& kernels, int stride, int t_in);
Tensor conv1d_transpose_grad_kernel(const Tensor& x, const Tensor& gy, int stride, int k_width);

}  // namespace phonogan::nn
