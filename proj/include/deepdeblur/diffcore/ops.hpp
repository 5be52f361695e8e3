#pragma once

#include <cstddef>
#include <string>

#include "deepdeblur/diffcore/tape.hpp"

// Differentiable primitives. Layout conventions:
//   feature maps   [N, C, H, W]
//   dense inputs   [N, F]  (or a flat vector, treated as N = 1)
//   images         [H, W, C]
//   blur kernels   [kh, kw]
// Reductions accumulate in double and store the result as float.
namespace deepdeblur::diff {

// --- elementwise -----------------------------------------------------------
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var a, float factor);
Var add_scalar(Var a, float offset);
Var exp(Var a);
Var relu(Var a);
Var sigmoid(Var a);

inline Var operator+(Var a, Var b) { return add(a, b); }
inline Var operator-(Var a, Var b) { return sub(a, b); }
inline Var operator*(Var a, Var b) { return mul(a, b); }
inline Var operator*(float s, Var a) { return scale(a, s); }
inline Var operator*(Var a, float s) { return scale(a, s); }

// --- shape -----------------------------------------------------------------
Var reshape(Var a, Shape shape);
// [1, C, H, W] -> [H, W, C].
Var chw_to_hwc(Var a);

// --- reductions (result shape [1]) ----------------------------------------
Var sum(Var a);
Var sum_squares(Var a);
// Anisotropic total variation of an [H, W, C] image: sum of absolute forward
// differences along rows and columns, no wrap-around. Subgradient 0 at ties.
Var tv_norm(Var image);

// --- layers ----------------------------------------------------------------
// x: [n] or [N, n]; weight: [m, n]; bias: [m]. Returns [m] or [N, m].
Var dense(Var x, Var weight, Var bias);

// Valid-padding convolution (cross-correlation, as in every NN framework).
// x: [N, C, H, W]; weight: [F, C, kh, kw]; bias: [F] or unbound.
Var conv2d(Var x, Var weight, Var bias, std::size_t stride);
Var conv2d(Var x, Var weight, std::size_t stride);

// Transposed convolution, the adjoint of conv2d with the same weight tensor.
// x: [N, F, H, W]; weight: [F, C, kh, kw]; bias: [C] or unbound.
// Output spatial size is (in - 1) * stride + k.
Var conv_transpose2d(Var x, Var weight, Var bias, std::size_t stride);
Var conv_transpose2d(Var x, Var weight, std::size_t stride);

// Gradient goes to the first maximum in row-major window order.
Var maxpool2d(Var x, std::size_t size, std::size_t stride);
Var upsample_nearest(Var x, std::size_t factor);

struct BatchStats {
  Tensor mean;      // [C]
  Tensor variance;  // [C], biased
};

// Normalizes over (N, H, W) per channel for [N, C, H, W] or over N per
// feature for [N, F]. Batch statistics are written to `stats` when non-null.
Var batchnorm_train(Var x, Var gamma, Var beta, float eps, BatchStats* stats = nullptr);
// Same normalization using frozen statistics.
Var batchnorm_infer(Var x, Var gamma, Var beta, const Tensor& mean, const Tensor& variance,
                    float eps);

// --- forward model ---------------------------------------------------------
// Circular same-size convolution of each channel of an [H, W, C] image with a
// [kh, kw] kernel (true convolution: the kernel is flipped). Kernel entry
// (kh/2, kw/2) sits at offset zero. Evaluated through FFTs.
Var conv2d_circular(Var image, Var kernel);

// Non-differentiable evaluation of the same operator.
Tensor circular_convolve(const Tensor& image, const Tensor& kernel);

// Version string of the FFT backend, for run manifests.
std::string fft_library_version();

}  // namespace deepdeblur::diff
