#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "owdetr/numerics/tensor.hpp"

// Differentiable kernels. Every kernel computes its forward eagerly and, when
// any input requires grad, records a backward rule on the result node.
//
// Broadcasting is limited to leading-dimension expansion: in the binary
// elementwise kernels the second operand's shape must equal the first's or be
// a suffix of it (e.g. a bias [n] against activations [m x n]).
namespace owdetr::numerics {

Tensor matmul(const Tensor& a, const Tensor& b);
// [B x m x k] . [B x k x n] -> [B x m x n]
Tensor batched_matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
// Same shapes only.
Tensor div(const Tensor& a, const Tensor& b);
Tensor minimum(const Tensor& a, const Tensor& b);
Tensor maximum(const Tensor& a, const Tensor& b);

Tensor scale(const Tensor& a, double factor);
Tensor add_scalar(const Tensor& a, double value);
Tensor neg(const Tensor& a);
Tensor abs(const Tensor& a);
Tensor relu(const Tensor& a);
Tensor sigmoid(const Tensor& a);

// Along the last axis, max-subtracted.
Tensor softmax(const Tensor& x);
// Normalizes over the last axis then applies gain [n] and bias [n].
Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias,
                  double eps = 1e-5);

Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);
// [... x n] -> [...]; a rank-1 input reduces to shape [1].
Tensor sum_last(const Tensor& a);

Tensor reshape(const Tensor& a, Shape shape);
// Range [start, start+count) of the first axis.
Tensor slice_rows(const Tensor& a, std::size_t start, std::size_t count);
// Column range of a matrix.
Tensor slice_cols(const Tensor& a, std::size_t start, std::size_t count);
Tensor concat_rows(std::span<const Tensor> parts);
Tensor concat_cols(std::span<const Tensor> parts);
// Repeats each row of a matrix `times` times in place: rows r0,r0,r1,r1,...
Tensor repeat_rows(const Tensor& a, std::size_t times);
// Picks rows of a matrix by index; indices may repeat.
Tensor gather_rows(const Tensor& a, std::span<const std::size_t> rows);

// x [C_in x H x W], w [C_out x C_in x k x k], optional bias [C_out].
// Zero padding. Output [C_out x H' x W'] with H' = (H + 2 pad - k) / stride + 1.
Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& bias,
              std::size_t stride, std::size_t pad);
Tensor conv2d(const Tensor& x, const Tensor& w, std::size_t stride,
              std::size_t pad);

// feature [C x H x W], points [P x 2] of (x, y) in continuous grid units where
// cell (row r, col c) has its center at (c + 0.5, r + 0.5). Bilinear blend of
// the four surrounding cell centers; cells outside the grid contribute zero.
// Differentiable with respect to both the feature values and the points.
Tensor bilinear_sample(const Tensor& feature, const Tensor& points);

}  // namespace owdetr::numerics
