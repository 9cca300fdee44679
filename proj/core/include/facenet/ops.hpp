#pragma once

#include <cstdint>

#include "facenet/autograd.hpp"

/// Differentiable tensor operations. Binary elementwise ops broadcast over
/// axes where one operand has extent 1 (operands must have equal rank).
namespace facenet::ops {

Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var scale(const Var& a, double s);
Var add_scalar(const Var& a, double s);

Var relu(const Var& x);
Var sigmoid(const Var& x);

/// x: B x Cin x H x W, weight: Cout x Cin x kh x kw, bias: Cout (may be undefined).
Var conv2d(const Var& x, const Var& weight, const Var& bias, int stride, int pad);
Var max_pool2d(const Var& x, int kernel, int stride, int pad);
/// B x C x H x W -> B x C x 1 x 1.
Var global_avg_pool(const Var& x);

/// Per-sample group normalisation of B x C x H x W: channels split into
/// `groups` contiguous groups, each standardised over its channels and
/// positions, then scaled by gamma and shifted by beta (both length C).
Var group_norm(const Var& x, const Var& gamma, const Var& beta, int groups, double eps = 1e-5);

Var reshape(const Var& x, Shape shape);
/// x: B x D, weight: O x D, bias: O (may be undefined) -> B x O.
Var linear(const Var& x, const Var& weight, const Var& bias);
/// Concatenate along axis 1 (channels for rank 4, features for rank 2).
Var concat1(const Var& a, const Var& b);
/// B x 1 x H x W -> B x C x H x W.
Var repeat_channels(const Var& x, std::int64_t channels);

Var sum(const Var& x);
Var mean(const Var& x);

/// Hard threshold 1[soft > sigmoid(delta)] in the forward pass. The backward
/// pass treats the output as soft - sigmoid(delta) (straight-through), so both
/// the soft map and the scalar delta receive gradient.
Var binarize_ste(const Var& soft, const Var& delta);

/// Output size of a strided convolution / pooling window along one axis.
std::int64_t conv_out_size(std::int64_t in, int kernel, int stride, int pad);

}  // namespace facenet::ops
