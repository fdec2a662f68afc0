#pragma once

#include <functional>
#include <string>
#include <vector>

#include "modfuse/tensor.hpp"

namespace modfuse {

// Differentiable tensor operations. Each op computes its forward value and,
// when any input lives on a tape, records a backward rule there. Inputs on
// two different tapes are rejected. Broadcasting is deliberately restricted
// to identical shapes or tensor-vs-scalar.

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, float factor);
Tensor add_scalar(const Tensor& a, float term);
Tensor gelu(const Tensor& a);
Tensor mean(const Tensor& a);
Tensor sum(const Tensor& a);
Tensor reshape(const Tensor& a, std::vector<int> shape);
Tensor transpose(const Tensor& a);
Tensor slice(const Tensor& a, int axis, int start, int len);
Tensor concat(const std::vector<Tensor>& parts, int axis);
Tensor softmax(const Tensor& a, int axis);

// [d] -> [rows x d]; the explicit row-broadcast used for bias terms.
Tensor repeat_rows(const Tensor& v, int rows);

// x: [C x T], kernels: [C x K]; channel c of the output depends only on
// channel c of the input. T' = floor((T - K) / stride) + 1.
Tensor conv1d_depthwise(const Tensor& x, const Tensor& kernels, int stride);

// Row-wise normalization of [n x d] with affine gamma/beta of [d].
Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                  float eps = 1e-5f);

// Mean negative log-likelihood over rows of [n x c] logits.
Tensor cross_entropy(const Tensor& logits, const std::vector<int>& labels);

// [H x W] -> [(H/ph * W/pw) x (ph*pw)], patches in row-major order, each row
// a flattened patch. unpatchify is the exact inverse.
Tensor patchify(const Tensor& image, int ph, int pw);
inline Tensor patchify(const Tensor& image, int p) { return patchify(image, p, p); }
Tensor unpatchify(const Tensor& tokens, int height, int width, int ph, int pw);

struct GradCheckReport {
    std::string op_name;
    float max_rel_error = 0.0f;
    std::vector<float> per_param_errors;  // one entry per input tensor
};

// Central-difference check of backward() for a scalar-valued tensor function.
// grad_check binds the inputs as tape leaves itself; `f` only composes ops.
// For each input coordinate: numeric = (f(x+eps e) - f(x-eps e)) / 2eps;
// relative error uses max(|analytic|, |numeric|, 1e-8) as denominator.
using TensorFn = std::function<Tensor(const std::vector<Tensor>&)>;
GradCheckReport grad_check(const std::string& op_name, const TensorFn& f,
                           const std::vector<Tensor>& inputs, float eps);
GradCheckReport grad_check(const std::string& op_name,
                           const std::function<Tensor(const Tensor&)>& f,
                           const Tensor& input, float eps);

}  // namespace modfuse
