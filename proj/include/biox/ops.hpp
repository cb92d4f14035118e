#pragma once

#include <span>

#include "biox/tensor.hpp"

namespace biox::ops {

inline constexpr double kLayerNormEps = 1e-5;

// Forward kernels. Conventions: the last two axes are the (rows, cols) pair
// an operation works on; any leading axes are batch. Weight-like operands
// (matmul rhs, conv filters, biases, norm affines) are unbatched.

Tensor matmul(const Tensor& a, const Tensor& w);  // (..., n, k) x (k, m) -> (..., n, m)

// Valid (no padding) 1-D convolution over the time axis.
// x: (..., T, Cin), w: (K, Cin, Cout), b: (Cout) -> (..., T', Cout) with
// T' = (T - K) / stride + 1.
Tensor conv1d(const Tensor& x, const Tensor& w, const Tensor& b, int64_t stride);

// Normalizes the last axis, then applies the affine (gamma, beta), both (d).
Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps = kLayerNormEps);

// Single-head scaled dot-product attention; q, k, v: (..., N, d).
Tensor attention(const Tensor& q, const Tensor& k, const Tensor& v);

Tensor add(const Tensor& a, const Tensor& b);      // same shape
Tensor add_bias(const Tensor& x, const Tensor& b); // b: (d), broadcast over leading axes
Tensor mul(const Tensor& a, const Tensor& b);      // elementwise, same shape
Tensor scale(const Tensor& a, double c);
Tensor gelu(const Tensor& x);  // exact erf form
Tensor relu(const Tensor& x);

// Mean over a single axis (negative axes count from the back); the axis is
// removed from the shape.
Tensor mean_pool(const Tensor& x, int axis);

// Max over a single axis (same axis conventions as mean_pool). Ties resolve
// to the smallest index, which also receives the whole gradient.
Tensor max_pool(const Tensor& x, int axis);

// One dimension may be -1 (inferred).
Tensor reshape(const Tensor& x, Shape shape);

Tensor softmax(const Tensor& x);      // last axis, max-shifted
Tensor log_softmax(const Tensor& x);  // last axis

Tensor sum_all(const Tensor& x);   // rank-0 result
Tensor transpose(const Tensor& x); // swap last two axes

// Rows are vectors along the last axis; zero rows pass through unchanged.
Tensor l2_normalize_rows(const Tensor& x);

// Mean over rows of (1 - cosine similarity). A row where either side has
// (near-)zero norm contributes exactly 1 and is counted in zero_norm_rows.
Tensor cosine_row_loss(const Tensor& a, const Tensor& b, int64_t* zero_norm_rows = nullptr);

Tensor mae_loss(const Tensor& a, const Tensor& b);

// Vector-Jacobian products. g is the gradient w.r.t. the kernel output.
Tensor matmul_vjp_a(const Tensor& g, const Tensor& w);
Tensor matmul_vjp_w(const Tensor& a, const Tensor& g);
void conv1d_vjp(const Tensor& x, const Tensor& w, int64_t stride, const Tensor& g, Tensor* dx, Tensor* dw,
                Tensor* db);
void layer_norm_vjp(const Tensor& x, const Tensor& gamma, double eps, const Tensor& g, Tensor* dx, Tensor* dgamma,
                    Tensor* dbeta);
void attention_vjp(const Tensor& q, const Tensor& k, const Tensor& v, const Tensor& g, Tensor* dq, Tensor* dk,
                   Tensor* dv);
Tensor add_bias_vjp_b(const Tensor& g);
Tensor gelu_vjp(const Tensor& x, const Tensor& g);
Tensor relu_vjp(const Tensor& x, const Tensor& g);
Tensor mean_pool_vjp(const Tensor& g, const Shape& in_shape, int axis);
Tensor max_pool_vjp(const Tensor& x, const Tensor& g, int axis);
Tensor softmax_vjp(const Tensor& y, const Tensor& g);
Tensor log_softmax_vjp(const Tensor& y, const Tensor& g);
Tensor sum_all_vjp(const Tensor& g, const Shape& in_shape);
Tensor l2_normalize_rows_vjp(const Tensor& x, const Tensor& g);
void cosine_row_loss_vjp(const Tensor& a, const Tensor& b, const Tensor& g, Tensor* da, Tensor* db);
void mae_loss_vjp(const Tensor& a, const Tensor& b, const Tensor& g, Tensor* da, Tensor* db);

/// Identifier for the generic dispatcher below.
enum class Primitive {
    MatMul,
    Conv1d,
    LayerNorm,
    Attention,
    Add,
    AddBias,
    Mul,
    Scale,
    Gelu,
    Relu,
    MeanPool,
    MaxPool,
    Reshape,
    Softmax,
    LogSoftmax,
    SumAll,
    Transpose,
    L2NormalizeRows,
    CosineRowLoss,
    MaeLoss,
};

const char* primitive_name(Primitive p);

struct PrimitiveAttrs {
    int64_t stride = 1;    // Conv1d
    int axis = 0;          // MeanPool / MaxPool
    double value = 0.0;    // Scale
    Shape shape;           // Reshape
    double eps = kLayerNormEps;
};

/// Uniform entry point used by tests and bindings; library code calls the
/// typed kernels directly.
Tensor primitive_forward(Primitive kind, std::span<const Tensor> inputs, const PrimitiveAttrs& attrs = {});

}  // namespace biox::ops
