#pragma once

// Linear centered-kernel-alignment between two sets of per-sample
// representations. Rows are flattened (N*d) layer outputs; row i of both
// matrices must come from the same underlying sample.

#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "biox/tensor.hpp"

namespace biox {

// Raised when a representation has zero centered variance (e.g. a layer that
// outputs the same vector for every sample), which makes CKA undefined.
struct DegenerateRepresentationError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct RepresentationMatrix {
    Tensor values;  // (n_samples, N*d)
    int64_t layer = 0;
    std::string modality;
};

// K = H . H^T over (n, p) rows; result is symmetric (n, n).
Tensor gram(const Tensor& H);

// trace(K_t H K_s H) / n^2 with H the centering matrix I - 11^T/n, computed
// via centered Grams. Requires two square matrices of equal size n >= 2.
double hsic(const Tensor& Kt, const Tensor& Ks);

// HSIC(a,b) / sqrt(HSIC(a,a) * HSIC(b,b)) on the Grams of the two inputs.
// Throws DegenerateRepresentationError when either self-HSIC vanishes.
double cka_linear(const Tensor& Ha, const Tensor& Hb);

// The row subset used when comparisons are capped: `cap` distinct sample
// indices in increasing order, deterministic in (n, cap, seed). cap >= n
// keeps every row. The same index set must be applied to both sides of a
// comparison.
std::vector<int64_t> subsample_indices(int64_t n, int64_t cap, uint64_t seed);

Tensor take_rows(const Tensor& H, std::span<const int64_t> rows);

RepresentationMatrix subsample_rows(const RepresentationMatrix& H, int64_t cap, uint64_t seed);

inline constexpr int64_t kDefaultCkaRowCap = 512;

}  // namespace biox
