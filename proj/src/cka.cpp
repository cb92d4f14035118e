#include "biox/cka.hpp"

#include <algorithm>
#include <cmath>

namespace biox {

namespace {

// Self-HSIC below this is treated as exactly degenerate.
constexpr double kDegenerateTol = 1e-30;

void require_square_pair(const Tensor& Kt, const Tensor& Ks) {
    if (Kt.rank() != 2 || Kt.dim(0) != Kt.dim(1) || Ks.rank() != 2 || Ks.dim(0) != Ks.dim(1)) {
        throw ShapeError("hsic: inputs must be square matrices, got " + shape_str(Kt.shape()) + " and " +
                         shape_str(Ks.shape()));
    }
    if (Kt.dim(0) != Ks.dim(0)) {
        throw ShapeError("hsic: size mismatch " + shape_str(Kt.shape()) + " vs " + shape_str(Ks.shape()));
    }
    if (Kt.dim(0) < 2) throw ShapeError("hsic: needs at least 2 samples");
}

// K~ = H K H expanded as K[i][j] - rowmean_i - colmean_j + totalmean.
Tensor center_gram(const Tensor& K) {
    int64_t n = K.dim(0);
    std::vector<double> row_mean(static_cast<size_t>(n), 0.0);
    std::vector<double> col_mean(static_cast<size_t>(n), 0.0);
    double total = 0.0;
    for (int64_t i = 0; i < n; ++i) {
        for (int64_t j = 0; j < n; ++j) {
            double v = K[i * n + j];
            row_mean[static_cast<size_t>(i)] += v;
            col_mean[static_cast<size_t>(j)] += v;
            total += v;
        }
    }
    for (auto& v : row_mean) v /= static_cast<double>(n);
    for (auto& v : col_mean) v /= static_cast<double>(n);
    total /= static_cast<double>(n * n);
    Tensor out(K.shape());
    for (int64_t i = 0; i < n; ++i) {
        for (int64_t j = 0; j < n; ++j) {
            out[i * n + j] =
                K[i * n + j] - row_mean[static_cast<size_t>(i)] - col_mean[static_cast<size_t>(j)] + total;
        }
    }
    return out;
}

}  // namespace

Tensor gram(const Tensor& H) {
    if (H.rank() != 2) throw ShapeError("gram: input must be (n, p), got " + shape_str(H.shape()));
    int64_t n = H.dim(0), p = H.dim(1);
    Tensor K(Shape{n, n});
    const double* hp = H.data();
    for (int64_t i = 0; i < n; ++i) {
        for (int64_t j = i; j < n; ++j) {
            double acc = 0.0;
            const double* ri = hp + i * p;
            const double* rj = hp + j * p;
            for (int64_t c = 0; c < p; ++c) acc += ri[c] * rj[c];
            K[i * n + j] = acc;
            K[j * n + i] = acc;
        }
    }
    return K;
}

double hsic(const Tensor& Kt, const Tensor& Ks) {
    require_square_pair(Kt, Ks);
    int64_t n = Kt.dim(0);
    Tensor ct = center_gram(Kt);
    Tensor cs = center_gram(Ks);
    // trace(ct . cs) = sum_ij ct[i][j] * cs[j][i]
    double acc = 0.0;
    for (int64_t i = 0; i < n; ++i) {
        for (int64_t j = 0; j < n; ++j) acc += ct[i * n + j] * cs[j * n + i];
    }
    return acc / static_cast<double>(n * n);
}

double cka_linear(const Tensor& Ha, const Tensor& Hb) {
    if (Ha.rank() != 2 || Hb.rank() != 2) {
        throw ShapeError("cka_linear: inputs must be (n, p), got " + shape_str(Ha.shape()) + " and " +
                         shape_str(Hb.shape()));
    }
    if (Ha.dim(0) != Hb.dim(0)) {
        throw ShapeError("cka_linear: sample counts differ: " + shape_str(Ha.shape()) + " vs " +
                         shape_str(Hb.shape()));
    }
    if (Ha.dim(0) < 2) throw ShapeError("cka_linear: needs at least 2 samples");
    Tensor Ka = gram(Ha);
    Tensor Kb = gram(Hb);
    double cross = hsic(Ka, Kb);
    double self_a = hsic(Ka, Ka);
    double self_b = hsic(Kb, Kb);
    if (self_a <= kDegenerateTol || self_b <= kDegenerateTol) {
        throw DegenerateRepresentationError(
            "cka_linear: degenerate representation (zero centered variance) — self-HSIC " +
            std::to_string(self_a) + " / " + std::to_string(self_b));
    }
    return cross / std::sqrt(self_a * self_b);
}

std::vector<int64_t> subsample_indices(int64_t n, int64_t cap, uint64_t seed) {
    if (cap < 2) throw ShapeError("subsample_rows: cap must be >= 2, got " + std::to_string(cap));
    if (n < 2) throw ShapeError("subsample_rows: needs at least 2 rows, got " + std::to_string(n));
    std::vector<int64_t> idx;
    if (cap >= n) {
        idx.resize(static_cast<size_t>(n));
        for (int64_t i = 0; i < n; ++i) idx[static_cast<size_t>(i)] = i;
        return idx;
    }
    Rng rng(seed);
    idx = rng.sample_without_replacement(n, cap);
    std::sort(idx.begin(), idx.end());
    return idx;
}

Tensor take_rows(const Tensor& H, std::span<const int64_t> rows) {
    if (H.rank() != 2) throw ShapeError("take_rows: input must be (n, p), got " + shape_str(H.shape()));
    int64_t p = H.dim(1);
    Tensor out(Shape{static_cast<int64_t>(rows.size()), p});
    for (size_t i = 0; i < rows.size(); ++i) {
        int64_t r = rows[i];
        if (r < 0 || r >= H.dim(0)) throw ShapeError("take_rows: row index out of range");
        for (int64_t c = 0; c < p; ++c) out[static_cast<int64_t>(i) * p + c] = H[r * p + c];
    }
    return out;
}

RepresentationMatrix subsample_rows(const RepresentationMatrix& H, int64_t cap, uint64_t seed) {
    std::vector<int64_t> idx = subsample_indices(H.values.dim(0), cap, seed);
    return {take_rows(H.values, idx), H.layer, H.modality};
}

}  // namespace biox
