#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>

#include "biox/cka.hpp"
#include "biox/ops.hpp"

using namespace biox;

namespace {

// Reference: the definitional trace(K_t H K_s H)/n^2 with H built explicitly.
double hsic_reference(const Tensor& Kt, const Tensor& Ks) {
    int64_t n = Kt.dim(0);
    Tensor H(Shape{n, n});
    for (int64_t i = 0; i < n; ++i) {
        for (int64_t j = 0; j < n; ++j) H[i * n + j] = (i == j ? 1.0 : 0.0) - 1.0 / static_cast<double>(n);
    }
    Tensor prod = ops::matmul(ops::matmul(ops::matmul(Kt, H), Ks), H);
    double tr = 0.0;
    for (int64_t i = 0; i < n; ++i) tr += prod[i * n + i];
    return tr / static_cast<double>(n * n);
}

// Gram-Schmidt orthonormal basis from a random square matrix.
Tensor random_orthogonal(int64_t d, uint64_t seed) {
    Rng rng(seed);
    Tensor Q = rng.normal_tensor({d, d});
    for (int64_t c = 0; c < d; ++c) {
        for (int64_t prev = 0; prev < c; ++prev) {
            double dot = 0.0;
            for (int64_t r = 0; r < d; ++r) dot += Q[r * d + c] * Q[r * d + prev];
            for (int64_t r = 0; r < d; ++r) Q[r * d + c] -= dot * Q[r * d + prev];
        }
        double norm = 0.0;
        for (int64_t r = 0; r < d; ++r) norm += Q[r * d + c] * Q[r * d + c];
        norm = std::sqrt(norm);
        for (int64_t r = 0; r < d; ++r) Q[r * d + c] /= norm;
    }
    return Q;
}

}  // namespace

TEST_CASE("gram products") {
    CHECK(max_abs_diff(gram(Tensor::eye(2)), Tensor::eye(2)) == 0.0);

    Tensor H({{1.0, 2.0}, {3.0, 4.0}});
    Tensor K = gram(H);
    CHECK(K.at({0, 0}) == 5.0);
    CHECK(K.at({0, 1}) == 11.0);
    CHECK(K.at({1, 0}) == 11.0);
    CHECK(K.at({1, 1}) == 25.0);

    Rng rng(1);
    Tensor R = rng.normal_tensor({6, 4});
    Tensor KR = gram(R);
    for (int64_t i = 0; i < 6; ++i) {
        for (int64_t j = 0; j < 6; ++j) CHECK(std::abs(KR.at({i, j}) - KR.at({j, i})) < 1e-12);
    }
}

TEST_CASE("hsic matches the explicit centering-matrix expansion") {
    Rng rng(2);
    for (int trial = 0; trial < 5; ++trial) {
        int64_t n = 4 + trial;  // small sizes where the oracle is cheap
        Tensor Kt = gram(rng.normal_tensor({n, 3}));
        Tensor Ks = gram(rng.normal_tensor({n, 5}));
        CHECK(hsic(Kt, Ks) == doctest::Approx(hsic_reference(Kt, Ks)).epsilon(1e-10));
        CHECK(hsic(Kt, Kt) >= 0.0);
        CHECK(hsic(Ks, Ks) >= 0.0);
    }

    // Constant rows: centering annihilates everything.
    Tensor constant(Shape{4, 3});
    for (int64_t i = 0; i < constant.numel(); ++i) constant[i] = 2.5;
    Tensor Kc = gram(constant);
    Tensor Kr = gram(rng.normal_tensor({4, 3}));
    CHECK(std::abs(hsic(Kc, Kr)) < 1e-12);

    CHECK_THROWS_AS(hsic(Kr, gram(rng.normal_tensor({5, 3}))), ShapeError);
    CHECK_THROWS_AS(hsic(rng.normal_tensor({4, 3}), Kr), ShapeError);
}

TEST_CASE("cka fixed points and invariances") {
    Rng rng(3);
    Tensor H = rng.normal_tensor({10, 6});
    CHECK(cka_linear(H, H) == doctest::Approx(1.0).epsilon(1e-9));

    // Orthogonal rotation of the feature space.
    Tensor Q = random_orthogonal(6, 4);
    Tensor HQ = ops::matmul(H, Q);
    CHECK(cka_linear(H, HQ) == doctest::Approx(1.0).epsilon(1e-9));

    // Isotropic scaling.
    CHECK(cka_linear(H, ops::scale(H, -3.7)) == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(cka_linear(H, ops::scale(H, 1e-4)) == doctest::Approx(1.0).epsilon(1e-9));

    // Symmetry and range.
    Tensor G = rng.normal_tensor({10, 9});
    double ab = cka_linear(H, G);
    double ba = cka_linear(G, H);
    CHECK(std::abs(ab - ba) < 1e-12);
    CHECK(ab >= -1e-9);
    CHECK(ab <= 1.0 + 1e-9);

    // Degenerate (constant) representations are rejected explicitly.
    Tensor constant(Shape{10, 4});
    for (int64_t i = 0; i < constant.numel(); ++i) constant[i] = 1.0;
    CHECK_THROWS_AS(cka_linear(constant, H), DegenerateRepresentationError);
    CHECK_THROWS_AS(cka_linear(H, Tensor(Shape{10, 4})), DegenerateRepresentationError);

    CHECK_THROWS_AS(cka_linear(H, rng.normal_tensor({9, 6})), ShapeError);
}

TEST_CASE("related representations score higher than unrelated ones") {
    Rng rng(5);
    Tensor H = rng.normal_tensor({64, 8});
    // G = linear map of H plus small noise: strongly related.
    Tensor M = rng.normal_tensor({8, 5});
    Tensor G = ops::matmul(H, M);
    for (int64_t i = 0; i < G.numel(); ++i) G[i] += 0.05 * rng.normal();
    // U: independent noise.
    Tensor U = rng.normal_tensor({64, 5});
    CHECK(cka_linear(H, G) > cka_linear(H, U) + 0.3);
}

TEST_CASE("row subsampling is deterministic and order-preserving") {
    Rng rng(6);
    Tensor H = rng.normal_tensor({20, 4});
    RepresentationMatrix rep{H, 2, "new"};

    // cap >= n keeps everything.
    RepresentationMatrix all = subsample_rows(rep, 64, 9);
    CHECK(max_abs_diff(all.values, H) == 0.0);
    CHECK(all.layer == 2);
    CHECK(all.modality == "new");

    auto idx1 = subsample_indices(20, 8, 9);
    auto idx2 = subsample_indices(20, 8, 9);
    CHECK(idx1 == idx2);
    CHECK(idx1.size() == 8);
    for (size_t i = 1; i < idx1.size(); ++i) CHECK(idx1[i] > idx1[i - 1]);  // sorted, distinct

    auto idx3 = subsample_indices(20, 8, 10);
    CHECK(idx1 != idx3);

    RepresentationMatrix sub = subsample_rows(rep, 8, 9);
    CHECK(sub.values.shape() == Shape{8, 4});
    for (size_t i = 0; i < idx1.size(); ++i) {
        for (int64_t c = 0; c < 4; ++c) CHECK(sub.values.at({static_cast<int64_t>(i), c}) == H.at({idx1[i], c}));
    }

    CHECK_THROWS_AS(subsample_indices(20, 1, 9), ShapeError);
}

TEST_CASE("capped cka tracks the full computation") {
    // Structured data: two views of a common latent signal.
    Rng rng(7);
    int64_t n = 2000;
    Tensor Z = rng.normal_tensor({n, 4});
    Tensor Ma = rng.normal_tensor({4, 6});
    Tensor Mb = rng.normal_tensor({4, 5});
    Tensor Ha = ops::matmul(Z, Ma);
    Tensor Hb = ops::matmul(Z, Mb);
    for (int64_t i = 0; i < Ha.numel(); ++i) Ha[i] += 0.1 * rng.normal();
    for (int64_t i = 0; i < Hb.numel(); ++i) Hb[i] += 0.1 * rng.normal();

    double full = cka_linear(Ha, Hb);
    auto idx = subsample_indices(n, kDefaultCkaRowCap, 13);
    double capped = cka_linear(take_rows(Ha, idx), take_rows(Hb, idx));
    CHECK(std::abs(full - capped) < 0.05);
}
