#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cstdint>
#include <vector>

#include "biox/metrics.hpp"
#include "biox/tensor.hpp"

using namespace biox;

namespace {

// Reference path: build the full confusion matrix first, then read every
// statistic off it. Accumulation runs in ascending class order with a single
// final division, so agreement with the production code must be exact.
struct NaiveMetrics {
    double bacc = 0.0;
    double macro = 0.0;
    double weighted = 0.0;
    std::vector<double> per_class_f1;
};

NaiveMetrics naive_from_confusion(const std::vector<int64_t>& yt, const std::vector<int64_t>& yp,
                                  int64_t classes) {
    std::vector<std::vector<int64_t>> cm(static_cast<size_t>(classes),
                                         std::vector<int64_t>(static_cast<size_t>(classes), 0));
    for (size_t i = 0; i < yt.size(); ++i) ++cm[static_cast<size_t>(yt[i])][static_cast<size_t>(yp[i])];

    NaiveMetrics m;
    double recall_sum = 0.0;
    int64_t supported = 0;
    double macro_sum = 0.0;
    int64_t macro_n = 0;
    double weighted_sum = 0.0;
    int64_t total = 0;
    for (int64_t k = 0; k < classes; ++k) {
        int64_t tp = cm[static_cast<size_t>(k)][static_cast<size_t>(k)];
        int64_t sup = 0, pred = 0;
        for (int64_t j = 0; j < classes; ++j) {
            sup += cm[static_cast<size_t>(k)][static_cast<size_t>(j)];
            pred += cm[static_cast<size_t>(j)][static_cast<size_t>(k)];
        }
        if (sup > 0) {
            recall_sum += static_cast<double>(tp) / static_cast<double>(sup);
            ++supported;
        }
        double precision = pred == 0 ? 0.0 : static_cast<double>(tp) / static_cast<double>(pred);
        double recall = sup == 0 ? 0.0 : static_cast<double>(tp) / static_cast<double>(sup);
        double f1 = (precision + recall) == 0.0 ? 0.0 : 2.0 * precision * recall / (precision + recall);
        m.per_class_f1.push_back(f1);
        if (sup > 0 || pred > 0) {
            macro_sum += f1;
            ++macro_n;
        }
        weighted_sum += f1 * static_cast<double>(sup);
        total += sup;
    }
    m.bacc = recall_sum / static_cast<double>(supported);
    m.macro = macro_n == 0 ? 0.0 : macro_sum / static_cast<double>(macro_n);
    m.weighted = weighted_sum / static_cast<double>(total);
    return m;
}

}  // namespace

TEST_CASE("worked two-class example") {
    std::vector<int64_t> yt{0, 0, 1, 1};
    std::vector<int64_t> yp{0, 1, 1, 1};

    CHECK(balanced_accuracy(yt, yp) == doctest::Approx(0.75).epsilon(1e-15));

    F1Result f = f1_scores(yt, yp);
    CHECK(f.per_class.size() == 2);
    CHECK(f.per_class[0] == doctest::Approx(2.0 / 3.0).epsilon(1e-15));
    CHECK(f.per_class[1] == doctest::Approx(0.8).epsilon(1e-15));
    CHECK(f.macro == doctest::Approx((2.0 / 3.0 + 0.8) / 2.0).epsilon(1e-15));
    CHECK(f.weighted == doctest::Approx(f.macro).epsilon(1e-15));  // equal supports

    MetricSet m = compute_metrics(yt, yp);
    CHECK(m.balanced_accuracy == balanced_accuracy(yt, yp));
    CHECK(m.f1_macro == f.macro);
    CHECK(m.f1_weighted == f.weighted);
    CHECK(m.precision[0] == 1.0);
    CHECK(m.precision[1] == doctest::Approx(2.0 / 3.0).epsilon(1e-15));
    CHECK(m.recall[0] == 0.5);
    CHECK(m.recall[1] == 1.0);
    CHECK(m.confusion[0][0] == 1);
    CHECK(m.confusion[0][1] == 1);
    CHECK(m.confusion[1][0] == 0);
    CHECK(m.confusion[1][1] == 2);
    CHECK(m.warnings.empty());
}

TEST_CASE("perfect predictions score 1.0 exactly") {
    std::vector<int64_t> y{2, 0, 1, 1, 2, 0, 0};
    MetricSet m = compute_metrics(y, y);
    CHECK(m.balanced_accuracy == 1.0);
    CHECK(m.f1_macro == 1.0);
    CHECK(m.f1_weighted == 1.0);
    for (double v : m.precision) CHECK(v == 1.0);
    for (double v : m.recall) CHECK(v == 1.0);
}

TEST_CASE("never-predicted class still counts toward the macro mean") {
    // Class 2 exists in the truth but is never predicted: F1 = 0, included.
    std::vector<int64_t> yt{0, 1, 2, 0, 1, 2};
    std::vector<int64_t> yp{0, 1, 0, 0, 1, 1};
    F1Result f = f1_scores(yt, yp);
    CHECK(f.per_class[2] == 0.0);
    CHECK(f.macro == doctest::Approx((f.per_class[0] + f.per_class[1]) / 3.0).epsilon(1e-12));
    // Recall of class 2 is 0, dragging the balanced accuracy down.
    CHECK(balanced_accuracy(yt, yp) == doctest::Approx((1.0 + 1.0 + 0.0) / 3.0).epsilon(1e-15));
}

TEST_CASE("zero-support class is excluded from balanced accuracy with a warning") {
    std::vector<int64_t> yt{0, 0, 1, 1};
    std::vector<int64_t> yp{0, 2, 1, 2};
    std::vector<std::string> warnings;
    double bacc = balanced_accuracy(yt, yp, 3, &warnings);
    CHECK(bacc == doctest::Approx((0.5 + 0.5) / 2.0).epsilon(1e-15));
    REQUIRE(warnings.size() == 1);
    CHECK(warnings[0].find("class 2") != std::string::npos);

    // ...but it still enters the macro mean, because it was predicted.
    F1Result f = f1_scores(yt, yp, 3);
    CHECK(f.per_class[2] == 0.0);
    CHECK(f.macro == doctest::Approx((f.per_class[0] + f.per_class[1] + 0.0) / 3.0).epsilon(1e-12));
}

TEST_CASE("class absent from both sides is ignored by the macro mean") {
    std::vector<int64_t> y{1, 1, 1};
    MetricSet m = compute_metrics(y, y, 2);
    CHECK(m.balanced_accuracy == 1.0);
    CHECK(m.f1_macro == 1.0);  // class 0 has no support and no predictions
    CHECK(m.f1_weighted == 1.0);
    CHECK(m.warnings.size() == 1);
}

TEST_CASE("confusion rows sum to class support") {
    Rng rng(77);
    std::vector<int64_t> yt, yp;
    for (int i = 0; i < 60; ++i) {
        yt.push_back(static_cast<int64_t>(rng.below(4)));
        yp.push_back(static_cast<int64_t>(rng.below(4)));
    }
    MetricSet m = compute_metrics(yt, yp, 4);
    int64_t total = 0;
    for (int64_t k = 0; k < 4; ++k) {
        int64_t sup = 0;
        for (int64_t i = 0; i < 60; ++i) sup += (yt[static_cast<size_t>(i)] == k) ? 1 : 0;
        int64_t row = 0;
        for (int64_t j = 0; j < 4; ++j) row += m.confusion[static_cast<size_t>(k)][static_cast<size_t>(j)];
        CHECK(row == sup);
        total += row;
    }
    CHECK(total == 60);
}

TEST_CASE("randomized labelings match the confusion-matrix reference exactly") {
    Rng rng(123);
    for (int trial = 0; trial < 300; ++trial) {
        int64_t classes = 2 + static_cast<int64_t>(rng.below(5));
        int64_t n = 1 + static_cast<int64_t>(rng.below(50));
        std::vector<int64_t> yt, yp;
        for (int64_t i = 0; i < n; ++i) {
            yt.push_back(static_cast<int64_t>(rng.below(static_cast<uint64_t>(classes))));
            yp.push_back(static_cast<int64_t>(rng.below(static_cast<uint64_t>(classes))));
        }

        NaiveMetrics ref = naive_from_confusion(yt, yp, classes);
        CHECK(balanced_accuracy(yt, yp, classes) == ref.bacc);
        F1Result f = f1_scores(yt, yp, classes);
        CHECK(f.macro == ref.macro);
        CHECK(f.weighted == ref.weighted);
        for (int64_t k = 0; k < classes; ++k) {
            CHECK(f.per_class[static_cast<size_t>(k)] == ref.per_class_f1[static_cast<size_t>(k)]);
        }

        CHECK(ref.bacc >= 0.0);
        CHECK(ref.bacc <= 1.0);
        CHECK(f.macro >= 0.0);
        CHECK(f.macro <= 1.0);
        CHECK(f.weighted >= 0.0);
        CHECK(f.weighted <= 1.0);
    }
}

TEST_CASE("input validation") {
    std::vector<int64_t> a{0, 1}, b{0};
    CHECK_THROWS_AS(balanced_accuracy(a, b), std::runtime_error);
    std::vector<int64_t> empty;
    CHECK_THROWS_AS(balanced_accuracy(empty, empty), std::runtime_error);
    std::vector<int64_t> big{0, 5}, small{0, 1};
    CHECK_THROWS_AS(balanced_accuracy(big, small, 3), std::runtime_error);
    std::vector<int64_t> neg{0, -1};
    CHECK_THROWS_AS(f1_scores(neg, small), std::runtime_error);
}
