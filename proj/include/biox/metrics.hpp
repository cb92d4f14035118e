#pragma once

// Classification metrics over integer label sequences.

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace biox {

struct F1Result {
    double macro = 0.0;
    double weighted = 0.0;
    std::vector<double> per_class;
};

struct MetricSet {
    double balanced_accuracy = 0.0;
    double f1_macro = 0.0;
    double f1_weighted = 0.0;
    std::vector<double> precision;
    std::vector<double> recall;
    std::vector<double> f1;
    std::vector<std::vector<int64_t>> confusion;  // confusion[true][pred]
    std::vector<std::string> warnings;
};

// Mean of per-class recall over classes that appear in y_true. A class with
// zero support is excluded and noted in *warnings when provided.
// class_count < 0 infers max label + 1 across both sequences.
double balanced_accuracy(std::span<const int64_t> y_true, std::span<const int64_t> y_pred,
                         int64_t class_count = -1, std::vector<std::string>* warnings = nullptr);

// Per-class F1 = 2PR/(P+R) with the 0/0 -> 0 convention; macro averages over
// classes observed in either sequence, weighted averages by true support.
F1Result f1_scores(std::span<const int64_t> y_true, std::span<const int64_t> y_pred, int64_t class_count = -1);

MetricSet compute_metrics(std::span<const int64_t> y_true, std::span<const int64_t> y_pred,
                          int64_t class_count = -1);

}  // namespace biox
