#pragma once

// Bridge input-position selection. A frozen teacher labels the paired set;
// every candidate layer of the new-modality encoder is then scored by
// cross-validated F1-macro of an L2 logistic prober on its mean-pooled
// representations, and the best-scoring layer wins (ties to the smallest).

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "biox/model.hpp"

namespace biox {

inline constexpr double kDefaultProbeL2 = 1e-3;
inline constexpr int64_t kDefaultProbeFolds = 5;

struct PseudoLabelSet {
    std::vector<int64_t> labels;  // one per paired sample
    int64_t class_count = 0;
};

// Teacher predictions (argmax of predict()) over the old-modality view of
// the paired set.
PseudoLabelSet pseudo_labels(const EncoderModel& old_model, const TaskHead& head,
                             std::span<const Tensor> xs_old);

// Multinomial logistic prober with standardized inputs. Weights and bias are
// both L2-penalized, so strength -> infinity drives predictions to the
// uniform tie (argmax class 0).
struct ProberModel {
    Tensor W;     // (d, classes)
    Tensor b;     // (classes)
    Tensor mean;  // feature standardization, (d)
    Tensor scale;
    int64_t classes = 0;
    int64_t iterations = 0;    // iterations actually run
    double grad_norm = 0.0;    // final gradient norm
};

ProberModel fit_linear_prober(const Tensor& X, std::span<const int64_t> y, double l2 = kDefaultProbeL2);

std::vector<int64_t> prober_predict(const ProberModel& prober, const Tensor& X);

// Mean held-out F1-macro over k stratified folds; fold assignment is
// deterministic in (labels, k, seed).
double cross_val_f1_macro(const Tensor& X, std::span<const int64_t> y, int64_t k, double l2 = kDefaultProbeL2,
                          uint64_t seed = 0);

struct ProbeResult {
    int64_t layer = 0;           // chosen m (1-based)
    std::vector<double> scores;  // CV F1-macro per layer, index m-1
    double l2 = kDefaultProbeL2;
    bool degenerate = false;     // pseudo-labels collapsed to one class
    std::vector<std::string> warnings;
};

// Core selection over precomputed per-layer feature matrices (one row per
// paired sample). Ties break to the smallest layer index.
ProbeResult select_from_features(std::span<const Tensor> per_layer_features, std::span<const int64_t> labels,
                                 double l2 = kDefaultProbeL2, int64_t folds = kDefaultProbeFolds,
                                 uint64_t seed = 0);

// Full stage-1 selection: pools h_m for every m in 1..M and scores each.
// A single-class pseudo-label set cannot rank layers; the result then falls
// back to the last layer with a warning.
ProbeResult select_input_position(const EncoderModel& new_model, std::span<const Tensor> xs_new,
                                  const PseudoLabelSet& pseudo, double l2 = kDefaultProbeL2,
                                  int64_t folds = kDefaultProbeFolds, uint64_t seed = 0);

// Mean-pooled prefix representations for every sample: rows are pooled h_m.
Tensor pooled_layer_features(const EncoderModel& model, std::span<const Tensor> xs, int64_t m);

}  // namespace biox
