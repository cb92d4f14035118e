#include "biox/metrics.hpp"

#include <stdexcept>

namespace biox {

namespace {

struct ClassCounts {
    std::vector<int64_t> tp, support, predicted;
    int64_t classes = 0;
};

ClassCounts count_classes(std::span<const int64_t> y_true, std::span<const int64_t> y_pred,
                          int64_t class_count) {
    if (y_true.size() != y_pred.size()) {
        throw std::runtime_error("metrics: label sequences differ in length (" + std::to_string(y_true.size()) +
                                 " vs " + std::to_string(y_pred.size()) + ")");
    }
    if (y_true.empty()) throw std::runtime_error("metrics: empty label sequences");
    int64_t classes = class_count;
    if (classes < 0) {
        classes = 0;
        for (int64_t y : y_true) classes = std::max(classes, y + 1);
        for (int64_t y : y_pred) classes = std::max(classes, y + 1);
    }
    for (size_t i = 0; i < y_true.size(); ++i) {
        if (y_true[i] < 0 || y_true[i] >= classes || y_pred[i] < 0 || y_pred[i] >= classes) {
            throw std::runtime_error("metrics: label outside 0.." + std::to_string(classes - 1));
        }
    }
    ClassCounts c;
    c.classes = classes;
    c.tp.assign(static_cast<size_t>(classes), 0);
    c.support.assign(static_cast<size_t>(classes), 0);
    c.predicted.assign(static_cast<size_t>(classes), 0);
    for (size_t i = 0; i < y_true.size(); ++i) {
        ++c.support[static_cast<size_t>(y_true[i])];
        ++c.predicted[static_cast<size_t>(y_pred[i])];
        if (y_true[i] == y_pred[i]) ++c.tp[static_cast<size_t>(y_true[i])];
    }
    return c;
}

}  // namespace

double balanced_accuracy(std::span<const int64_t> y_true, std::span<const int64_t> y_pred, int64_t class_count,
                         std::vector<std::string>* warnings) {
    ClassCounts c = count_classes(y_true, y_pred, class_count);
    double recall_sum = 0.0;
    int64_t supported = 0;
    for (int64_t k = 0; k < c.classes; ++k) {
        int64_t sup = c.support[static_cast<size_t>(k)];
        if (sup == 0) {
            if (warnings) {
                warnings->push_back("class " + std::to_string(k) + " has zero support; excluded from recall mean");
            }
            continue;
        }
        recall_sum += static_cast<double>(c.tp[static_cast<size_t>(k)]) / static_cast<double>(sup);
        ++supported;
    }
    if (supported == 0) throw std::runtime_error("metrics: no class has support");
    return recall_sum / static_cast<double>(supported);
}

F1Result f1_scores(std::span<const int64_t> y_true, std::span<const int64_t> y_pred, int64_t class_count) {
    ClassCounts c = count_classes(y_true, y_pred, class_count);
    F1Result out;
    out.per_class.assign(static_cast<size_t>(c.classes), 0.0);
    double macro_sum = 0.0;
    int64_t macro_n = 0;
    double weighted_sum = 0.0;
    int64_t total_support = 0;
    for (int64_t k = 0; k < c.classes; ++k) {
        int64_t tp = c.tp[static_cast<size_t>(k)];
        int64_t sup = c.support[static_cast<size_t>(k)];
        int64_t pred = c.predicted[static_cast<size_t>(k)];
        double precision = pred == 0 ? 0.0 : static_cast<double>(tp) / static_cast<double>(pred);
        double recall = sup == 0 ? 0.0 : static_cast<double>(tp) / static_cast<double>(sup);
        double f1 = (precision + recall) == 0.0 ? 0.0 : 2.0 * precision * recall / (precision + recall);
        out.per_class[static_cast<size_t>(k)] = f1;
        if (sup > 0 || pred > 0) {
            macro_sum += f1;
            ++macro_n;
        }
        weighted_sum += f1 * static_cast<double>(sup);
        total_support += sup;
    }
    out.macro = macro_n == 0 ? 0.0 : macro_sum / static_cast<double>(macro_n);
    out.weighted = weighted_sum / static_cast<double>(total_support);
    return out;
}

MetricSet compute_metrics(std::span<const int64_t> y_true, std::span<const int64_t> y_pred, int64_t class_count) {
    ClassCounts c = count_classes(y_true, y_pred, class_count);
    MetricSet m;
    m.balanced_accuracy = balanced_accuracy(y_true, y_pred, c.classes, &m.warnings);
    F1Result f = f1_scores(y_true, y_pred, c.classes);
    m.f1_macro = f.macro;
    m.f1_weighted = f.weighted;
    m.f1 = std::move(f.per_class);
    m.precision.assign(static_cast<size_t>(c.classes), 0.0);
    m.recall.assign(static_cast<size_t>(c.classes), 0.0);
    for (int64_t k = 0; k < c.classes; ++k) {
        int64_t tp = c.tp[static_cast<size_t>(k)];
        int64_t sup = c.support[static_cast<size_t>(k)];
        int64_t pred = c.predicted[static_cast<size_t>(k)];
        m.precision[static_cast<size_t>(k)] = pred == 0 ? 0.0 : static_cast<double>(tp) / static_cast<double>(pred);
        m.recall[static_cast<size_t>(k)] = sup == 0 ? 0.0 : static_cast<double>(tp) / static_cast<double>(sup);
    }
    m.confusion.assign(static_cast<size_t>(c.classes), std::vector<int64_t>(static_cast<size_t>(c.classes), 0));
    for (size_t i = 0; i < y_true.size(); ++i) {
        ++m.confusion[static_cast<size_t>(y_true[i])][static_cast<size_t>(y_pred[i])];
    }
    return m;
}

}  // namespace biox
