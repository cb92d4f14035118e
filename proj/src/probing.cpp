#include "biox/probing.hpp"

#include <cmath>
#include <stdexcept>

#include "biox/metrics.hpp"
#include "biox/ops.hpp"

namespace biox {

PseudoLabelSet pseudo_labels(const EncoderModel& old_model, const TaskHead& head,
                             std::span<const Tensor> xs_old) {
    PseudoLabelSet out;
    out.class_count = head.class_count();
    out.labels.reserve(xs_old.size());
    if (xs_old.empty()) return out;
    Tensor probs = predict(old_model, head, stack_batch(xs_old));  // (n, C)
    int64_t n = probs.dim(0), c = probs.dim(1);
    for (int64_t i = 0; i < n; ++i) {
        int64_t best = 0;
        for (int64_t k = 1; k < c; ++k) {
            if (probs[i * c + k] > probs[i * c + best]) best = k;
        }
        out.labels.push_back(best);
    }
    return out;
}

namespace {

struct Standardized {
    Tensor X;  // (n, d) standardized
    Tensor mean;
    Tensor scale;
};

Standardized standardize(const Tensor& X) {
    int64_t n = X.dim(0), d = X.dim(1);
    Standardized s{Tensor(X.shape()), Tensor(Shape{d}), Tensor(Shape{d})};
    for (int64_t j = 0; j < d; ++j) {
        double mean = 0.0;
        for (int64_t i = 0; i < n; ++i) mean += X[i * d + j];
        mean /= static_cast<double>(n);
        double var = 0.0;
        for (int64_t i = 0; i < n; ++i) {
            double c = X[i * d + j] - mean;
            var += c * c;
        }
        var /= static_cast<double>(n);
        double scale = std::sqrt(var);
        if (scale < 1e-12) scale = 1.0;
        s.mean[j] = mean;
        s.scale[j] = scale;
        for (int64_t i = 0; i < n; ++i) s.X[i * d + j] = (X[i * d + j] - mean) / scale;
    }
    return s;
}

// Loss and gradient of L2-penalized multinomial logistic regression on
// standardized features. Returns mean negative log-likelihood + penalty.
double logistic_loss_grad(const Tensor& X, std::span<const int64_t> y, const Tensor& W, const Tensor& b,
                          double l2, Tensor* gW, Tensor* gb) {
    int64_t n = X.dim(0), d = X.dim(1), c = W.dim(1);
    if (gW) *gW = Tensor(W.shape());
    if (gb) *gb = Tensor(b.shape());
    double nll = 0.0;
    std::vector<double> logits(static_cast<size_t>(c));
    for (int64_t i = 0; i < n; ++i) {
        const double* xi = X.data() + i * d;
        for (int64_t k = 0; k < c; ++k) {
            double acc = b[k];
            for (int64_t j = 0; j < d; ++j) acc += xi[j] * W[j * c + k];
            logits[static_cast<size_t>(k)] = acc;
        }
        double mx = logits[0];
        for (int64_t k = 1; k < c; ++k) mx = std::max(mx, logits[static_cast<size_t>(k)]);
        double z = 0.0;
        for (int64_t k = 0; k < c; ++k) {
            logits[static_cast<size_t>(k)] = std::exp(logits[static_cast<size_t>(k)] - mx);
            z += logits[static_cast<size_t>(k)];
        }
        nll -= std::log(logits[static_cast<size_t>(y[static_cast<size_t>(i)])] / z);
        if (gW || gb) {
            for (int64_t k = 0; k < c; ++k) {
                double p = logits[static_cast<size_t>(k)] / z;
                double delta = p - (k == y[static_cast<size_t>(i)] ? 1.0 : 0.0);
                if (gb) (*gb)[k] += delta;
                if (gW) {
                    for (int64_t j = 0; j < d; ++j) (*gW)[j * c + k] += delta * xi[j];
                }
            }
        }
    }
    double inv_n = 1.0 / static_cast<double>(n);
    nll *= inv_n;
    double penalty = 0.0;
    for (int64_t i = 0; i < W.numel(); ++i) penalty += W[i] * W[i];
    for (int64_t k = 0; k < c; ++k) penalty += b[k] * b[k];
    if (gW) {
        for (int64_t i = 0; i < W.numel(); ++i) (*gW)[i] = (*gW)[i] * inv_n + l2 * W[i];
    }
    if (gb) {
        for (int64_t k = 0; k < c; ++k) (*gb)[k] = (*gb)[k] * inv_n + l2 * b[k];
    }
    return nll + 0.5 * l2 * penalty;
}

}  // namespace

ProberModel fit_linear_prober(const Tensor& X, std::span<const int64_t> y, double l2) {
    if (X.rank() != 2) throw ShapeError("prober: features must be (n, d), got " + shape_str(X.shape()));
    if (static_cast<size_t>(X.dim(0)) != y.size()) {
        throw std::runtime_error("prober: feature rows (" + std::to_string(X.dim(0)) + ") and labels (" +
                                 std::to_string(y.size()) + ") differ");
    }
    if (l2 < 0.0) throw std::runtime_error("prober: l2 must be >= 0");
    if (!X.all_finite()) throw std::runtime_error("prober: non-finite feature values");
    int64_t classes = 1;
    for (int64_t lbl : y) {
        if (lbl < 0) throw std::runtime_error("prober: negative label");
        classes = std::max(classes, lbl + 1);
    }

    Standardized s = standardize(X);
    int64_t d = X.dim(1);
    ProberModel p{Tensor(Shape{d, classes}), Tensor(Shape{classes}), s.mean, s.scale, classes, 0, 0.0};

    constexpr int64_t kMaxIters = 500;
    constexpr double kGradTol = 1e-6;
    constexpr double kArmijo = 1e-4;
    double step = 1.0;
    Tensor gW, gb;
    double loss = logistic_loss_grad(s.X, y, p.W, p.b, l2, &gW, &gb);
    for (int64_t iter = 0; iter < kMaxIters; ++iter) {
        double gnorm_sq = 0.0;
        for (int64_t i = 0; i < gW.numel(); ++i) gnorm_sq += gW[i] * gW[i];
        for (int64_t k = 0; k < classes; ++k) gnorm_sq += gb[k] * gb[k];
        p.grad_norm = std::sqrt(gnorm_sq);
        p.iterations = iter;
        if (p.grad_norm < kGradTol) return p;

        // Backtracking line search along the negative gradient.
        Tensor Wtrial(p.W.shape()), btrial(p.b.shape());
        double trial_loss = 0.0;
        step = std::min(step * 2.0, 64.0);
        for (int backtrack = 0; backtrack < 60; ++backtrack) {
            for (int64_t i = 0; i < p.W.numel(); ++i) Wtrial[i] = p.W[i] - step * gW[i];
            for (int64_t k = 0; k < classes; ++k) btrial[k] = p.b[k] - step * gb[k];
            trial_loss = logistic_loss_grad(s.X, y, Wtrial, btrial, l2, nullptr, nullptr);
            if (trial_loss <= loss - kArmijo * step * gnorm_sq) break;
            step *= 0.5;
        }
        p.W = std::move(Wtrial);
        p.b = std::move(btrial);
        loss = logistic_loss_grad(s.X, y, p.W, p.b, l2, &gW, &gb);
        if (!std::isfinite(loss)) throw std::runtime_error("prober: training produced a non-finite loss");
    }
    p.iterations = kMaxIters;
    return p;
}

std::vector<int64_t> prober_predict(const ProberModel& prober, const Tensor& X) {
    if (X.rank() != 2 || X.dim(1) != prober.W.dim(0)) {
        throw ShapeError("prober: features must be (n, " + std::to_string(prober.W.dim(0)) + "), got " +
                         shape_str(X.shape()));
    }
    int64_t n = X.dim(0), d = X.dim(1), c = prober.classes;
    std::vector<int64_t> out(static_cast<size_t>(n), 0);
    for (int64_t i = 0; i < n; ++i) {
        int64_t best = 0;
        double best_v = -1e300;
        for (int64_t k = 0; k < c; ++k) {
            double acc = prober.b[k];
            for (int64_t j = 0; j < d; ++j) {
                acc += ((X[i * d + j] - prober.mean[j]) / prober.scale[j]) * prober.W[j * c + k];
            }
            if (acc > best_v) {  // strict: ties stay with the smallest class index
                best_v = acc;
                best = k;
            }
        }
        out[static_cast<size_t>(i)] = best;
    }
    return out;
}

namespace {

// Stratified fold ids: per-class shuffled, dealt round-robin with a counter
// that keeps running across classes so no fold goes empty when n >= k.
std::vector<int64_t> stratified_folds(std::span<const int64_t> y, int64_t k, uint64_t seed) {
    int64_t classes = 0;
    for (int64_t lbl : y) classes = std::max(classes, lbl + 1);
    std::vector<int64_t> fold(y.size(), 0);
    int64_t counter = 0;
    for (int64_t c = 0; c < classes; ++c) {
        std::vector<int64_t> members;
        for (size_t i = 0; i < y.size(); ++i) {
            if (y[i] == c) members.push_back(static_cast<int64_t>(i));
        }
        Rng rng(fork_seed(seed, 1000 + static_cast<uint64_t>(c)));
        rng.shuffle(members);
        for (int64_t idx : members) fold[static_cast<size_t>(idx)] = (counter++) % k;
    }
    return fold;
}

}  // namespace

double cross_val_f1_macro(const Tensor& X, std::span<const int64_t> y, int64_t k, double l2, uint64_t seed) {
    if (k < 2) throw std::runtime_error("cross_val: needs k >= 2 folds");
    int64_t n = X.dim(0);
    if (n < k) {
        throw std::runtime_error("cross_val: fewer samples (" + std::to_string(n) + ") than folds (" +
                                 std::to_string(k) + ")");
    }
    int64_t classes = 0;
    for (int64_t lbl : y) classes = std::max(classes, lbl + 1);

    std::vector<int64_t> fold = stratified_folds(y, k, seed);
    int64_t d = X.dim(1);
    double total = 0.0;
    for (int64_t f = 0; f < k; ++f) {
        std::vector<int64_t> train_idx, test_idx;
        for (int64_t i = 0; i < n; ++i) (fold[static_cast<size_t>(i)] == f ? test_idx : train_idx).push_back(i);
        Tensor Xtr(Shape{static_cast<int64_t>(train_idx.size()), d});
        std::vector<int64_t> ytr(train_idx.size());
        for (size_t i = 0; i < train_idx.size(); ++i) {
            for (int64_t j = 0; j < d; ++j) Xtr[static_cast<int64_t>(i) * d + j] = X[train_idx[i] * d + j];
            ytr[i] = y[static_cast<size_t>(train_idx[i])];
        }
        Tensor Xte(Shape{static_cast<int64_t>(test_idx.size()), d});
        std::vector<int64_t> yte(test_idx.size());
        for (size_t i = 0; i < test_idx.size(); ++i) {
            for (int64_t j = 0; j < d; ++j) Xte[static_cast<int64_t>(i) * d + j] = X[test_idx[i] * d + j];
            yte[i] = y[static_cast<size_t>(test_idx[i])];
        }
        ProberModel prober = fit_linear_prober(Xtr, ytr, l2);

        // The prober may have seen fewer classes than exist globally; its
        // predictions are still valid labels in the global class space.
        std::vector<int64_t> pred = prober_predict(prober, Xte);
        total += f1_scores(yte, pred, classes).macro;
    }
    return total / static_cast<double>(k);
}

ProbeResult select_from_features(std::span<const Tensor> per_layer_features, std::span<const int64_t> labels,
                                 double l2, int64_t folds, uint64_t seed) {
    if (per_layer_features.empty()) throw std::runtime_error("probe: no candidate layers");
    ProbeResult result;
    result.l2 = l2;
    result.scores.reserve(per_layer_features.size());
    for (size_t m = 0; m < per_layer_features.size(); ++m) {
        // The fold assignment depends only on (labels, folds, seed), so every
        // layer is scored on identical splits.
        result.scores.push_back(cross_val_f1_macro(per_layer_features[m], labels, folds, l2, seed));
    }
    size_t best = 0;
    for (size_t m = 1; m < result.scores.size(); ++m) {
        if (result.scores[m] > result.scores[best]) best = m;  // strict: ties keep the earlier layer
    }
    result.layer = static_cast<int64_t>(best + 1);
    return result;
}

Tensor pooled_layer_features(const EncoderModel& model, std::span<const Tensor> xs, int64_t m) {
    if (xs.empty()) throw ShapeError("probe: empty sample set");
    return ops::mean_pool(model.forward_prefix(stack_batch(xs), m), -2);  // (n, d_m)
}

ProbeResult select_input_position(const EncoderModel& new_model, std::span<const Tensor> xs_new,
                                  const PseudoLabelSet& pseudo, double l2, int64_t folds, uint64_t seed) {
    if (xs_new.size() != pseudo.labels.size()) {
        throw std::runtime_error("probe: paired samples (" + std::to_string(xs_new.size()) + ") and pseudo-labels (" +
                                 std::to_string(pseudo.labels.size()) + ") differ");
    }
    int64_t layer_count = new_model.layer_count();

    int64_t distinct = 0;
    std::vector<bool> seen(static_cast<size_t>(pseudo.class_count), false);
    for (int64_t lbl : pseudo.labels) {
        if (lbl >= 0 && lbl < pseudo.class_count && !seen[static_cast<size_t>(lbl)]) {
            seen[static_cast<size_t>(lbl)] = true;
            ++distinct;
        }
    }
    if (distinct < 2) {
        ProbeResult degenerate;
        degenerate.l2 = l2;
        degenerate.layer = layer_count;
        degenerate.scores.assign(static_cast<size_t>(layer_count), 0.0);
        degenerate.degenerate = true;
        degenerate.warnings.push_back(
            "pseudo-labels collapsed to a single class; probing cannot rank layers — falling back to the last "
            "layer (m=" +
            std::to_string(layer_count) + ")");
        return degenerate;
    }

    std::vector<Tensor> features;
    features.reserve(static_cast<size_t>(layer_count));
    for (int64_t m = 1; m <= layer_count; ++m) features.push_back(pooled_layer_features(new_model, xs_new, m));
    return select_from_features(features, pseudo.labels, l2, folds, seed);
}

}  // namespace biox
