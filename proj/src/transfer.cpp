#include "biox/transfer.hpp"

#include <chrono>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "biox/metrics.hpp"
#include "biox/ops.hpp"
#include "biox/optim.hpp"

namespace biox {

namespace {

Tensor flatten_rows(const Tensor& h) {  // (n, N, d) -> (n, N*d)
    return ops::reshape(h, {h.dim(0), -1});
}

// Rows `idx` of a (n, ...) tensor, keeping trailing axes.
Tensor gather_rows(const Tensor& h, std::span<const int64_t> idx) {
    Shape out_shape = h.shape();
    out_shape[0] = static_cast<int64_t>(idx.size());
    Tensor out(out_shape);
    int64_t stride = h.numel() / h.dim(0);
    for (size_t i = 0; i < idx.size(); ++i) {
        const double* src = h.data() + idx[i] * stride;
        double* dst = out.data() + static_cast<int64_t>(i) * stride;
        for (int64_t j = 0; j < stride; ++j) dst[j] = src[j];
    }
    return out;
}

double now_seconds() {
    using clock = std::chrono::steady_clock;
    return std::chrono::duration<double>(clock::now().time_since_epoch()).count();
}

void check_pairs(std::span<const Tensor> xs_old, std::span<const Tensor> xs_new, const char* who) {
    if (xs_old.empty() || xs_old.size() != xs_new.size()) {
        throw std::runtime_error(std::string(who) + ": need equally many synchronized samples per modality, got " +
                                 std::to_string(xs_old.size()) + " vs " + std::to_string(xs_new.size()));
    }
}

}  // namespace

// --------------------------------------------------------------- positions

RepresentationMatrix layer_representation(const EncoderModel& model, std::span<const Tensor> xs, int64_t layer) {
    RepresentationMatrix rep;
    rep.values = flatten_rows(model.forward_prefix(stack_batch(xs), layer));
    rep.layer = layer;
    rep.modality = model.modality();
    return rep;
}

OutputPositionResult select_output_position(const RepresentationMatrix& h_new, const EncoderModel& old_model,
                                            std::span<const Tensor> xs_old, int64_t row_cap, uint64_t seed,
                                            SimilarityObjective objective) {
    int64_t n = h_new.values.dim(0);
    if (static_cast<size_t>(n) != xs_old.size()) {
        throw std::runtime_error("output selection: representation rows (" + std::to_string(n) +
                                 ") and paired samples (" + std::to_string(xs_old.size()) + ") differ");
    }
    std::vector<int64_t> rows = subsample_indices(n, row_cap, seed);
    Tensor lhs = take_rows(h_new.values, rows);

    int64_t layers = old_model.layer_count();
    OutputPositionResult result;
    result.scores.assign(static_cast<size_t>(layers), 0.0);
    result.skipped.assign(static_cast<size_t>(layers), false);

    Tensor h = stack_batch(xs_old);
    int64_t best = -1;
    for (int64_t l = 1; l <= layers; ++l) {
        h = old_model.forward_between(h, l - 1, l);
        Tensor rhs = take_rows(flatten_rows(h), rows);
        double score = 0.0;
        try {
            score = cka_linear(lhs, rhs);
        } catch (const DegenerateRepresentationError& e) {
            result.skipped[static_cast<size_t>(l - 1)] = true;
            result.warnings.push_back("layer " + std::to_string(l) + " skipped: " + e.what());
            continue;
        }
        result.scores[static_cast<size_t>(l - 1)] = score;
        if (best < 0) {
            best = l;
        } else {
            double incumbent = result.scores[static_cast<size_t>(best - 1)];
            bool better = objective == SimilarityObjective::Maximize ? score > incumbent : score < incumbent;
            if (better) best = l;
        }
    }
    if (best < 0) {
        throw DegenerateRepresentationError(
            "output selection: similarity undefined at every layer (constant representations)");
    }
    result.layer = best;
    return result;
}

PositionSelection select_positions(const EncoderModel& old_model, const TaskHead& head,
                                   const EncoderModel& new_model, std::span<const Tensor> xs_old,
                                   std::span<const Tensor> xs_new, const PositionSelectionOptions& opts) {
    check_pairs(xs_old, xs_new, "position selection");
    PseudoLabelSet pseudo = pseudo_labels(old_model, head, xs_old);
    ProbeResult probe =
        select_input_position(new_model, xs_new, pseudo, opts.probe_l2, opts.probe_folds, opts.seed);

    PositionSelection sel;
    sel.input_layer = probe.layer;
    sel.probe_scores = probe.scores;
    sel.probe_degenerate = probe.degenerate;
    sel.warnings = probe.warnings;

    RepresentationMatrix h_new = layer_representation(new_model, xs_new, sel.input_layer);
    OutputPositionResult out = select_output_position(h_new, old_model, xs_old, opts.cka_row_cap,
                                                      fork_seed(opts.seed, 2), opts.objective);
    sel.output_layer = out.layer;
    sel.cka_scores = out.scores;
    sel.warnings.insert(sel.warnings.end(), out.warnings.begin(), out.warnings.end());
    return sel;
}

// ------------------------------------------------------------ alignment loss

double alignment_loss(const Tensor& h, const Tensor& h_tilde, AlignKind kind, int64_t* zero_norm_rows) {
    if (!h.same_shape(h_tilde) || h.rank() < 2) {
        throw ShapeError("alignment loss: shapes must match with (tokens, dim) trailing axes, got " +
                         shape_str(h.shape()) + " vs " + shape_str(h_tilde.shape()));
    }
    switch (kind) {
        case AlignKind::Cosine: return ops::cosine_row_loss(h, h_tilde, zero_norm_rows).item();
        case AlignKind::Mae: return ops::mae_loss(h, h_tilde).item();
        case AlignKind::PooledCosine: {
            Tensor a = ops::mean_pool(h, -2);
            Tensor b = ops::mean_pool(h_tilde, -2);
            if (a.rank() == 1) {
                a = ops::reshape(a, {1, -1});
                b = ops::reshape(b, {1, -1});
            }
            return ops::cosine_row_loss(a, b, zero_norm_rows).item();
        }
    }
    throw std::logic_error("alignment loss: unknown kind");
}

Var alignment_loss(Tape& tape, const Var& h_tilde, const Tensor& h_target, AlignKind kind) {
    if (!h_tilde.t().same_shape(h_target) || h_target.rank() < 2) {
        throw ShapeError("alignment loss: shapes must match with (tokens, dim) trailing axes, got " +
                         shape_str(h_target.shape()) + " vs " + shape_str(h_tilde.t().shape()));
    }
    switch (kind) {
        case AlignKind::Cosine: return cosine_row_loss(h_tilde, tape.constant(h_target));
        case AlignKind::Mae: return mae_loss(h_tilde, tape.constant(h_target));
        case AlignKind::PooledCosine: {
            Var a = mean_pool(h_tilde, -2);
            Var b = mean_pool(tape.constant(h_target), -2);
            if (a.t().rank() == 1) {
                a = reshape(a, {1, -1});
                b = reshape(b, {1, -1});
            }
            return cosine_row_loss(a, b);
        }
    }
    throw std::logic_error("alignment loss: unknown kind");
}

// ----------------------------------------------------------------- training

namespace {

void check_positions(const EncoderModel& old_model, const EncoderModel& new_model,
                     const PositionSelection& positions) {
    if (positions.input_layer < 1 || positions.input_layer > new_model.layer_count()) {
        throw ShapeError("transfer: input position " + std::to_string(positions.input_layer) + " outside 1.." +
                         std::to_string(new_model.layer_count()));
    }
    if (positions.output_layer < 1 || positions.output_layer > old_model.layer_count()) {
        throw ShapeError("transfer: output position " + std::to_string(positions.output_layer) + " outside 1.." +
                         std::to_string(old_model.layer_count()));
    }
}

void check_bridge_fits(const BridgeParams& bridge, const EncoderModel& old_model, const EncoderModel& new_model,
                       const PositionSelection& positions) {
    auto in_shape = new_model.layer_shapes()[static_cast<size_t>(positions.input_layer - 1)];
    auto out_shape = old_model.layer_shapes()[static_cast<size_t>(positions.output_layer - 1)];
    const BridgeShapeSpec& s = bridge.spec;
    if (s.input_dim != in_shape.second || s.out_tokens != out_shape.first || s.out_dim != out_shape.second) {
        throw ShapeError("transfer: bridge spec (in_dim=" + std::to_string(s.input_dim) + ", out=" +
                         std::to_string(s.out_tokens) + "x" + std::to_string(s.out_dim) +
                         ") does not fit positions m=" + std::to_string(positions.input_layer) +
                         " (dim " + std::to_string(in_shape.second) + "), l=" +
                         std::to_string(positions.output_layer) + " (" + std::to_string(out_shape.first) + "x" +
                         std::to_string(out_shape.second) + ")");
    }
}

double balanced_accuracy_of(const Tensor& probs, std::span<const int64_t> labels, int64_t classes) {
    std::vector<int64_t> pred = predicted_labels(probs);
    return balanced_accuracy(labels, pred, classes);
}

}  // namespace

TrainingHistory train_bridge(const EncoderModel& old_model, const EncoderModel& new_model, const TaskHead& head,
                             std::span<const Tensor> xs_old, std::span<const Tensor> xs_new,
                             const PositionSelection& positions, BridgeParams& bridge,
                             const TransferTrainOptions& opts) {
    check_pairs(xs_old, xs_new, "train_bridge");
    check_positions(old_model, new_model, positions);
    check_bridge_fits(bridge, old_model, new_model, positions);
    if (!old_model.frozen() || !new_model.frozen()) {
        throw std::runtime_error("train_bridge: both encoders must be frozen");
    }
    if (opts.epochs < 0 || opts.batch < 1) throw std::runtime_error("train_bridge: bad epochs/batch");
    int64_t L = old_model.layer_count();
    int64_t align_at = opts.align_layer < 0 ? L : opts.align_layer;
    if (align_at < positions.output_layer || align_at > L) {
        throw ShapeError("train_bridge: alignment layer " + std::to_string(align_at) + " outside " +
                         std::to_string(positions.output_layer) + ".." + std::to_string(L));
    }

    int64_t n = static_cast<int64_t>(xs_old.size());
    int64_t m = positions.input_layer, l = positions.output_layer;

    // Both encoders are frozen, so their representations are constants of the
    // optimization; compute them once.
    Tensor h_new_all = new_model.forward_prefix(stack_batch(xs_new), m);     // (n, N_m, d_m)
    Tensor target_all = old_model.forward_prefix(stack_batch(xs_old), align_at);  // (n, N_a, d_a)
    Tensor h_val;
    if (opts.val) {
        if (opts.val->xs.size() != opts.val->labels.size() || opts.val->xs.empty()) {
            throw std::runtime_error("train_bridge: val set needs matching samples and labels");
        }
        h_val = new_model.forward_prefix(stack_batch(opts.val->xs), m);
    }

    Adam optimizer(bridge.params(), AdamConfig{opts.lr, 0.9, 0.999, 1e-8, 0.0});
    TrainingHistory history;
    std::vector<int64_t> order(static_cast<size_t>(n));
    std::iota(order.begin(), order.end(), 0);

    for (int64_t epoch = 0; epoch < opts.epochs; ++epoch) {
        double t0 = now_seconds();
        Rng rng(fork_seed(opts.seed, static_cast<uint64_t>(epoch) + 1));
        rng.shuffle(order);
        double epoch_loss = 0.0;
        for (int64_t start = 0, step = 0; start < n; start += opts.batch, ++step) {
            int64_t bs = std::min(opts.batch, n - start);
            std::span<const int64_t> idx(order.data() + start, static_cast<size_t>(bs));
            Tensor hb = gather_rows(h_new_all, idx);
            Tensor tb = gather_rows(target_all, idx);

            Tape tape;
            Var bridged = bridge_forward(tape, tape.constant(hb), bridge, opts.pool);
            Var aligned = old_model.forward_between(tape, bridged, l, align_at);
            Var loss = alignment_loss(tape, aligned, tb, opts.loss_kind);
            double lv = loss.t().item();
            if (!std::isfinite(lv)) {
                throw std::runtime_error("train_bridge: diverged (non-finite loss) at epoch " +
                                         std::to_string(epoch + 1) + ", step " + std::to_string(step + 1));
            }
            if (opts.loss_kind == AlignKind::Cosine || opts.loss_kind == AlignKind::PooledCosine) {
                int64_t z = 0;
                alignment_loss(aligned.t(), tb, opts.loss_kind, &z);
                history.zero_norm_rows += z;
            }
            optimizer.zero_grad();
            tape.backward(loss);
            optimizer.step();
            epoch_loss += lv * static_cast<double>(bs);
        }
        history.loss.push_back(epoch_loss / static_cast<double>(n));
        if (opts.val) {
            Tensor bridged = bridge_forward(h_val, bridge, opts.pool);
            Tensor probs = ops::softmax(head.logits(old_model.forward_suffix(bridged, l)));
            history.val_metric.push_back(balanced_accuracy_of(probs, opts.val->labels, head.class_count()));
        }
        history.seconds.push_back(now_seconds() - t0);
        if (opts.on_epoch) opts.on_epoch(epoch + 1);
    }
    return history;
}

// ---------------------------------------------------------------- inference

Tensor bridged_predict_with(const EncoderModel& old_model, const EncoderModel& new_model, const TaskHead& head,
                            const PositionSelection& positions, const BridgeFn& bridge_fn, const Tensor& x_new) {
    check_positions(old_model, new_model, positions);
    Tensor h_m = new_model.forward_prefix(x_new, positions.input_layer);
    Tensor h_l = bridge_fn(h_m);
    return ops::softmax(head.logits(old_model.forward_suffix(h_l, positions.output_layer)));
}

Tensor bridged_predict(const EncoderModel& old_model, const EncoderModel& new_model, const TaskHead& head,
                       const BridgeParams& bridge, const PositionSelection& positions, const Tensor& x_new,
                       BridgePool pool) {
    check_bridge_fits(bridge, old_model, new_model, positions);
    return bridged_predict_with(old_model, new_model, head, positions,
                                [&](const Tensor& h_m) { return bridge_forward(h_m, bridge, pool); }, x_new);
}

std::vector<int64_t> predicted_labels(const Tensor& probs) {
    if (probs.rank() != 1 && probs.rank() != 2) {
        throw ShapeError("predicted_labels: expected (classes) or (batch, classes), got " +
                         shape_str(probs.shape()));
    }
    int64_t rows = probs.rank() == 1 ? 1 : probs.dim(0);
    int64_t cols = probs.dim(-1);
    std::vector<int64_t> out(static_cast<size_t>(rows), 0);
    for (int64_t i = 0; i < rows; ++i) {
        int64_t best = 0;
        for (int64_t c = 1; c < cols; ++c) {
            if (probs[i * cols + c] > probs[i * cols + best]) best = c;
        }
        out[static_cast<size_t>(i)] = best;
    }
    return out;
}

// ---------------------------------------------------------------- baselines

StudentResult train_kd(const EncoderModel& new_model, const EncoderModel& old_model, const TaskHead& old_head,
                       std::span<const Tensor> xs_old, std::span<const Tensor> xs_new, const KdOptions& opts) {
    check_pairs(xs_old, xs_new, "train_kd");
    if (opts.epochs < 0 || opts.batch < 1) throw std::runtime_error("train_kd: bad epochs/batch");

    EncoderModel student = new_model.clone(/*trainable=*/true);
    int64_t d = student.layer_shapes().back().second;
    int64_t classes = old_head.class_count();
    TaskHead head = make_task_head(d, classes, fork_seed(opts.seed, 777));

    Tensor teacher_all = predict(old_model, old_head, stack_batch(xs_old));  // (n, classes), frozen

    std::vector<ParamPtr> trainables = student.params();
    trainables.push_back(head.W);
    trainables.push_back(head.b);
    int64_t param_total = 0;
    for (const ParamPtr& p : trainables) param_total += p->value.numel();

    Adam optimizer(trainables, AdamConfig{opts.lr, 0.9, 0.999, 1e-8, 0.0});
    TrainingHistory history;
    int64_t n = static_cast<int64_t>(xs_new.size());
    std::vector<int64_t> order(static_cast<size_t>(n));
    std::iota(order.begin(), order.end(), 0);
    Tensor x_all = stack_batch(xs_new);

    for (int64_t epoch = 0; epoch < opts.epochs; ++epoch) {
        double t0 = now_seconds();
        Rng rng(fork_seed(opts.seed, static_cast<uint64_t>(epoch) + 1));
        rng.shuffle(order);
        double epoch_loss = 0.0;
        for (int64_t start = 0, step = 0; start < n; start += opts.batch, ++step) {
            int64_t bs = std::min(opts.batch, n - start);
            std::span<const int64_t> idx(order.data() + start, static_cast<size_t>(bs));
            Tensor xb = gather_rows(x_all, idx);
            Tensor soft = gather_rows(teacher_all, idx);

            Tape tape;
            Var h = student.forward_prefix(tape, tape.constant(xb), student.layer_count());
            Var lg = head.logits(tape, h);
            Var loss =
                scale(sum_all(mul(log_softmax(lg), tape.constant(soft))), -1.0 / static_cast<double>(bs));
            double lv = loss.t().item();
            if (!std::isfinite(lv)) {
                throw std::runtime_error("train_kd: diverged (non-finite loss) at epoch " +
                                         std::to_string(epoch + 1) + ", step " + std::to_string(step + 1));
            }
            optimizer.zero_grad();
            tape.backward(loss);
            optimizer.step();
            epoch_loss += lv * static_cast<double>(bs);
        }
        history.loss.push_back(epoch_loss / static_cast<double>(n));
        if (opts.val) {
            Tensor probs = predict(student, head, stack_batch(opts.val->xs));
            history.val_metric.push_back(balanced_accuracy_of(probs, opts.val->labels, classes));
        }
        history.seconds.push_back(now_seconds() - t0);
    }
    student.freeze();
    head.freeze();
    return StudentResult{std::move(student), std::move(head), std::move(history), param_total};
}

namespace {

// Symmetric InfoNCE on normalized rows; `targets_norm_t` is the transposed,
// pre-normalized target block. Returns the Var loss for one batch.
Var info_nce_var(Tape& tape, const Var& projected, const Tensor& targets_norm_t, double tau) {
    int64_t bs = projected.t().dim(0);
    Var logits = scale(matmul(l2_normalize_rows(projected), tape.constant(targets_norm_t)), 1.0 / tau);
    Tensor eye = Tensor::eye(bs);
    Var row_term = scale(sum_all(mul(log_softmax(logits), tape.constant(eye))), -1.0 / static_cast<double>(bs));
    Var col_term = scale(sum_all(mul(log_softmax(transpose(logits)), tape.constant(eye))),
                         -1.0 / static_cast<double>(bs));
    return scale(add(row_term, col_term), 0.5);
}

}  // namespace

double info_nce_loss(const Tensor& projected, const Tensor& targets, double tau) {
    if (tau <= 0.0) throw std::runtime_error("info_nce: temperature must be > 0");
    if (projected.rank() != 2 || !projected.same_shape(targets)) {
        throw ShapeError("info_nce: expected matching (batch, dim) blocks, got " + shape_str(projected.shape()) +
                         " vs " + shape_str(targets.shape()));
    }
    if (projected.dim(0) < 2) throw std::runtime_error("info_nce: needs a batch of >= 2 for negatives");
    Tape tape;
    tape.set_recording(false);
    Var p;
    p.value = std::make_shared<const Tensor>(projected);
    return info_nce_var(tape, p, ops::transpose(ops::l2_normalize_rows(targets)), tau).t().item();
}

ContrastResult train_kd_contrast(const EncoderModel& new_model, const EncoderModel& old_model,
                                 std::span<const Tensor> xs_old, std::span<const Tensor> xs_new,
                                 const KdContrastOptions& opts) {
    check_pairs(xs_old, xs_new, "train_kd_contrast");
    if (opts.tau <= 0.0) throw std::runtime_error("train_kd_contrast: temperature must be > 0");
    if (opts.epochs < 0 || opts.batch < 2) {
        throw std::runtime_error("train_kd_contrast: needs batches of >= 2 for in-batch negatives");
    }
    int64_t n = static_cast<int64_t>(xs_new.size());
    if (n < 2) throw std::runtime_error("train_kd_contrast: needs >= 2 pairs");

    EncoderModel student = new_model.clone(/*trainable=*/true);
    int64_t d_new = student.layer_shapes().back().second;
    int64_t d_old = old_model.layer_shapes().back().second;
    Rng init_rng(fork_seed(opts.seed, 555));
    ParamPtr proj_w = make_param(init_rng.normal_tensor({d_new, d_old}, 0.0, 1.0 / std::sqrt(static_cast<double>(d_new))),
                                 true, "contrast.proj.w");
    ParamPtr proj_b = make_param(Tensor(Shape{d_old}), true, "contrast.proj.b");

    // Frozen old-modality embeddings: pooled final representations.
    Tensor z_old = ops::mean_pool(old_model.full_forward(stack_batch(xs_old)), -2);  // (n, d_old)

    std::vector<ParamPtr> trainables = student.params();
    trainables.push_back(proj_w);
    trainables.push_back(proj_b);
    int64_t param_total = 0;
    for (const ParamPtr& p : trainables) param_total += p->value.numel();

    Adam optimizer(trainables, AdamConfig{opts.lr, 0.9, 0.999, 1e-8, 0.0});
    TrainingHistory history;
    std::vector<int64_t> order(static_cast<size_t>(n));
    std::iota(order.begin(), order.end(), 0);
    Tensor x_all = stack_batch(xs_new);

    for (int64_t epoch = 0; epoch < opts.epochs; ++epoch) {
        double t0 = now_seconds();
        Rng rng(fork_seed(opts.seed, static_cast<uint64_t>(epoch) + 1));
        rng.shuffle(order);
        double epoch_loss = 0.0;
        int64_t counted = 0;
        for (int64_t start = 0, step = 0; start < n; start += opts.batch, ++step) {
            int64_t bs = std::min(opts.batch, n - start);
            if (bs < 2) continue;  // a lone tail sample has no negatives
            std::span<const int64_t> idx(order.data() + start, static_cast<size_t>(bs));
            Tensor xb = gather_rows(x_all, idx);
            Tensor zb = ops::transpose(ops::l2_normalize_rows(gather_rows(z_old, idx)));

            Tape tape;
            Var h = student.forward_prefix(tape, tape.constant(xb), student.layer_count());
            Var z = add_bias(matmul(mean_pool(h, -2), tape.leaf(proj_w)), tape.leaf(proj_b));
            Var loss = info_nce_var(tape, z, zb, opts.tau);
            double lv = loss.t().item();
            if (!std::isfinite(lv)) {
                throw std::runtime_error("train_kd_contrast: diverged (non-finite loss) at epoch " +
                                         std::to_string(epoch + 1) + ", step " + std::to_string(step + 1));
            }
            optimizer.zero_grad();
            tape.backward(loss);
            optimizer.step();
            epoch_loss += lv * static_cast<double>(bs);
            counted += bs;
        }
        if (counted == 0) throw std::runtime_error("train_kd_contrast: no batch had >= 2 pairs");
        history.loss.push_back(epoch_loss / static_cast<double>(counted));
        if (opts.val) {
            if (!opts.old_head) throw std::runtime_error("train_kd_contrast: val scoring needs the old head");
            Tensor probs =
                kd_contrast_predict(student, proj_w->value, proj_b->value, *opts.old_head, stack_batch(opts.val->xs));
            history.val_metric.push_back(
                balanced_accuracy_of(probs, opts.val->labels, opts.old_head->class_count()));
        }
        history.seconds.push_back(now_seconds() - t0);
    }
    student.freeze();
    proj_w->trainable = false;
    proj_b->trainable = false;
    return ContrastResult{std::move(student), std::move(proj_w), std::move(proj_b), std::move(history),
                          param_total};
}

Tensor kd_contrast_predict(const EncoderModel& student, const Tensor& proj_w, const Tensor& proj_b,
                           const TaskHead& old_head, const Tensor& x_new) {
    Tensor pooled = ops::mean_pool(student.full_forward(x_new), -2);  // (d_new) or (B, d_new)
    bool single = pooled.rank() == 1;
    if (single) pooled = ops::reshape(pooled, {1, -1});
    Tensor z = ops::add_bias(ops::matmul(pooled, proj_w), proj_b);  // (B, d_old)
    Tensor probs = ops::softmax(ops::add_bias(ops::matmul(z, old_head.W->value), old_head.b->value));
    if (single) probs = ops::reshape(probs, {old_head.class_count()});
    return probs;
}

std::vector<int64_t> random_baseline(int64_t class_count, int64_t n, uint64_t seed) {
    if (class_count < 2) throw std::runtime_error("random baseline: needs >= 2 classes");
    if (n < 0) throw std::runtime_error("random baseline: negative length");
    Rng rng(seed);
    std::vector<int64_t> out;
    out.reserve(static_cast<size_t>(n));
    for (int64_t i = 0; i < n; ++i) out.push_back(static_cast<int64_t>(rng.below(static_cast<uint64_t>(class_count))));
    return out;
}

double prediction_agreement(std::span<const int64_t> a, std::span<const int64_t> b) {
    if (a.empty() || a.size() != b.size()) {
        throw std::runtime_error("agreement: label sequences must match in (nonzero) length");
    }
    int64_t same = 0;
    for (size_t i = 0; i < a.size(); ++i) same += a[i] == b[i] ? 1 : 0;
    return static_cast<double>(same) / static_cast<double>(a.size());
}

}  // namespace biox
