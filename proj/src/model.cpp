#include "biox/model.hpp"

#include <cmath>
#include <cstring>
#include <stdexcept>

#include "biox/optim.hpp"

namespace biox {

const char* layer_kind_name(LayerKind k) {
    switch (k) {
        case LayerKind::ConvBlock: return "conv";
        case LayerKind::AttentionBlock: return "attention";
        case LayerKind::NormBlock: return "norm";
    }
    return "?";
}

LayerKind layer_kind_from_name(const std::string& name) {
    if (name == "conv") return LayerKind::ConvBlock;
    if (name == "attention") return LayerKind::AttentionBlock;
    if (name == "norm") return LayerKind::NormBlock;
    throw std::runtime_error("encoder: unknown layer kind '" + name + "'");
}

namespace {

// Parameter handle for forward code: tracked leaf when a tape is active,
// plain value otherwise.
Var wrap(const ParamPtr& p, Tape* tape) {
    if (tape) return tape->leaf(p);
    Var v;
    v.value = std::make_shared<const Tensor>(p->value);
    return v;
}

}  // namespace

EncoderModel::EncoderModel(std::string modality, Shape input_shape, std::vector<LayerSpec> specs, uint64_t seed)
    : modality_(std::move(modality)), input_shape_(std::move(input_shape)), specs_(std::move(specs)) {
    if (input_shape_.size() != 2 || input_shape_[0] < 1 || input_shape_[1] < 1) {
        throw ShapeError("encoder: input shape must be (T, C) with positive dims, got " + shape_str(input_shape_));
    }
    if (specs_.empty()) throw ShapeError("encoder: needs at least one layer");

    Rng rng(seed);
    int64_t n = input_shape_[0];
    int64_t d = input_shape_[1];
    for (size_t li = 0; li < specs_.size(); ++li) {
        const LayerSpec& s = specs_[li];
        std::string prefix = "layer" + std::to_string(li + 1) + ".";
        size_t begin = params_.size();
        if (s.dim < 1) throw ShapeError("encoder: layer " + std::to_string(li + 1) + " needs a positive dim");
        switch (s.kind) {
            case LayerKind::ConvBlock: {
                if (s.kernel < 1 || s.stride < 1) {
                    throw ShapeError("encoder: layer " + std::to_string(li + 1) + " kernel/stride must be >= 1");
                }
                if (n < s.kernel) {
                    throw ShapeError("encoder: layer " + std::to_string(li + 1) + " kernel " +
                                     std::to_string(s.kernel) + " exceeds incoming length " + std::to_string(n));
                }
                double sd = 1.0 / std::sqrt(static_cast<double>(s.kernel * d));
                params_.push_back(
                    make_param(rng.normal_tensor({s.kernel, d, s.dim}, 0.0, sd), true, prefix + "conv.w"));
                params_.push_back(make_param(Tensor(Shape{s.dim}), true, prefix + "conv.b"));
                n = (n - s.kernel) / s.stride + 1;
                d = s.dim;
                break;
            }
            case LayerKind::AttentionBlock: {
                if (s.dim != d) {
                    throw ShapeError("encoder: layer " + std::to_string(li + 1) + " attention dim " +
                                     std::to_string(s.dim) + " must match incoming dim " + std::to_string(d));
                }
                double sd = 1.0 / std::sqrt(static_cast<double>(d));
                auto ln = [&](const char* nm) {
                    params_.push_back(make_param(Tensor::full({d}, 1.0), true, prefix + nm + std::string(".g")));
                    params_.push_back(make_param(Tensor(Shape{d}), true, prefix + nm + std::string(".b")));
                };
                ln("ln1");
                for (const char* nm : {"wq", "wk", "wv", "wo"}) {
                    params_.push_back(make_param(rng.normal_tensor({d, d}, 0.0, sd), true, prefix + nm));
                }
                ln("ln2");
                params_.push_back(make_param(rng.normal_tensor({d, 2 * d}, 0.0, sd), true, prefix + "mlp.w1"));
                params_.push_back(make_param(Tensor(Shape{2 * d}), true, prefix + "mlp.b1"));
                params_.push_back(make_param(
                    rng.normal_tensor({2 * d, d}, 0.0, 1.0 / std::sqrt(2.0 * static_cast<double>(d))), true,
                    prefix + "mlp.w2"));
                params_.push_back(make_param(Tensor(Shape{d}), true, prefix + "mlp.b2"));
                break;
            }
            case LayerKind::NormBlock: {
                params_.push_back(make_param(Tensor::full({d}, 1.0), true, prefix + "ln.g"));
                params_.push_back(make_param(Tensor(Shape{d}), true, prefix + "ln.b"));
                double sd = 1.0 / std::sqrt(static_cast<double>(d));
                params_.push_back(make_param(rng.normal_tensor({d, s.dim}, 0.0, sd), true, prefix + "w"));
                params_.push_back(make_param(Tensor(Shape{s.dim}), true, prefix + "b"));
                d = s.dim;
                break;
            }
        }
        if (n < 1) throw ShapeError("encoder: layer " + std::to_string(li + 1) + " produces no tokens");
        shapes_.emplace_back(n, d);
        layer_param_range_.emplace_back(begin, params_.size());
    }
}

Var EncoderModel::run_layers(Tape* tape, Var h, int64_t from, int64_t to) const {
    for (int64_t li = from; li < to; ++li) {
        const LayerSpec& s = specs_[static_cast<size_t>(li)];
        auto [begin, end] = layer_param_range_[static_cast<size_t>(li)];
        auto p = [&](size_t i) { return wrap(params_[begin + i], tape); };
        (void)end;
        switch (s.kind) {
            case LayerKind::ConvBlock:
                h = gelu(conv1d(h, p(0), p(1), s.stride));
                break;
            case LayerKind::AttentionBlock: {
                Var t = layer_norm(h, p(0), p(1));
                Var a = attention(matmul(t, p(2)), matmul(t, p(3)), matmul(t, p(4)));
                Var u = add(h, matmul(a, p(5)));
                Var t2 = layer_norm(u, p(6), p(7));
                Var m = add_bias(matmul(gelu(add_bias(matmul(t2, p(8)), p(9))), p(10)), p(11));
                h = add(u, m);
                break;
            }
            case LayerKind::NormBlock:
                h = gelu(add_bias(matmul(layer_norm(h, p(0), p(1)), p(2)), p(3)));
                break;
        }
    }
    return h;
}

void EncoderModel::check_input(const Tensor& x) const {
    bool ok = (x.rank() == 2 || x.rank() == 3) && x.dim(-2) == input_shape_[0] && x.dim(-1) == input_shape_[1];
    if (!ok) {
        throw ShapeError("encoder[" + modality_ + "]: input must be " + shape_str(input_shape_) +
                         " (optionally batched), got " + shape_str(x.shape()));
    }
}

Tensor EncoderModel::forward_prefix(const Tensor& x, int64_t m) const {
    Tape* none = nullptr;
    check_input(x);
    if (m < 1 || m > layer_count()) {
        throw ShapeError("encoder[" + modality_ + "]: prefix depth " + std::to_string(m) + " outside 1.." +
                         std::to_string(layer_count()));
    }
    Var h;
    h.value = std::make_shared<const Tensor>(x);
    return *run_layers(none, h, 0, m).value;
}

Tensor EncoderModel::forward_suffix(const Tensor& h, int64_t l) const {
    if (l < 0 || l > layer_count()) {
        throw ShapeError("encoder[" + modality_ + "]: suffix start " + std::to_string(l) + " outside 0.." +
                         std::to_string(layer_count()));
    }
    int64_t want_n = l == 0 ? input_shape_[0] : shapes_[static_cast<size_t>(l - 1)].first;
    int64_t want_d = l == 0 ? input_shape_[1] : shapes_[static_cast<size_t>(l - 1)].second;
    bool ok = (h.rank() == 2 || h.rank() == 3) && h.dim(-2) == want_n && h.dim(-1) == want_d;
    if (!ok) {
        throw ShapeError("encoder[" + modality_ + "]: injected representation must be (" +
                         std::to_string(want_n) + ", " + std::to_string(want_d) + ") (optionally batched), got " +
                         shape_str(h.shape()));
    }
    Var v;
    v.value = std::make_shared<const Tensor>(h);
    Tape* none = nullptr;
    return *run_layers(none, v, l, layer_count()).value;
}

Var EncoderModel::forward_prefix(Tape& tape, const Var& x, int64_t m) const {
    check_input(x.t());
    if (m < 1 || m > layer_count()) {
        throw ShapeError("encoder[" + modality_ + "]: prefix depth " + std::to_string(m) + " outside 1.." +
                         std::to_string(layer_count()));
    }
    return run_layers(&tape, x, 0, m);
}

Var EncoderModel::forward_suffix(Tape& tape, const Var& h, int64_t l) const {
    if (l < 0 || l > layer_count()) {
        throw ShapeError("encoder[" + modality_ + "]: suffix start " + std::to_string(l) + " outside 0.." +
                         std::to_string(layer_count()));
    }
    return run_layers(&tape, h, l, layer_count());
}

Var EncoderModel::forward_between(Tape& tape, const Var& h, int64_t l, int64_t a) const {
    if (l < 0 || a < l || a > layer_count()) {
        throw ShapeError("encoder[" + modality_ + "]: layer range " + std::to_string(l) + ".." +
                         std::to_string(a) + " outside 0.." + std::to_string(layer_count()));
    }
    return run_layers(&tape, h, l, a);
}

Tensor EncoderModel::forward_between(const Tensor& h, int64_t l, int64_t a) const {
    if (l < 0 || a < l || a > layer_count()) {
        throw ShapeError("encoder[" + modality_ + "]: layer range " + std::to_string(l) + ".." +
                         std::to_string(a) + " outside 0.." + std::to_string(layer_count()));
    }
    Var v;
    v.value = std::make_shared<const Tensor>(h);
    Tape* none = nullptr;
    return *run_layers(none, v, l, a).value;
}

EncoderModel EncoderModel::clone(bool trainable) const {
    EncoderModel copy(modality_, input_shape_, specs_, /*seed=*/0);
    const auto& src = params_;
    const auto& dst = copy.params_;
    for (size_t i = 0; i < src.size(); ++i) {
        dst[i]->value = src[i]->value;
        dst[i]->grad = Tensor(src[i]->value.shape());
        dst[i]->trainable = trainable;
    }
    return copy;
}

void EncoderModel::freeze() {
    for (const ParamPtr& p : params_) p->trainable = false;
}

bool EncoderModel::frozen() const {
    for (const ParamPtr& p : params_) {
        if (p->trainable) return false;
    }
    return true;
}

void TaskHead::freeze() {
    W->trainable = false;
    b->trainable = false;
}

Tensor TaskHead::logits(const Tensor& h) const {
    Var v;
    v.value = std::make_shared<const Tensor>(h);
    Tape scratch;
    scratch.set_recording(false);
    return *logits(scratch, v).value;
}

Var TaskHead::logits(Tape& tape, const Var& h) const {
    int64_t r = h.t().rank();
    if (r != 2 && r != 3) {
        throw ShapeError("task head: representation must be (N, d) or (B, N, d), got " + shape_str(h.t().shape()));
    }
    if (h.t().dim(-1) != input_dim()) {
        throw ShapeError("task head: embedding dim " + std::to_string(h.t().dim(-1)) + " does not match head (" +
                         std::to_string(input_dim()) + ", " + std::to_string(class_count()) + ")");
    }
    Var pooled = mean_pool(h, -2);  // (d) or (B, d)
    bool single = r == 2;
    if (single) pooled = reshape(pooled, {1, -1});
    Var out = add_bias(matmul(pooled, wrap(W, &tape)), wrap(b, &tape));
    if (single) out = reshape(out, {class_count()});
    return out;
}

TaskHead make_task_head(int64_t dim, int64_t classes, uint64_t seed) {
    if (dim < 1 || classes < 2) throw ShapeError("task head: needs dim >= 1 and classes >= 2");
    Rng rng(seed);
    TaskHead head;
    head.W = make_param(rng.normal_tensor({dim, classes}, 0.0, 1.0 / std::sqrt(static_cast<double>(dim))), true,
                        "head.W");
    head.b = make_param(Tensor(Shape{classes}), true, "head.b");
    return head;
}

Tensor predict(const EncoderModel& model, const TaskHead& head, const Tensor& x) {
    return ops::softmax(head.logits(model.full_forward(x)));
}

Tensor stack_batch(std::span<const Tensor> xs) {
    if (xs.empty()) throw ShapeError("stack_batch: empty batch");
    const Shape& s = xs[0].shape();
    for (const Tensor& t : xs) {
        if (t.shape() != s) {
            throw ShapeError("stack_batch: mixed shapes " + shape_str(s) + " vs " + shape_str(t.shape()));
        }
    }
    Shape out_shape;
    out_shape.push_back(static_cast<int64_t>(xs.size()));
    out_shape.insert(out_shape.end(), s.begin(), s.end());
    Tensor out(out_shape);
    int64_t stride = xs[0].numel();
    for (size_t i = 0; i < xs.size(); ++i) {
        std::memcpy(out.data() + static_cast<int64_t>(i) * stride, xs[i].data(),
                    static_cast<size_t>(stride) * sizeof(double));
    }
    return out;
}

PretrainHistory pretrain_supervised(EncoderModel& model, TaskHead& head, std::span<const Tensor> xs,
                                    std::span<const int64_t> ys, const PretrainOptions& opts) {
    if (xs.size() != ys.size()) throw std::runtime_error("pretrain: sample/label count mismatch");
    if (xs.empty()) throw std::runtime_error("pretrain: empty dataset");
    if (opts.epochs < 0 || opts.batch < 1) throw std::runtime_error("pretrain: bad epochs/batch");
    int64_t classes = head.class_count();
    for (int64_t y : ys) {
        if (y < 0 || y >= classes) {
            throw std::runtime_error("pretrain: label " + std::to_string(y) + " outside 0.." +
                                     std::to_string(classes - 1));
        }
    }

    std::vector<ParamPtr> all = model.params();
    for (const ParamPtr& p : head.params()) all.push_back(p);
    Adam opt(all, {.lr = opts.lr});

    int64_t n = static_cast<int64_t>(xs.size());
    std::vector<int64_t> order(static_cast<size_t>(n));
    for (int64_t i = 0; i < n; ++i) order[static_cast<size_t>(i)] = i;

    PretrainHistory history;
    for (int64_t epoch = 0; epoch < opts.epochs; ++epoch) {
        Rng rng(fork_seed(opts.seed, static_cast<uint64_t>(epoch + 1)));
        rng.shuffle(order);
        double epoch_loss = 0.0;
        for (int64_t start = 0; start < n; start += opts.batch) {
            int64_t bs = std::min(opts.batch, n - start);
            std::vector<Tensor> batch;
            batch.reserve(static_cast<size_t>(bs));
            Tensor onehot(Shape{bs, classes});
            for (int64_t i = 0; i < bs; ++i) {
                int64_t idx = order[static_cast<size_t>(start + i)];
                batch.push_back(xs[static_cast<size_t>(idx)]);
                onehot.at({i, ys[static_cast<size_t>(idx)]}) = 1.0;
            }
            Tape tape;
            Var h = model.forward_prefix(tape, tape.constant(stack_batch(batch)), model.layer_count());
            Var lg = head.logits(tape, h);
            Var loss = scale(sum_all(mul(log_softmax(lg), tape.constant(onehot))),
                             -1.0 / static_cast<double>(bs));
            double lv = loss.t().item();
            if (!std::isfinite(lv)) {
                throw std::runtime_error("pretrain: diverged (non-finite loss) at epoch " +
                                         std::to_string(epoch + 1));
            }
            opt.zero_grad();
            tape.backward(loss);
            opt.step();
            epoch_loss += lv * static_cast<double>(bs);
        }
        history.epoch_loss.push_back(epoch_loss / static_cast<double>(n));
    }

    model.freeze();
    head.freeze();
    return history;
}

std::vector<LayerSpec> conv_stack_specs(int64_t dim) {
    return {
        {.kind = LayerKind::ConvBlock, .dim = dim, .kernel = 3, .stride = 2},
        {.kind = LayerKind::ConvBlock, .dim = dim, .kernel = 3, .stride = 2},
        {.kind = LayerKind::NormBlock, .dim = dim},
        {.kind = LayerKind::AttentionBlock, .dim = dim},
    };
}

std::vector<LayerSpec> attention_stack_specs(int64_t dim) {
    return {
        {.kind = LayerKind::ConvBlock, .dim = dim, .kernel = 4, .stride = 4},
        {.kind = LayerKind::AttentionBlock, .dim = dim},
        {.kind = LayerKind::AttentionBlock, .dim = dim},
        {.kind = LayerKind::NormBlock, .dim = dim},
    };
}

}  // namespace biox
