#include "biox/autodiff.hpp"

#include <cmath>
#include <stdexcept>
#include <unordered_set>

namespace biox {

namespace {

void accumulate(Tensor& dst, const Tensor& src) {
    for (int64_t i = 0; i < dst.numel(); ++i) dst[i] += src[i];
}

}  // namespace

Var Tape::constant(Tensor v) { return constant(std::make_shared<const Tensor>(std::move(v))); }

Var Tape::constant(std::shared_ptr<const Tensor> v) {
    Var out;
    out.value = std::move(v);
    out.tape = this;
    out.node = -1;
    return out;
}

Var Tape::leaf(const ParamPtr& p) {
    if (!p) throw std::runtime_error("Tape::leaf: null parameter");
    Var out;
    out.value = std::make_shared<const Tensor>(p->value);
    out.tape = this;
    if (!recording_ || !p->trainable) {
        out.node = -1;
        return out;
    }
    Node n;
    n.is_leaf = true;
    n.output = out.value;
    n.param = p;
    out.node = static_cast<int64_t>(nodes_.size());
    nodes_.push_back(std::move(n));
    return out;
}

Var Tape::apply(ops::Primitive kind, std::vector<Var> inputs, ops::PrimitiveAttrs attrs) {
    std::vector<Tensor> vals;
    vals.reserve(inputs.size());
    bool any_tracked = false;
    for (const Var& in : inputs) {
        if (!in.value) throw std::runtime_error("Tape::apply: empty Var operand");
        if (in.tracked()) {
            if (in.tape != this) throw std::runtime_error("Tape::apply: operand recorded on a different tape");
            any_tracked = true;
        }
        vals.push_back(*in.value);
    }
    auto out_value =
        std::make_shared<const Tensor>(ops::primitive_forward(kind, std::span<const Tensor>(vals), attrs));

    Var out;
    out.value = out_value;
    out.tape = this;
    out.node = -1;
    if (!recording_ || !any_tracked) return out;

    Node n;
    n.kind = kind;
    n.attrs = std::move(attrs);
    n.output = out_value;
    n.inputs.reserve(inputs.size());
    n.input_values.reserve(inputs.size());
    for (Var& in : inputs) {
        n.inputs.push_back(in.node);
        n.input_values.push_back(std::move(in.value));
    }
    out.node = static_cast<int64_t>(nodes_.size());
    nodes_.push_back(std::move(n));
    return out;
}

namespace {

// Per-node vector-Jacobian products. `need[i]` marks which input slots feed a
// tracked node; untracked slots are skipped. Returned entries for un-needed
// slots are empty tensors.
std::vector<Tensor> node_vjp(const Tape&, ops::Primitive kind, const ops::PrimitiveAttrs& attrs,
                             const std::vector<std::shared_ptr<const Tensor>>& in, const Tensor& out,
                             const Tensor& g, const std::vector<bool>& need) {
    using ops::Primitive;
    std::vector<Tensor> d(in.size());
    switch (kind) {
        case Primitive::MatMul:
            if (need[0]) d[0] = ops::matmul_vjp_a(g, *in[1]);
            if (need[1]) d[1] = ops::matmul_vjp_w(*in[0], g);
            break;
        case Primitive::Conv1d: {
            Tensor dx, dw, db;
            ops::conv1d_vjp(*in[0], *in[1], attrs.stride, g, need[0] ? &dx : nullptr, need[1] ? &dw : nullptr,
                            need[2] ? &db : nullptr);
            if (need[0]) d[0] = std::move(dx);
            if (need[1]) d[1] = std::move(dw);
            if (need[2]) d[2] = std::move(db);
            break;
        }
        case Primitive::LayerNorm: {
            Tensor dx, dgamma, dbeta;
            ops::layer_norm_vjp(*in[0], *in[1], attrs.eps, g, need[0] ? &dx : nullptr,
                                need[1] ? &dgamma : nullptr, need[2] ? &dbeta : nullptr);
            if (need[0]) d[0] = std::move(dx);
            if (need[1]) d[1] = std::move(dgamma);
            if (need[2]) d[2] = std::move(dbeta);
            break;
        }
        case Primitive::Attention: {
            Tensor dq, dk, dv;
            ops::attention_vjp(*in[0], *in[1], *in[2], g, need[0] ? &dq : nullptr, need[1] ? &dk : nullptr,
                               need[2] ? &dv : nullptr);
            if (need[0]) d[0] = std::move(dq);
            if (need[1]) d[1] = std::move(dk);
            if (need[2]) d[2] = std::move(dv);
            break;
        }
        case Primitive::Add:
            if (need[0]) d[0] = g;
            if (need[1]) d[1] = g;
            break;
        case Primitive::AddBias:
            if (need[0]) d[0] = g;
            if (need[1]) d[1] = ops::add_bias_vjp_b(g);
            break;
        case Primitive::Mul:
            if (need[0]) d[0] = ops::mul(g, *in[1]);
            if (need[1]) d[1] = ops::mul(g, *in[0]);
            break;
        case Primitive::Scale:
            if (need[0]) d[0] = ops::scale(g, attrs.value);
            break;
        case Primitive::Gelu:
            if (need[0]) d[0] = ops::gelu_vjp(*in[0], g);
            break;
        case Primitive::Relu:
            if (need[0]) d[0] = ops::relu_vjp(*in[0], g);
            break;
        case Primitive::MeanPool:
            if (need[0]) d[0] = ops::mean_pool_vjp(g, in[0]->shape(), attrs.axis);
            break;
        case Primitive::MaxPool:
            if (need[0]) d[0] = ops::max_pool_vjp(*in[0], g, attrs.axis);
            break;
        case Primitive::Reshape:
            if (need[0]) d[0] = ops::reshape(g, in[0]->shape());
            break;
        case Primitive::Softmax:
            if (need[0]) d[0] = ops::softmax_vjp(out, g);
            break;
        case Primitive::LogSoftmax:
            if (need[0]) d[0] = ops::log_softmax_vjp(out, g);
            break;
        case Primitive::SumAll:
            if (need[0]) d[0] = ops::sum_all_vjp(g, in[0]->shape());
            break;
        case Primitive::Transpose:
            if (need[0]) d[0] = ops::transpose(g);
            break;
        case Primitive::L2NormalizeRows:
            if (need[0]) d[0] = ops::l2_normalize_rows_vjp(*in[0], g);
            break;
        case Primitive::CosineRowLoss: {
            Tensor da, db;
            ops::cosine_row_loss_vjp(*in[0], *in[1], g, need[0] ? &da : nullptr, need[1] ? &db : nullptr);
            if (need[0]) d[0] = std::move(da);
            if (need[1]) d[1] = std::move(db);
            break;
        }
        case Primitive::MaeLoss: {
            Tensor da, db;
            ops::mae_loss_vjp(*in[0], *in[1], g, need[0] ? &da : nullptr, need[1] ? &db : nullptr);
            if (need[0]) d[0] = std::move(da);
            if (need[1]) d[1] = std::move(db);
            break;
        }
    }
    return d;
}

}  // namespace

std::vector<ParamPtr> Tape::backward(const Var& root) {
    if (!root.tracked()) return {};  // loss constant in every trainable parameter
    if (root.tape != this) throw std::runtime_error("Tape::backward: root recorded on a different tape");
    if (root.t().rank() != 0) {
        throw std::runtime_error("Tape::backward: loss must be scalar, got shape " + shape_str(root.t().shape()));
    }

    std::vector<std::unique_ptr<Tensor>> grads(nodes_.size());
    grads[static_cast<size_t>(root.node)] = std::make_unique<Tensor>(Tensor::scalar(1.0));

    std::vector<ParamPtr> touched;
    std::unordered_set<const Parameter*> seen;
    for (int64_t id = root.node; id >= 0; --id) {
        auto& gptr = grads[static_cast<size_t>(id)];
        if (!gptr) continue;
        const Node& n = nodes_[static_cast<size_t>(id)];
        if (n.is_leaf) {
            accumulate(n.param->grad, *gptr);
            if (seen.insert(n.param.get()).second) touched.push_back(n.param);
        } else {
            std::vector<bool> need(n.inputs.size());
            bool any = false;
            for (size_t i = 0; i < n.inputs.size(); ++i) {
                need[i] = n.inputs[i] >= 0;
                any = any || need[i];
            }
            if (any) {
                std::vector<Tensor> d = node_vjp(*this, n.kind, n.attrs, n.input_values, *n.output, *gptr, need);
                for (size_t i = 0; i < n.inputs.size(); ++i) {
                    if (!need[i]) continue;
                    auto& slot = grads[static_cast<size_t>(n.inputs[i])];
                    if (!slot) {
                        slot = std::make_unique<Tensor>(std::move(d[i]));
                    } else {
                        accumulate(*slot, d[i]);
                    }
                }
            }
        }
        gptr.reset();  // free as we go
    }
    return touched;
}

namespace {

Var var_op(ops::Primitive kind, std::vector<Var> inputs, ops::PrimitiveAttrs attrs = {}) {
    Tape* tape = nullptr;
    for (const Var& v : inputs) {
        if (v.tracked()) {
            tape = v.tape;
            break;
        }
    }
    if (!tape) {
        for (const Var& v : inputs) {
            if (v.tape) {
                tape = v.tape;
                break;
            }
        }
    }
    if (tape) return tape->apply(kind, std::move(inputs), std::move(attrs));
    // No tape anywhere: pure eager evaluation.
    std::vector<Tensor> vals;
    vals.reserve(inputs.size());
    for (const Var& v : inputs) vals.push_back(*v.value);
    Var out;
    out.value =
        std::make_shared<const Tensor>(ops::primitive_forward(kind, std::span<const Tensor>(vals), attrs));
    return out;
}

}  // namespace

Var matmul(const Var& a, const Var& w) { return var_op(ops::Primitive::MatMul, {a, w}); }

Var conv1d(const Var& x, const Var& w, const Var& b, int64_t stride) {
    ops::PrimitiveAttrs attrs;
    attrs.stride = stride;
    return var_op(ops::Primitive::Conv1d, {x, w, b}, std::move(attrs));
}

Var layer_norm(const Var& x, const Var& gamma, const Var& beta, double eps) {
    ops::PrimitiveAttrs attrs;
    attrs.eps = eps;
    return var_op(ops::Primitive::LayerNorm, {x, gamma, beta}, std::move(attrs));
}

Var attention(const Var& q, const Var& k, const Var& v) { return var_op(ops::Primitive::Attention, {q, k, v}); }

Var add(const Var& a, const Var& b) { return var_op(ops::Primitive::Add, {a, b}); }

Var add_bias(const Var& x, const Var& b) { return var_op(ops::Primitive::AddBias, {x, b}); }

Var mul(const Var& a, const Var& b) { return var_op(ops::Primitive::Mul, {a, b}); }

Var scale(const Var& a, double c) {
    ops::PrimitiveAttrs attrs;
    attrs.value = c;
    return var_op(ops::Primitive::Scale, {a}, std::move(attrs));
}

Var gelu(const Var& x) { return var_op(ops::Primitive::Gelu, {x}); }

Var relu(const Var& x) { return var_op(ops::Primitive::Relu, {x}); }

Var mean_pool(const Var& x, int axis) {
    ops::PrimitiveAttrs attrs;
    attrs.axis = axis;
    return var_op(ops::Primitive::MeanPool, {x}, std::move(attrs));
}

Var max_pool(const Var& x, int axis) {
    ops::PrimitiveAttrs attrs;
    attrs.axis = axis;
    return var_op(ops::Primitive::MaxPool, {x}, std::move(attrs));
}

Var reshape(const Var& x, Shape shape) {
    ops::PrimitiveAttrs attrs;
    attrs.shape = std::move(shape);
    return var_op(ops::Primitive::Reshape, {x}, std::move(attrs));
}

Var softmax(const Var& x) { return var_op(ops::Primitive::Softmax, {x}); }

Var log_softmax(const Var& x) { return var_op(ops::Primitive::LogSoftmax, {x}); }

Var sum_all(const Var& x) { return var_op(ops::Primitive::SumAll, {x}); }

Var transpose(const Var& x) { return var_op(ops::Primitive::Transpose, {x}); }

Var l2_normalize_rows(const Var& x) { return var_op(ops::Primitive::L2NormalizeRows, {x}); }

Var cosine_row_loss(const Var& a, const Var& b) { return var_op(ops::Primitive::CosineRowLoss, {a, b}); }

Var mae_loss(const Var& a, const Var& b) { return var_op(ops::Primitive::MaeLoss, {a, b}); }

double grad_check(const std::function<Var(Tape&)>& f, std::span<const ParamPtr> params, double eps) {
    if (eps <= 0.0) throw std::runtime_error("grad_check: eps must be positive");

    auto eval_scalar = [&]() -> double {
        Tape tape;
        tape.set_recording(false);
        Var out = f(tape);
        if (out.t().rank() != 0) {
            throw std::runtime_error("grad_check: f must return a scalar, got shape " +
                                     shape_str(out.t().shape()));
        }
        double v = out.t().item();
        if (!std::isfinite(v)) throw std::runtime_error("grad_check: f returned a non-finite value");
        return v;
    };

    // Analytic pass.
    std::vector<Tensor> saved_grads;
    saved_grads.reserve(params.size());
    for (const ParamPtr& p : params) {
        saved_grads.push_back(p->grad);
        p->zero_grad();
    }
    {
        Tape tape;
        Var out = f(tape);
        if (out.t().rank() != 0) {
            throw std::runtime_error("grad_check: f must return a scalar, got shape " +
                                     shape_str(out.t().shape()));
        }
        if (!std::isfinite(out.t().item())) throw std::runtime_error("grad_check: f returned a non-finite value");
        tape.backward(out);
    }
    std::vector<Tensor> analytic;
    analytic.reserve(params.size());
    for (const ParamPtr& p : params) analytic.push_back(p->grad);

    double max_err = 0.0;
    for (size_t pi = 0; pi < params.size(); ++pi) {
        Parameter& p = *params[pi];
        for (int64_t i = 0; i < p.value.numel(); ++i) {
            double orig = p.value[i];
            p.value[i] = orig + eps;
            double up = eval_scalar();
            p.value[i] = orig - eps;
            double down = eval_scalar();
            p.value[i] = orig;
            double central = (up - down) / (2.0 * eps);
            double a = analytic[pi][i];
            double err = std::abs(a - central) / std::max(1.0, std::abs(a));
            max_err = std::max(max_err, err);
        }
    }

    // Restore caller-visible gradients.
    for (size_t pi = 0; pi < params.size(); ++pi) params[pi]->grad = saved_grads[pi];
    return max_err;
}

}  // namespace biox
