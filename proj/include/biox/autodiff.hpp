#pragma once

// Reverse-mode differentiation over the primitive set in ops.hpp.
//
// Recording is explicit: values only enter a ComputationRecord (Tape) through
// Tape::constant / Tape::leaf, and every op applied to a tracked Var appends a
// node. Plain Tensor code paths never pay for bookkeeping, which is how frozen
// encoders run inference. Frozen parameters enter as untracked constants:
// gradients flow *through* them but are never accumulated *into* them.

#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "biox/ops.hpp"
#include "biox/tensor.hpp"

namespace biox {

struct Parameter {
    Tensor value;
    Tensor grad;
    bool trainable = true;
    std::string name;

    explicit Parameter(Tensor v, bool trainable_ = true, std::string name_ = "")
        : value(std::move(v)), grad(value.shape()), trainable(trainable_), name(std::move(name_)) {}

    void zero_grad() { grad = Tensor(value.shape()); }
};

using ParamPtr = std::shared_ptr<Parameter>;

inline ParamPtr make_param(Tensor v, bool trainable = true, std::string name = "") {
    return std::make_shared<Parameter>(std::move(v), trainable, std::move(name));
}

class Tape;

// Handle to a value flowing through a computation. node < 0 means untracked:
// the value is constant with respect to every trainable parameter.
struct Var {
    std::shared_ptr<const Tensor> value;
    Tape* tape = nullptr;
    int64_t node = -1;

    Var() = default;
    const Tensor& t() const { return *value; }
    bool tracked() const { return node >= 0; }
};

class Tape {
  public:
    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    // Wraps a value that carries no gradient.
    Var constant(Tensor v);
    Var constant(std::shared_ptr<const Tensor> v);

    // Brings a parameter into the computation. Tracked iff trainable.
    Var leaf(const ParamPtr& p);

    // Applies a primitive; records a node iff recording is on and at least
    // one input is tracked.
    Var apply(ops::Primitive kind, std::vector<Var> inputs, ops::PrimitiveAttrs attrs = {});

    void set_recording(bool on) { recording_ = on; }
    bool recording() const { return recording_; }
    size_t size() const { return nodes_.size(); }

    // Backpropagates from a scalar root, accumulating into Parameter::grad of
    // every reachable trainable parameter. Returns those parameters (each
    // once, in the order they are reached). An untracked root touches none.
    std::vector<ParamPtr> backward(const Var& root);

  private:
    struct Node {
        bool is_leaf = false;
        ops::Primitive kind = ops::Primitive::Add;
        ops::PrimitiveAttrs attrs;
        std::vector<int64_t> inputs;  // node ids; -1 for untracked operands
        std::vector<std::shared_ptr<const Tensor>> input_values;
        std::shared_ptr<const Tensor> output;
        ParamPtr param;  // leaf nodes only
    };

    std::vector<Node> nodes_;
    bool recording_ = true;
};

// Var-typed wrappers over the primitives. The tape is taken from the first
// tracked operand; if every operand is untracked the result is an untracked
// Var computed eagerly.
Var matmul(const Var& a, const Var& w);
Var conv1d(const Var& x, const Var& w, const Var& b, int64_t stride = 1);
Var layer_norm(const Var& x, const Var& gamma, const Var& beta, double eps = ops::kLayerNormEps);
Var attention(const Var& q, const Var& k, const Var& v);
Var add(const Var& a, const Var& b);
Var add_bias(const Var& x, const Var& b);
Var mul(const Var& a, const Var& b);
Var scale(const Var& a, double c);
Var gelu(const Var& x);
Var relu(const Var& x);
Var mean_pool(const Var& x, int axis);
Var max_pool(const Var& x, int axis);
Var reshape(const Var& x, Shape shape);
Var softmax(const Var& x);
Var log_softmax(const Var& x);
Var sum_all(const Var& x);
Var transpose(const Var& x);
Var l2_normalize_rows(const Var& x);
Var cosine_row_loss(const Var& a, const Var& b);
Var mae_loss(const Var& a, const Var& b);

// Compares analytic gradients of a scalar-valued function against central
// finite differences. Returns the max over parameter entries of
// |analytic - central| / max(1, |analytic|). Throws if f is non-finite at any
// probe point or its value is not scalar.
double grad_check(const std::function<Var(Tape&)>& f, std::span<const ParamPtr> params, double eps = 1e-5);

}  // namespace biox
