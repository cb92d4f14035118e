#pragma once

// Toy layer-stack encoders standing in for modality-specific foundation
// models. Each encoder maps a (T, C) signal to a per-layer token
// representation (N_i, d_i); prefixes and suffixes of the stack can run
// independently so intermediate representations can be captured on one model
// and injected into another. A leading batch axis is accepted everywhere.

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "biox/autodiff.hpp"

namespace biox {

enum class LayerKind {
    ConvBlock,       // GELU(conv1d(x) + bias); shrinks tokens per kernel/stride
    AttentionBlock,  // pre-norm transformer block; keeps (N, d)
    NormBlock,       // GELU(layer_norm(x) . W + b); keeps N, may change d
};

const char* layer_kind_name(LayerKind k);
LayerKind layer_kind_from_name(const std::string& name);

struct LayerSpec {
    LayerKind kind;
    int64_t dim = 0;     // output embedding dimension d_i
    int64_t kernel = 1;  // conv only
    int64_t stride = 1;  // conv only
};

// Token/embedding shape produced by a layer.
using LayerShape = std::pair<int64_t, int64_t>;  // (N_i, d_i)

class EncoderModel {
  public:
    // input_shape is (T, C); seed initializes all parameters deterministically.
    EncoderModel(std::string modality, Shape input_shape, std::vector<LayerSpec> specs, uint64_t seed);

    int64_t layer_count() const { return static_cast<int64_t>(specs_.size()); }
    const std::string& modality() const { return modality_; }
    const Shape& input_shape() const { return input_shape_; }
    const std::vector<LayerSpec>& specs() const { return specs_; }

    // (N_i, d_i) for i = 1..layer_count, derived statically from the specs.
    const std::vector<LayerShape>& layer_shapes() const { return shapes_; }

    // Runs layers 1..m. Requires 1 <= m <= layer_count.
    Tensor forward_prefix(const Tensor& x, int64_t m) const;
    // Resumes from an injected representation h_l through layers l+1..L.
    // Requires 0 <= l <= layer_count; l == layer_count returns h unchanged.
    Tensor forward_suffix(const Tensor& h, int64_t l) const;
    Tensor full_forward(const Tensor& x) const { return forward_prefix(x, layer_count()); }

    // Differentiable variants; gradients flow through frozen layers without
    // being accumulated into them.
    Var forward_prefix(Tape& tape, const Var& x, int64_t m) const;
    Var forward_suffix(Tape& tape, const Var& h, int64_t l) const;

    // Runs layers l+1..a on an injected representation; 0 <= l <= a <= L.
    Tensor forward_between(const Tensor& h, int64_t l, int64_t a) const;
    Var forward_between(Tape& tape, const Var& h, int64_t l, int64_t a) const;

    // Deep copy with fresh parameter storage.
    EncoderModel clone(bool trainable) const;

    const std::vector<ParamPtr>& params() const { return params_; }
    void freeze();
    bool frozen() const;

  private:
    Var run_layers(Tape* tape, Var h, int64_t from, int64_t to) const;
    void check_input(const Tensor& x) const;

    std::string modality_;
    Shape input_shape_;
    std::vector<LayerSpec> specs_;
    std::vector<LayerShape> shapes_;
    std::vector<ParamPtr> params_;
    // per-layer slices into params_: [begin, end)
    std::vector<std::pair<size_t, size_t>> layer_param_range_;
};

// Linear classifier over the mean-pooled final representation.
struct TaskHead {
    ParamPtr W;  // (d_L, classes)
    ParamPtr b;  // (classes)

    int64_t class_count() const { return b->value.dim(0); }
    int64_t input_dim() const { return W->value.dim(0); }
    std::vector<ParamPtr> params() const { return {W, b}; }
    void freeze();

    // h is (N, d) or (B, N, d); returns (classes) or (B, classes).
    Tensor logits(const Tensor& h) const;
    Var logits(Tape& tape, const Var& h) const;
};

TaskHead make_task_head(int64_t dim, int64_t classes, uint64_t seed);

// Class probabilities for one sample (C) or a batch (B, C).
Tensor predict(const EncoderModel& model, const TaskHead& head, const Tensor& x);

// Stacks B same-shaped samples into one tensor with a new leading axis.
Tensor stack_batch(std::span<const Tensor> xs);

struct PretrainOptions {
    int64_t epochs = 50;
    double lr = 1e-3;
    int64_t batch = 32;
    uint64_t seed = 0;
};

struct PretrainHistory {
    std::vector<double> epoch_loss;  // mean training cross-entropy per epoch
};

// Trains encoder+head end-to-end with cross-entropy, then freezes both so the
// result can serve as an immutable teacher. Throws on non-finite loss,
// reporting the epoch where training diverged.
PretrainHistory pretrain_supervised(EncoderModel& model, TaskHead& head, std::span<const Tensor> xs,
                                    std::span<const int64_t> ys, const PretrainOptions& opts = {});

// Canonical toy architectures. The two differ in token counts and embedding
// dims at every layer so cross-architecture transfer is non-trivial.
std::vector<LayerSpec> conv_stack_specs(int64_t dim);       // conv, conv, norm, attention
std::vector<LayerSpec> attention_stack_specs(int64_t dim);  // patchify conv, attention, attention, norm

}  // namespace biox
