#pragma once

// Cross-modality transfer: output-position selection by representation
// similarity, bridge training on synchronized pairs, bridged inference, and
// the distillation / contrastive / random baselines. Both encoders stay
// frozen throughout; only the bridge (or a student copy, for the baselines)
// trains.

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "biox/bridge.hpp"
#include "biox/cka.hpp"
#include "biox/model.hpp"
#include "biox/probing.hpp"

namespace biox {

// ------------------------------------------------------------ position choice

enum class SimilarityObjective {
    Maximize,  // default: hand the bridge the most similar old layer
    Minimize,  // escape hatch for studying the opposite rule
};

struct OutputPositionResult {
    int64_t layer = 0;           // chosen l (1-based)
    std::vector<double> scores;  // similarity per old layer, index l-1; 0 where skipped
    std::vector<bool> skipped;   // true where the similarity was undefined
    std::vector<std::string> warnings;
};

// Flattened per-sample representations of layer `m` over the given samples.
RepresentationMatrix layer_representation(const EncoderModel& model, std::span<const Tensor> xs, int64_t layer);

// Scores every old-model layer by linear CKA against h_new (rows subsampled
// identically on both sides when n exceeds row_cap) and returns the best
// layer under the objective; ties break to the smallest index. Layers whose
// similarity is undefined are skipped; all layers undefined is an error.
OutputPositionResult select_output_position(const RepresentationMatrix& h_new, const EncoderModel& old_model,
                                            std::span<const Tensor> xs_old, int64_t row_cap = kDefaultCkaRowCap,
                                            uint64_t seed = 0,
                                            SimilarityObjective objective = SimilarityObjective::Maximize);

struct PositionSelection {
    int64_t input_layer = 0;   // m into the new-modality encoder
    int64_t output_layer = 0;  // l into the old-modality encoder
    std::vector<double> probe_scores;  // stage 1, per new layer
    std::vector<double> cka_scores;    // stage 2, per old layer
    bool probe_degenerate = false;
    std::vector<std::string> warnings;
};

struct PositionSelectionOptions {
    double probe_l2 = kDefaultProbeL2;
    int64_t probe_folds = kDefaultProbeFolds;
    int64_t cka_row_cap = kDefaultCkaRowCap;
    uint64_t seed = 0;
    SimilarityObjective objective = SimilarityObjective::Maximize;
};

// Full two-stage selection over the synchronized pairs: the teacher's
// pseudo-labels drive the input-side probe, then the chosen layer's
// representation drives the output-side similarity scan.
PositionSelection select_positions(const EncoderModel& old_model, const TaskHead& head,
                                   const EncoderModel& new_model, std::span<const Tensor> xs_old,
                                   std::span<const Tensor> xs_new, const PositionSelectionOptions& opts = {});

// ------------------------------------------------------------ alignment loss

enum class AlignKind {
    Cosine,        // mean over token rows of (1 - cosine similarity)
    Mae,           // mean absolute elementwise difference
    PooledCosine,  // cosine over token-pooled vectors
};

// h and h_tilde must share a shape whose last two axes are (tokens, dim).
// Zero-norm rows under cosine contribute exactly 1 and are counted.
double alignment_loss(const Tensor& h, const Tensor& h_tilde, AlignKind kind, int64_t* zero_norm_rows = nullptr);
Var alignment_loss(Tape& tape, const Var& h_tilde, const Tensor& h_target, AlignKind kind);

// ------------------------------------------------------------ training

struct EvalSet {
    std::vector<Tensor> xs;         // new-modality inputs
    std::vector<int64_t> labels;    // evaluation labels
};

struct TrainingHistory {
    std::vector<double> loss;        // mean training loss per epoch
    std::vector<double> val_metric;  // balanced accuracy per epoch; empty without a val set
    std::vector<double> seconds;     // wall-clock per epoch (never part of report bytes)
    int64_t zero_norm_rows = 0;      // cosine rows skipped as unnormalizable
};

struct TransferTrainOptions {
    int64_t epochs = 50;
    int64_t batch = 32;
    double lr = 1e-3;
    AlignKind loss_kind = AlignKind::Cosine;
    BridgePool pool = BridgePool::Mean;
    int64_t align_layer = -1;  // -1: final layer; otherwise must be >= output position
    uint64_t seed = 0;
    const EvalSet* val = nullptr;
    std::function<void(int64_t epoch)> on_epoch;  // called after each epoch's updates
};

// Minimizes the alignment loss between the old encoder's representation and
// the bridged new-modality representation, updating only the bridge. Both
// encoders are bit-identical before and after. Throws on non-finite loss
// with the epoch and step in the message.
TrainingHistory train_bridge(const EncoderModel& old_model, const EncoderModel& new_model, const TaskHead& head,
                             std::span<const Tensor> xs_old, std::span<const Tensor> xs_new,
                             const PositionSelection& positions, BridgeParams& bridge,
                             const TransferTrainOptions& opts = {});

// ------------------------------------------------------------ inference

// Maps a pooled-token representation of the new modality into the old
// model's layer-l space; the default implementation is the trained bridge.
using BridgeFn = std::function<Tensor(const Tensor& h_m)>;

// Class probabilities via new-prefix -> bridge -> old-suffix -> old head.
// x_new: one sample (T, C) -> (classes), or batched -> (batch, classes).
Tensor bridged_predict(const EncoderModel& old_model, const EncoderModel& new_model, const TaskHead& head,
                       const BridgeParams& bridge, const PositionSelection& positions, const Tensor& x_new,
                       BridgePool pool = BridgePool::Mean);

// Same pipeline with the bridge stage replaced by an arbitrary map; used to
// study the exact-bridge limit, where injecting the old model's own layer-l
// representation must reproduce its predictions bit for bit.
Tensor bridged_predict_with(const EncoderModel& old_model, const EncoderModel& new_model, const TaskHead& head,
                            const PositionSelection& positions, const BridgeFn& bridge_fn, const Tensor& x_new);

std::vector<int64_t> predicted_labels(const Tensor& probs);

// ------------------------------------------------------------ baselines

struct StudentResult {
    EncoderModel student;
    TaskHead head;
    TrainingHistory history;
    int64_t trainable_params = 0;
};

struct KdOptions {
    int64_t epochs = 50;
    int64_t batch = 32;
    double lr = 1e-3;
    uint64_t seed = 0;
    const EvalSet* val = nullptr;
};

// Soft-target distillation: the student (a trainable copy of the new-modality
// encoder plus a fresh head) matches the frozen teacher's class probabilities
// on the pairs via cross-entropy.
StudentResult train_kd(const EncoderModel& new_model, const EncoderModel& old_model, const TaskHead& old_head,
                       std::span<const Tensor> xs_old, std::span<const Tensor> xs_new, const KdOptions& opts = {});

inline constexpr double kDefaultInfoNceTau = 0.04;

struct ContrastResult {
    EncoderModel student;
    ParamPtr proj_w;  // (d_new_L, d_old_L)
    ParamPtr proj_b;  // (d_old_L)
    TrainingHistory history;
    int64_t trainable_params = 0;
};

struct KdContrastOptions {
    double tau = kDefaultInfoNceTau;
    int64_t epochs = 50;
    int64_t batch = 32;
    double lr = 1e-3;
    uint64_t seed = 0;
    const EvalSet* val = nullptr;
    const TaskHead* old_head = nullptr;  // needed when a val set is scored
};

// Symmetric InfoNCE over in-batch pairs: each projected new-modality
// embedding should match its own synchronized old-modality embedding and
// repel the rest of the batch. Requires batches of at least 2.
ContrastResult train_kd_contrast(const EncoderModel& new_model, const EncoderModel& old_model,
                                 std::span<const Tensor> xs_old, std::span<const Tensor> xs_new,
                                 const KdContrastOptions& opts = {});

// Class probabilities for the contrastive student: project the pooled final
// representation into the old embedding space and reuse the old head there.
Tensor kd_contrast_predict(const EncoderModel& student, const Tensor& proj_w, const Tensor& proj_b,
                           const TaskHead& old_head, const Tensor& x_new);

// One symmetric InfoNCE term over a batch of projected/target embedding rows.
double info_nce_loss(const Tensor& projected, const Tensor& targets, double tau);

// Uniform i.i.d. labels, deterministic per seed.
std::vector<int64_t> random_baseline(int64_t class_count, int64_t n, uint64_t seed);

// Fraction of positions where the two label sequences agree.
double prediction_agreement(std::span<const int64_t> a, std::span<const int64_t> b);

}  // namespace biox
