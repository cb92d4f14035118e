#pragma once

// Low-rank prototype bridge. Incoming token representations are pooled to a
// single vector, expanded through a rank-r factor pair (A, B) into one
// aggregation weight per (output token, prototype) cell, and the weights mix
// a learned prototype matrix P into the output token grid:
//
//   output = reshape(pool(h) . A . B, out_tokens x prototypes) . P
//
// Only A, B, P train; both encoders around the bridge stay frozen.

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "biox/autodiff.hpp"
#include "biox/tensor.hpp"

namespace biox {

struct BridgeShapeSpec {
    int64_t input_dim = 0;   // embedding width of the incoming tokens
    int64_t out_tokens = 0;  // token count the bridge must produce
    int64_t out_dim = 0;     // embedding width the bridge must produce
    int64_t rank = 0;        // width of the low-rank factor pair
    int64_t prototypes = 0;  // number of prototype rows
};

// Throws ShapeError unless every field is positive.
void validate_bridge_spec(const BridgeShapeSpec& spec);

struct BridgeParams {
    BridgeShapeSpec spec;
    ParamPtr A;  // (input_dim, rank)
    ParamPtr B;  // (rank, out_tokens * prototypes)
    ParamPtr P;  // (prototypes, out_dim)

    std::vector<ParamPtr> params() const { return {A, B, P}; }
    int64_t param_count() const;
};

enum class BridgeInit {
    Random,         // every block Gaussian
    FromReference,  // P rows sampled from supplied reference token vectors
};

enum class BridgePool { Mean, Max };

inline constexpr double kBridgeInitStd = 0.02;

// reference_tokens: rows of width out_dim (leading axes are flattened); only
// consulted — and then required to hold >= prototypes rows — for
// BridgeInit::FromReference.
BridgeParams init_bridge(const BridgeShapeSpec& spec, BridgeInit strategy, uint64_t seed,
                         const Tensor* reference_tokens = nullptr, double init_std = kBridgeInitStd);

// Trainable parameter total: input_dim*rank + rank*out_tokens*prototypes +
// prototypes*out_dim.
int64_t bridge_param_count(const BridgeShapeSpec& spec);

// Size of the unfactored alternative, a dense map from all in_tokens*input_dim
// inputs to all out_tokens*out_dim outputs.
int64_t full_rank_param_count(int64_t in_tokens, const BridgeShapeSpec& spec);

// h: (in_tokens, input_dim) or batched (batch, in_tokens, input_dim).
// Returns (out_tokens, out_dim) or (batch, out_tokens, out_dim).
Tensor bridge_forward(const Tensor& h, const BridgeParams& params, BridgePool pool = BridgePool::Mean);
Var bridge_forward(Tape& tape, const Var& h, const BridgeParams& params, BridgePool pool = BridgePool::Mean);

struct GridPoint {
    int64_t rank = 0;
    int64_t prototypes = 0;
    double score = 0.0;
};

struct GridSearchResult {
    int64_t best_rank = 0;
    int64_t best_prototypes = 0;
    double best_score = 0.0;
    std::vector<GridPoint> table;  // row-major over (ranks, prototype_counts)
};

// Evaluates train_and_score(rank, prototypes) -> validation score at every
// grid point and returns the argmax (strict improvement, so earlier points
// win ties). Closure exceptions are rethrown with the coordinates attached.
GridSearchResult grid_search(std::span<const int64_t> ranks, std::span<const int64_t> prototype_counts,
                             const std::function<double(int64_t, int64_t)>& train_and_score);

// Default hyperparameter sweep.
inline constexpr int64_t kDefaultRankGrid[] = {4, 8, 16, 32};
inline constexpr int64_t kDefaultPrototypeGrid[] = {50, 100, 150, 200, 250, 300};

}  // namespace biox
