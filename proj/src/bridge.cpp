#include "biox/bridge.hpp"

#include <stdexcept>
#include <string>

#include "biox/ops.hpp"

namespace biox {

void validate_bridge_spec(const BridgeShapeSpec& spec) {
    auto positive = [](int64_t v, const char* name) {
        if (v < 1) {
            throw ShapeError("bridge spec: " + std::string(name) + " must be >= 1, got " + std::to_string(v));
        }
    };
    positive(spec.input_dim, "input_dim");
    positive(spec.out_tokens, "out_tokens");
    positive(spec.out_dim, "out_dim");
    positive(spec.rank, "rank");
    positive(spec.prototypes, "prototypes");
}

int64_t BridgeParams::param_count() const {
    return A->value.numel() + B->value.numel() + P->value.numel();
}

int64_t bridge_param_count(const BridgeShapeSpec& spec) {
    validate_bridge_spec(spec);
    return spec.input_dim * spec.rank + spec.rank * spec.out_tokens * spec.prototypes +
           spec.prototypes * spec.out_dim;
}

int64_t full_rank_param_count(int64_t in_tokens, const BridgeShapeSpec& spec) {
    validate_bridge_spec(spec);
    if (in_tokens < 1) throw ShapeError("bridge spec: in_tokens must be >= 1");
    return in_tokens * spec.input_dim * spec.out_tokens * spec.out_dim;
}

BridgeParams init_bridge(const BridgeShapeSpec& spec, BridgeInit strategy, uint64_t seed,
                         const Tensor* reference_tokens, double init_std) {
    validate_bridge_spec(spec);
    Rng rng(seed);
    BridgeParams out;
    out.spec = spec;
    out.A = make_param(rng.normal_tensor({spec.input_dim, spec.rank}, 0.0, init_std), true, "bridge.A");
    out.B = make_param(rng.normal_tensor({spec.rank, spec.out_tokens * spec.prototypes}, 0.0, init_std), true,
                       "bridge.B");
    if (strategy == BridgeInit::Random) {
        out.P = make_param(rng.normal_tensor({spec.prototypes, spec.out_dim}, 0.0, init_std), true, "bridge.P");
    } else {
        if (!reference_tokens) {
            throw std::runtime_error("bridge init: reference-token strategy needs reference tokens");
        }
        if (reference_tokens->rank() < 2 || reference_tokens->dim(-1) != spec.out_dim) {
            throw ShapeError("bridge init: reference tokens must end in width " + std::to_string(spec.out_dim) +
                             ", got " + shape_str(reference_tokens->shape()));
        }
        int64_t rows = reference_tokens->numel() / spec.out_dim;
        if (rows < spec.prototypes) {
            throw std::runtime_error("bridge init: need >= " + std::to_string(spec.prototypes) +
                                     " reference tokens, got " + std::to_string(rows));
        }
        Tensor P(Shape{spec.prototypes, spec.out_dim});
        std::vector<int64_t> picks = rng.sample_without_replacement(rows, spec.prototypes);
        for (int64_t i = 0; i < spec.prototypes; ++i) {
            const double* src = reference_tokens->data() + picks[static_cast<size_t>(i)] * spec.out_dim;
            double* dst = P.data() + i * spec.out_dim;
            for (int64_t j = 0; j < spec.out_dim; ++j) dst[j] = src[j];
        }
        out.P = make_param(std::move(P), true, "bridge.P");
    }
    if (out.param_count() != bridge_param_count(spec)) {
        throw std::logic_error("bridge init: parameter-count identity violated");
    }
    return out;
}

namespace {

Var wrap(const ParamPtr& p, Tape* tape) {
    if (tape) return tape->leaf(p);
    Var v;
    v.value = std::make_shared<const Tensor>(p->value);
    return v;
}

Var bridge_run(Tape* tape, Var h, const BridgeParams& params, BridgePool pool) {
    const BridgeShapeSpec& s = params.spec;
    const Tensor& hv = h.t();
    if (hv.rank() < 2 || hv.rank() > 3 || hv.dim(-1) != s.input_dim) {
        throw ShapeError("bridge input stage: expected (tokens, " + std::to_string(s.input_dim) + ") or (batch, "
                                                                                                  "tokens, " +
                         std::to_string(s.input_dim) + "), got " + shape_str(hv.shape()));
    }
    bool single = hv.rank() == 2;
    Var pooled = pool == BridgePool::Mean ? mean_pool(h, -2) : max_pool(h, -2);  // (d) or (B, d)
    if (single) pooled = reshape(pooled, {1, -1});
    Var weights = matmul(matmul(pooled, wrap(params.A, tape)), wrap(params.B, tape));
    Shape grid = single ? Shape{s.out_tokens, s.prototypes} : Shape{-1, s.out_tokens, s.prototypes};
    Var mixed = matmul(reshape(weights, grid), wrap(params.P, tape));
    return mixed;  // (out_tokens, out_dim) or (B, out_tokens, out_dim)
}

}  // namespace

Tensor bridge_forward(const Tensor& h, const BridgeParams& params, BridgePool pool) {
    Var v;
    v.value = std::make_shared<const Tensor>(h);
    return bridge_run(nullptr, v, params, pool).t();
}

Var bridge_forward(Tape& tape, const Var& h, const BridgeParams& params, BridgePool pool) {
    return bridge_run(&tape, h, params, pool);
}

GridSearchResult grid_search(std::span<const int64_t> ranks, std::span<const int64_t> prototype_counts,
                             const std::function<double(int64_t, int64_t)>& train_and_score) {
    if (ranks.empty() || prototype_counts.empty()) {
        throw std::runtime_error("grid search: empty rank or prototype set");
    }
    GridSearchResult result;
    bool first = true;
    for (int64_t r : ranks) {
        for (int64_t np : prototype_counts) {
            double score = 0.0;
            try {
                score = train_and_score(r, np);
            } catch (const std::exception& e) {
                throw std::runtime_error("grid search: cell (rank=" + std::to_string(r) +
                                         ", prototypes=" + std::to_string(np) + ") failed: " + e.what());
            }
            result.table.push_back({r, np, score});
            if (first || score > result.best_score) {
                first = false;
                result.best_rank = r;
                result.best_prototypes = np;
                result.best_score = score;
            }
        }
    }
    return result;
}

}  // namespace biox
