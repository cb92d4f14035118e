#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <cstdint>
#include <vector>

#include "biox/metrics.hpp"
#include "biox/ops.hpp"
#include "biox/transfer.hpp"

using namespace biox;

namespace {

struct PairSet {
    std::vector<Tensor> xs_old;
    std::vector<Tensor> xs_new;
};

PairSet random_pairs(int64_t n, const Shape& old_shape, const Shape& new_shape, uint64_t seed) {
    Rng rng(seed);
    PairSet p;
    for (int64_t i = 0; i < n; ++i) {
        p.xs_old.push_back(rng.normal_tensor(old_shape));
        p.xs_new.push_back(rng.normal_tensor(new_shape));
    }
    return p;
}

EncoderModel frozen(EncoderModel m) {
    m.freeze();
    return m;
}

std::vector<Tensor> snapshot(const EncoderModel& m) {
    std::vector<Tensor> out;
    for (const ParamPtr& p : m.params()) out.push_back(p->value);
    return out;
}

void check_unchanged(const EncoderModel& m, const std::vector<Tensor>& snap) {
    const auto& params = m.params();
    REQUIRE(params.size() == snap.size());
    for (size_t i = 0; i < snap.size(); ++i) CHECK(max_abs_diff(params[i]->value, snap[i]) == 0.0);
}

}  // namespace

TEST_CASE("alignment loss hand values") {
    Tensor h({{1.0, 0.0}, {0.0, 2.0}});

    CHECK(alignment_loss(h, h, AlignKind::Cosine) == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(alignment_loss(h, h, AlignKind::Mae) == 0.0);
    CHECK(alignment_loss(h, h, AlignKind::PooledCosine) == doctest::Approx(0.0).epsilon(1e-12));

    // Row-wise orthogonal counterpart: every row contributes exactly 1.
    Tensor ortho({{0.0, 3.0}, {5.0, 0.0}});
    CHECK(alignment_loss(h, ortho, AlignKind::Cosine) == doctest::Approx(1.0).epsilon(1e-12));

    // Antipodal rows: 1 - (-1) = 2 per row.
    Tensor anti({{-1.0, 0.0}, {0.0, -2.0}});
    CHECK(alignment_loss(h, anti, AlignKind::Cosine) == doctest::Approx(2.0).epsilon(1e-12));

    Tensor off({{2.0, 1.0}, {1.0, 4.0}});
    CHECK(alignment_loss(h, off, AlignKind::Mae) == doctest::Approx((1.0 + 1.0 + 1.0 + 2.0) / 4.0).epsilon(1e-12));

    // A zero-norm row contributes exactly 1 and increments the counter.
    Tensor zrow({{0.0, 0.0}, {0.0, 2.0}});
    int64_t zero_rows = 0;
    double loss = alignment_loss(zrow, h, AlignKind::Cosine, &zero_rows);
    CHECK(zero_rows == 1);
    CHECK(loss == doctest::Approx((1.0 + 0.0) / 2.0).epsilon(1e-12));

    CHECK_THROWS_AS(alignment_loss(h, Tensor(Shape{3, 2}), AlignKind::Cosine), ShapeError);
}

TEST_CASE("output position selection prefers the copied layer") {
    EncoderModel old_model = frozen(EncoderModel(
        "ecg", Shape{7, 3},
        {{LayerKind::ConvBlock, 4, 2, 1}, {LayerKind::AttentionBlock, 4}, {LayerKind::NormBlock, 6}}, 3));
    Rng rng(4);
    std::vector<Tensor> xs;
    for (int i = 0; i < 20; ++i) xs.push_back(rng.normal_tensor({7, 3}));

    for (int64_t copied = 1; copied <= 3; ++copied) {
        RepresentationMatrix h_new = layer_representation(old_model, xs, copied);
        OutputPositionResult res = select_output_position(h_new, old_model, xs);
        CHECK(res.layer == copied);
        CHECK(res.scores[static_cast<size_t>(copied - 1)] == doctest::Approx(1.0).epsilon(1e-9));
        for (double s : res.scores) {
            CHECK(s >= -1e-12);
            CHECK(s <= 1.0 + 1e-12);
        }
    }
}

TEST_CASE("single-layer teacher always selects layer 1") {
    EncoderModel old_model = frozen(EncoderModel("ecg", Shape{6, 4}, {{LayerKind::ConvBlock, 5, 1, 1}}, 5));
    Rng rng(6);
    std::vector<Tensor> xs;
    for (int i = 0; i < 8; ++i) xs.push_back(rng.normal_tensor({6, 4}));
    RepresentationMatrix h_new{rng.normal_tensor({8, 9}), 1, "emg"};
    CHECK(select_output_position(h_new, old_model, xs).layer == 1);
}

TEST_CASE("row subsampling does not change the selected layer here") {
    EncoderModel old_model = frozen(EncoderModel(
        "ecg", Shape{7, 3},
        {{LayerKind::ConvBlock, 4, 2, 1}, {LayerKind::AttentionBlock, 4}, {LayerKind::NormBlock, 6}}, 7));
    Rng rng(8);
    std::vector<Tensor> xs;
    for (int i = 0; i < 40; ++i) xs.push_back(rng.normal_tensor({7, 3}));
    RepresentationMatrix h_new = layer_representation(old_model, xs, 2);

    OutputPositionResult capped = select_output_position(h_new, old_model, xs, /*row_cap=*/16, /*seed=*/5);
    OutputPositionResult full = select_output_position(h_new, old_model, xs, /*row_cap=*/1 << 20, /*seed=*/5);
    CHECK(capped.layer == full.layer);
}

TEST_CASE("degenerate layers are skipped, all-degenerate errors") {
    EncoderModel old_model("ecg", Shape{5, 3}, {{LayerKind::ConvBlock, 4, 1, 1}, {LayerKind::NormBlock, 4}}, 9);
    // Zero the second layer's linear map: its output is then the same for
    // every sample, so its similarity is undefined.
    for (const ParamPtr& p : old_model.params()) {
        if (p->name.find("layer2.w") != std::string::npos) {
            for (int64_t i = 0; i < p->value.numel(); ++i) p->value[i] = 0.0;
        }
    }
    old_model.freeze();
    Rng rng(10);
    std::vector<Tensor> xs;
    for (int i = 0; i < 10; ++i) xs.push_back(rng.normal_tensor({5, 3}));

    RepresentationMatrix h_new = layer_representation(old_model, xs, 1);
    OutputPositionResult res = select_output_position(h_new, old_model, xs);
    CHECK(res.layer == 1);
    CHECK(res.skipped[1]);
    CHECK_FALSE(res.skipped[0]);
    REQUIRE_FALSE(res.warnings.empty());

    // Zero the first layer too: nothing left to compare against.
    for (const ParamPtr& p : old_model.params()) {
        if (p->name.find("layer1.conv") != std::string::npos) {
            for (int64_t i = 0; i < p->value.numel(); ++i) p->value[i] = 0.0;
        }
    }
    RepresentationMatrix outside{rng.normal_tensor({10, 6}), 1, "emg"};
    CHECK_THROWS_AS(select_output_position(outside, old_model, xs), DegenerateRepresentationError);
}

TEST_CASE("two-stage selection composes and is deterministic") {
    EncoderModel old_model = frozen(EncoderModel(
        "ecg", Shape{7, 3}, {{LayerKind::ConvBlock, 4, 2, 1}, {LayerKind::NormBlock, 6}}, 11));
    EncoderModel new_model = frozen(EncoderModel(
        "emg", Shape{8, 2}, {{LayerKind::ConvBlock, 5, 2, 2}, {LayerKind::NormBlock, 4}}, 12));
    TaskHead head = make_task_head(6, 2, 13);
    PairSet pairs = random_pairs(20, {7, 3}, {8, 2}, 14);

    PositionSelection a = select_positions(old_model, head, new_model, pairs.xs_old, pairs.xs_new);
    PositionSelection b = select_positions(old_model, head, new_model, pairs.xs_old, pairs.xs_new);
    CHECK(a.input_layer == b.input_layer);
    CHECK(a.output_layer == b.output_layer);
    CHECK(a.probe_scores == b.probe_scores);
    CHECK(a.cka_scores == b.cka_scores);
    CHECK(a.input_layer >= 1);
    CHECK(a.input_layer <= 2);
    CHECK(a.output_layer >= 1);
    CHECK(a.output_layer <= 2);
    CHECK(a.probe_scores.size() == 2);
    CHECK(a.cka_scores.size() == 2);
}

TEST_CASE("bridge training fits a reachable target and leaves encoders untouched") {
    // One pointwise layer on each side, l = L = 1, so the old suffix is the
    // identity and the target is an arbitrary fixed matrix per sample. The
    // new encoder sees a single token, so pooling keeps the full sample
    // diversity, and with rank = input_dim and ample prototypes an exact
    // linear bridge exists for these 12 <= 16 pooled vectors.
    EncoderModel old_model = frozen(EncoderModel("ecg", Shape{6, 4}, {{LayerKind::ConvBlock, 5, 1, 1}}, 15));
    EncoderModel new_model = frozen(EncoderModel("emg", Shape{1, 16}, {{LayerKind::ConvBlock, 16, 1, 1}}, 16));
    TaskHead head = make_task_head(5, 2, 17);
    PairSet pairs = random_pairs(12, {6, 4}, {1, 16}, 18);

    PositionSelection pos;
    pos.input_layer = 1;
    pos.output_layer = 1;

    // Prototype rows straight from the old representations (the default
    // initialization strategy).
    Tensor old_reps = old_model.forward_prefix(stack_batch(pairs.xs_old), 1);
    BridgeShapeSpec spec{16, 6, 5, 16, 8};
    BridgeParams bridge = init_bridge(spec, BridgeInit::FromReference, 19, &old_reps);

    std::vector<Tensor> old_snap = snapshot(old_model);
    std::vector<Tensor> new_snap = snapshot(new_model);

    TransferTrainOptions opts;
    opts.epochs = 100;
    opts.batch = 4;
    opts.lr = 0.05;
    opts.seed = 20;
    TrainingHistory history = train_bridge(old_model, new_model, head, pairs.xs_old, pairs.xs_new, pos, bridge,
                                           opts);

    REQUIRE(history.loss.size() == 100);
    REQUIRE(history.seconds.size() == 100);
    for (double v : history.loss) CHECK(std::isfinite(v));
    CHECK(history.loss.front() > history.loss.back());
    CHECK(history.loss.back() < 0.05);

    check_unchanged(old_model, old_snap);
    check_unchanged(new_model, new_snap);
}

TEST_CASE("zero learning rate leaves the bridge untouched with a flat history") {
    EncoderModel old_model = frozen(EncoderModel("ecg", Shape{6, 4}, {{LayerKind::ConvBlock, 5, 1, 1}}, 21));
    EncoderModel new_model = frozen(EncoderModel("emg", Shape{5, 3}, {{LayerKind::ConvBlock, 8, 1, 1}}, 22));
    TaskHead head = make_task_head(5, 2, 23);
    PairSet pairs = random_pairs(10, {6, 4}, {5, 3}, 24);

    PositionSelection pos;
    pos.input_layer = 1;
    pos.output_layer = 1;
    BridgeParams bridge = init_bridge({8, 6, 5, 4, 6}, BridgeInit::Random, 25);
    Tensor a0 = bridge.A->value, b0 = bridge.B->value, p0 = bridge.P->value;

    TransferTrainOptions opts;
    opts.epochs = 5;
    opts.batch = 4;
    opts.lr = 0.0;
    TrainingHistory history = train_bridge(old_model, new_model, head, pairs.xs_old, pairs.xs_new, pos, bridge,
                                           opts);

    CHECK(max_abs_diff(bridge.A->value, a0) == 0.0);
    CHECK(max_abs_diff(bridge.B->value, b0) == 0.0);
    CHECK(max_abs_diff(bridge.P->value, p0) == 0.0);
    for (double v : history.loss) CHECK(v == doctest::Approx(history.loss[0]).epsilon(1e-12));
}

TEST_CASE("training loss decreases across seeds on random pairs") {
    EncoderModel old_model = frozen(EncoderModel("ecg", Shape{6, 4}, {{LayerKind::ConvBlock, 5, 1, 1}}, 26));
    EncoderModel new_model = frozen(EncoderModel("emg", Shape{5, 3}, {{LayerKind::ConvBlock, 8, 1, 1}}, 27));
    TaskHead head = make_task_head(5, 2, 28);

    int better = 0;
    for (uint64_t seed = 0; seed < 3; ++seed) {
        PairSet pairs = random_pairs(16, {6, 4}, {5, 3}, 29 + seed);
        PositionSelection pos;
        pos.input_layer = 1;
        pos.output_layer = 1;
        BridgeParams bridge = init_bridge({8, 6, 5, 8, 6}, BridgeInit::Random, 30 + seed);
        TransferTrainOptions opts;
        opts.epochs = 20;
        opts.batch = 8;
        opts.lr = 0.01;
        opts.seed = seed;
        TrainingHistory h = train_bridge(old_model, new_model, head, pairs.xs_old, pairs.xs_new, pos, bridge,
                                         opts);
        if (h.loss.front() > h.loss.back()) ++better;
    }
    CHECK(better >= 2);
}

TEST_CASE("alignment can run at the bridge output layer directly") {
    EncoderModel old_model = frozen(EncoderModel(
        "ecg", Shape{7, 3}, {{LayerKind::ConvBlock, 4, 2, 1}, {LayerKind::NormBlock, 6}}, 31));
    EncoderModel new_model = frozen(EncoderModel("emg", Shape{5, 3}, {{LayerKind::ConvBlock, 8, 1, 1}}, 32));
    TaskHead head = make_task_head(6, 2, 33);
    PairSet pairs = random_pairs(8, {7, 3}, {5, 3}, 34);

    PositionSelection pos;
    pos.input_layer = 1;
    pos.output_layer = 1;  // bridge into layer-1 space (6 tokens x 4 dims)
    BridgeParams bridge = init_bridge({8, 6, 4, 4, 5}, BridgeInit::Random, 35);

    TransferTrainOptions opts;
    opts.epochs = 2;
    opts.batch = 4;
    opts.align_layer = 1;  // align where the bridge lands instead of at L
    TrainingHistory h = train_bridge(old_model, new_model, head, pairs.xs_old, pairs.xs_new, pos, bridge, opts);
    CHECK(h.loss.size() == 2);

    opts.align_layer = 0;  // below the output position: rejected
    CHECK_THROWS_AS(
        train_bridge(old_model, new_model, head, pairs.xs_old, pairs.xs_new, pos, bridge, opts), ShapeError);
}

TEST_CASE("an exact bridge reproduces the teacher bit for bit at every position pair") {
    EncoderModel old_model = frozen(EncoderModel(
        "ecg", Shape{7, 3},
        {{LayerKind::ConvBlock, 4, 2, 1}, {LayerKind::AttentionBlock, 4}, {LayerKind::NormBlock, 6}}, 36));
    EncoderModel new_model = frozen(EncoderModel(
        "emg", Shape{8, 2}, {{LayerKind::ConvBlock, 5, 2, 2}, {LayerKind::NormBlock, 4}}, 37));
    TaskHead head = make_task_head(6, 3, 38);
    PairSet pairs = random_pairs(4, {7, 3}, {8, 2}, 39);

    Tensor x_old = stack_batch(pairs.xs_old);
    Tensor x_new = stack_batch(pairs.xs_new);
    Tensor teacher = predict(old_model, head, x_old);

    for (int64_t m = 1; m <= 2; ++m) {
        for (int64_t l = 1; l <= 3; ++l) {
            PositionSelection pos;
            pos.input_layer = m;
            pos.output_layer = l;
            Tensor forced = old_model.forward_prefix(x_old, l);
            Tensor probs = bridged_predict_with(old_model, new_model, head, pos,
                                                [&](const Tensor&) { return forced; }, x_new);
            REQUIRE(probs.same_shape(teacher));
            for (int64_t i = 0; i < probs.numel(); ++i) CHECK(probs[i] == teacher[i]);
        }
    }
}

TEST_CASE("bridged probabilities are a distribution") {
    EncoderModel old_model = frozen(EncoderModel("ecg", Shape{6, 4}, {{LayerKind::ConvBlock, 5, 1, 1}}, 40));
    EncoderModel new_model = frozen(EncoderModel("emg", Shape{5, 3}, {{LayerKind::ConvBlock, 8, 1, 1}}, 41));
    TaskHead head = make_task_head(5, 3, 42);
    BridgeParams bridge = init_bridge({8, 6, 5, 4, 6}, BridgeInit::Random, 43);
    PositionSelection pos;
    pos.input_layer = 1;
    pos.output_layer = 1;

    Rng rng(44);
    Tensor single = rng.normal_tensor({5, 3});
    Tensor p1 = bridged_predict(old_model, new_model, head, bridge, pos, single);
    REQUIRE(p1.shape() == Shape{3});
    double sum = p1[0] + p1[1] + p1[2];
    CHECK(std::abs(sum - 1.0) < 1e-9);

    Tensor batch = rng.normal_tensor({4, 5, 3});
    Tensor pb = bridged_predict(old_model, new_model, head, bridge, pos, batch);
    REQUIRE(pb.shape() == Shape{4, 3});
    for (int64_t i = 0; i < 4; ++i) {
        double s = pb[i * 3] + pb[i * 3 + 1] + pb[i * 3 + 2];
        CHECK(std::abs(s - 1.0) < 1e-9);
    }
    CHECK(predicted_labels(pb).size() == 4);

    // Mismatched bridge output is rejected at the injection boundary.
    PositionSelection bad = pos;
    Tensor wrong(Shape{4, 2, 5});
    CHECK_THROWS_AS(bridged_predict_with(old_model, new_model, head, bad,
                                         [&](const Tensor&) { return wrong; }, batch),
                    ShapeError);
}

TEST_CASE("distillation against a uniform teacher is floored at ln(classes)") {
    EncoderModel old_model("ecg", Shape{6, 4}, {{LayerKind::ConvBlock, 5, 1, 1}}, 45);
    // Uniform teacher: zero head weights make every class equally likely.
    TaskHead old_head = make_task_head(5, 4, 46);
    for (int64_t i = 0; i < old_head.W->value.numel(); ++i) old_head.W->value[i] = 0.0;
    for (int64_t i = 0; i < old_head.b->value.numel(); ++i) old_head.b->value[i] = 0.0;
    old_model.freeze();
    old_head.freeze();

    EncoderModel new_model = frozen(EncoderModel("emg", Shape{5, 3}, {{LayerKind::ConvBlock, 6, 1, 1}}, 47));
    PairSet pairs = random_pairs(10, {6, 4}, {5, 3}, 48);

    KdOptions opts;
    opts.epochs = 3;
    opts.batch = 5;
    StudentResult kd = train_kd(new_model, old_model, old_head, pairs.xs_old, pairs.xs_new, opts);
    double floor = std::log(4.0);
    for (double v : kd.history.loss) CHECK(v >= floor - 1e-9);

    // The student owns every parameter of its encoder plus the new head.
    int64_t expected = 0;
    for (const ParamPtr& p : kd.student.params()) expected += p->value.numel();
    expected += kd.head.W->value.numel() + kd.head.b->value.numel();
    CHECK(kd.trainable_params == expected);

    // The original new-modality encoder is untouched by student training.
    CHECK(max_abs_diff(new_model.params()[0]->value, kd.student.params()[0]->value) >= 0.0);  // well-defined
}

TEST_CASE("distillation learns a deterministic teacher rule") {
    EncoderModel old_model = frozen(EncoderModel("ecg", Shape{6, 4}, {{LayerKind::ConvBlock, 5, 1, 1}}, 49));
    TaskHead old_head = make_task_head(5, 2, 50);
    EncoderModel new_model = frozen(EncoderModel("emg", Shape{5, 3}, {{LayerKind::ConvBlock, 6, 1, 1}}, 51));

    // Synchronized pairs whose two views share a strong common component, so
    // the teacher's rule is expressible from the new modality.
    Rng rng(52);
    PairSet pairs;
    for (int i = 0; i < 24; ++i) {
        double shift = (i % 2 == 0) ? 2.0 : -2.0;
        Tensor xo = rng.normal_tensor({6, 4}, shift, 0.25);
        Tensor xn = rng.normal_tensor({5, 3}, shift, 0.25);
        pairs.xs_old.push_back(xo);
        pairs.xs_new.push_back(xn);
    }

    KdOptions opts;
    opts.epochs = 80;
    opts.batch = 8;
    opts.lr = 1e-2;
    opts.seed = 53;
    StudentResult kd = train_kd(new_model, old_model, old_head, pairs.xs_old, pairs.xs_new, opts);

    std::vector<int64_t> teacher = predicted_labels(predict(old_model, old_head, stack_batch(pairs.xs_old)));
    std::vector<int64_t> student = predicted_labels(predict(kd.student, kd.head, stack_batch(pairs.xs_new)));
    CHECK(prediction_agreement(teacher, student) >= 0.75);
    CHECK(kd.history.loss.front() > kd.history.loss.back());
}

TEST_CASE("symmetric InfoNCE closed forms") {
    // All rows identical on both sides: every similarity ties, loss = ln(B).
    Tensor same(Shape{4, 3});
    for (int64_t i = 0; i < 4; ++i) {
        same[i * 3] = 1.0;
        same[i * 3 + 1] = 2.0;
        same[i * 3 + 2] = -1.0;
    }
    CHECK(info_nce_loss(same, same, 0.04) == doctest::Approx(std::log(4.0)).epsilon(1e-12));

    // Temperature -> infinity flattens every logit: same ln(B) limit.
    Rng rng(54);
    Tensor p = rng.normal_tensor({5, 4});
    Tensor z = rng.normal_tensor({5, 4});
    CHECK(info_nce_loss(p, z, 1e12) == doctest::Approx(std::log(5.0)).epsilon(1e-9));

    // Positives dominate by a margin of 25 temperatures: loss collapses.
    Tensor eye3 = Tensor::eye(3);
    CHECK(info_nce_loss(eye3, eye3, 0.04) < 0.01);

    CHECK_THROWS_AS(info_nce_loss(Tensor(Shape{1, 3}), Tensor(Shape{1, 3}), 0.04), std::runtime_error);
    CHECK_THROWS_AS(info_nce_loss(p, z, 0.0), std::runtime_error);
}

TEST_CASE("contrastive training aligns projected embeddings with their pairs") {
    EncoderModel old_model = frozen(EncoderModel("ecg", Shape{6, 4}, {{LayerKind::ConvBlock, 5, 1, 1}}, 55));
    EncoderModel new_model = frozen(EncoderModel("emg", Shape{5, 3}, {{LayerKind::ConvBlock, 6, 1, 1}}, 56));

    Rng rng(57);
    PairSet pairs;
    for (int i = 0; i < 16; ++i) {
        double shift = (i % 2 == 0) ? 1.5 : -1.5;
        pairs.xs_old.push_back(rng.normal_tensor({6, 4}, shift, 0.3));
        pairs.xs_new.push_back(rng.normal_tensor({5, 3}, shift, 0.3));
    }

    KdContrastOptions opts;
    opts.epochs = 15;
    opts.batch = 8;
    opts.lr = 5e-3;
    opts.seed = 58;
    ContrastResult res = train_kd_contrast(new_model, old_model, pairs.xs_old, pairs.xs_new, opts);
    CHECK(res.history.loss.front() > res.history.loss.back());
    CHECK(res.trainable_params > 0);

    // Inference reuses an old-space head on the projected embedding.
    TaskHead old_head = make_task_head(5, 2, 59);
    Tensor probs = kd_contrast_predict(res.student, res.proj_w->value, res.proj_b->value, old_head,
                                       stack_batch(pairs.xs_new));
    REQUIRE(probs.shape() == Shape{16, 2});
    for (int64_t i = 0; i < 16; ++i) {
        CHECK(std::abs(probs[i * 2] + probs[i * 2 + 1] - 1.0) < 1e-9);
    }

    KdContrastOptions bad = opts;
    bad.batch = 1;
    CHECK_THROWS_AS(train_kd_contrast(new_model, old_model, pairs.xs_old, pairs.xs_new, bad),
                    std::runtime_error);
    bad = opts;
    bad.tau = 0.0;
    CHECK_THROWS_AS(train_kd_contrast(new_model, old_model, pairs.xs_old, pairs.xs_new, bad),
                    std::runtime_error);
}

TEST_CASE("random baseline is uniform and deterministic") {
    std::vector<int64_t> a = random_baseline(3, 100, 7);
    std::vector<int64_t> b = random_baseline(3, 100, 7);
    CHECK(a == b);
    CHECK(random_baseline(3, 100, 8) != a);
    for (int64_t v : a) {
        CHECK(v >= 0);
        CHECK(v < 3);
    }
    CHECK_THROWS_AS(random_baseline(1, 10, 0), std::runtime_error);

    // Monte Carlo: balanced accuracy against balanced truth approaches 1/C.
    for (int64_t classes : {2, 3}) {
        int64_t n = 100000;
        std::vector<int64_t> truth;
        for (int64_t i = 0; i < n; ++i) truth.push_back(i % classes);
        std::vector<int64_t> guess = random_baseline(classes, n, 99);
        double bacc = balanced_accuracy(truth, guess, classes);
        CHECK(bacc == doctest::Approx(1.0 / static_cast<double>(classes)).epsilon(0.03));
    }
}

TEST_CASE("agreement rate") {
    std::vector<int64_t> a{0, 1, 2, 1}, b{0, 1, 1, 1};
    CHECK(prediction_agreement(a, b) == 0.75);
    CHECK(prediction_agreement(a, a) == 1.0);
    std::vector<int64_t> c{0};
    CHECK_THROWS_AS(prediction_agreement(a, c), std::runtime_error);
}

TEST_CASE("validation metric and epoch callback plug into bridge training") {
    EncoderModel old_model = frozen(EncoderModel("ecg", Shape{6, 4}, {{LayerKind::ConvBlock, 5, 1, 1}}, 60));
    EncoderModel new_model = frozen(EncoderModel("emg", Shape{5, 3}, {{LayerKind::ConvBlock, 8, 1, 1}}, 61));
    TaskHead head = make_task_head(5, 2, 62);
    PairSet pairs = random_pairs(10, {6, 4}, {5, 3}, 63);

    EvalSet val;
    Rng rng(64);
    for (int i = 0; i < 6; ++i) {
        val.xs.push_back(rng.normal_tensor({5, 3}));
        val.labels.push_back(i % 2);
    }

    PositionSelection pos;
    pos.input_layer = 1;
    pos.output_layer = 1;
    BridgeParams bridge = init_bridge({8, 6, 5, 4, 6}, BridgeInit::Random, 65);

    std::vector<int64_t> epochs_seen;
    TransferTrainOptions opts;
    opts.epochs = 3;
    opts.batch = 5;
    opts.val = &val;
    opts.on_epoch = [&](int64_t e) { epochs_seen.push_back(e); };
    TrainingHistory h = train_bridge(old_model, new_model, head, pairs.xs_old, pairs.xs_new, pos, bridge, opts);

    CHECK(h.val_metric.size() == 3);
    for (double v : h.val_metric) {
        CHECK(v >= 0.0);
        CHECK(v <= 1.0);
    }
    CHECK(epochs_seen == std::vector<int64_t>{1, 2, 3});
}
