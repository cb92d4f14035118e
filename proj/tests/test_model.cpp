#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <cstdio>

#include "biox/checkpoint.hpp"
#include "biox/model.hpp"

using namespace biox;

namespace {

// Small separable two-class signal set: the classes differ by a constant
// offset under i.i.d. noise.
void make_blob_signals(int64_t n, const Shape& input_shape, uint64_t seed, std::vector<Tensor>& xs,
                       std::vector<int64_t>& ys) {
    Rng rng(seed);
    for (int64_t i = 0; i < n; ++i) {
        int64_t label = i % 2;
        Tensor x = rng.normal_tensor(input_shape, label == 0 ? 0.5 : -0.5, 0.3);
        xs.push_back(std::move(x));
        ys.push_back(label);
    }
}

}  // namespace

TEST_CASE("layer shape derivation") {
    // Halving conv stack: token count 64 -> 32 -> 16 -> 8 at fixed dim 8.
    std::vector<LayerSpec> halving(3, LayerSpec{.kind = LayerKind::ConvBlock, .dim = 8, .kernel = 2, .stride = 2});
    EncoderModel conv("a", {64, 4}, halving, 1);
    auto shapes = conv.layer_shapes();
    REQUIRE(shapes.size() == 3);
    CHECK(shapes[0] == LayerShape{32, 8});
    CHECK(shapes[1] == LayerShape{16, 8});
    CHECK(shapes[2] == LayerShape{8, 8});

    // Homogeneous attention stack keeps (N, d) everywhere.
    std::vector<LayerSpec> attn(4, LayerSpec{.kind = LayerKind::AttentionBlock, .dim = 16});
    EncoderModel homo("b", {32, 16}, attn, 2);
    for (auto [n, d] : homo.layer_shapes()) {
        CHECK(n == 32);
        CHECK(d == 16);
    }

    CHECK_THROWS_AS(EncoderModel("c", {32, 4}, {}, 3), ShapeError);  // no layers
    CHECK_THROWS_AS(EncoderModel("c", {32, 4}, {{.kind = LayerKind::AttentionBlock, .dim = 8}}, 3),
                    ShapeError);  // attention dim must match incoming dim
    CHECK_THROWS_AS(EncoderModel("c", {3, 4}, {{.kind = LayerKind::ConvBlock, .dim = 8, .kernel = 5}}, 3),
                    ShapeError);  // kernel larger than signal
}

TEST_CASE("prefix/suffix composition identity") {
    EncoderModel model("ecg", {40, 3}, conv_stack_specs(12), 7);
    Rng rng(9);
    Tensor x = rng.normal_tensor({40, 3});
    Tensor full = model.full_forward(x);
    CHECK(full.shape() == Shape{model.layer_shapes().back().first, model.layer_shapes().back().second});

    // l = 0: the suffix alone is the whole network.
    CHECK(max_abs_diff(model.forward_suffix(x, 0), full) == 0.0);
    for (int64_t l = 1; l <= model.layer_count(); ++l) {
        Tensor h = model.forward_prefix(x, l);
        auto [n, d] = model.layer_shapes()[static_cast<size_t>(l - 1)];
        CHECK(h.shape() == Shape{n, d});
        CHECK(max_abs_diff(model.forward_suffix(h, l), full) == 0.0);
    }

    // l = layer_count leaves the injected representation untouched.
    CHECK(max_abs_diff(model.forward_suffix(full, model.layer_count()), full) == 0.0);

    CHECK_THROWS_AS(model.forward_prefix(x, 0), ShapeError);
    CHECK_THROWS_AS(model.forward_prefix(x, 5), ShapeError);
    CHECK_THROWS_AS(model.forward_suffix(x, 1), ShapeError);  // wrong injected shape
    CHECK_THROWS_AS(model.forward_prefix(rng.normal_tensor({40, 4}), 1), ShapeError);
}

TEST_CASE("first layer of a conv-first model is the conv block itself") {
    EncoderModel model("ppg", {20, 2}, conv_stack_specs(6), 11);
    Rng rng(12);
    Tensor x = rng.normal_tensor({20, 2});
    Tensor h1 = model.forward_prefix(x, 1);
    const Tensor& w = model.params()[0]->value;
    const Tensor& b = model.params()[1]->value;
    Tensor expect = ops::gelu(ops::conv1d(x, w, b, 2));
    CHECK(max_abs_diff(h1, expect) == 0.0);
}

TEST_CASE("injected perturbations shrink continuously") {
    EncoderModel model("eeg", {24, 2}, attention_stack_specs(8), 21);
    Rng rng(22);
    Tensor x = rng.normal_tensor({24, 2});
    Tensor h2 = model.forward_prefix(x, 2);
    Tensor base = model.forward_suffix(h2, 2);

    double prev = 1e300;
    for (double eps : {1e-1, 1e-3, 1e-5}) {
        Tensor bumped = h2;
        Rng noise(5);
        for (int64_t i = 0; i < bumped.numel(); ++i) bumped[i] += eps * noise.normal();
        double delta = max_abs_diff(model.forward_suffix(bumped, 2), base);
        CHECK(delta < prev);
        prev = delta;
    }
    CHECK(prev < 1e-3);
}

TEST_CASE("batched forward matches per-sample forward") {
    EncoderModel model("ecg", {32, 3}, conv_stack_specs(10), 31);
    Rng rng(32);
    std::vector<Tensor> xs;
    for (int i = 0; i < 3; ++i) xs.push_back(rng.normal_tensor({32, 3}));
    Tensor batch = stack_batch(xs);
    CHECK(batch.shape() == Shape{3, 32, 3});

    Tensor hb = model.full_forward(batch);
    auto [n, d] = model.layer_shapes().back();
    CHECK(hb.shape() == Shape{3, n, d});
    for (int64_t i = 0; i < 3; ++i) {
        Tensor single = model.full_forward(xs[static_cast<size_t>(i)]);
        for (int64_t j = 0; j < n * d; ++j) CHECK(hb[i * n * d + j] == single[j]);
    }

    CHECK_THROWS_AS(stack_batch(std::span<const Tensor>{}), ShapeError);
}

TEST_CASE("predict yields normalized probabilities") {
    EncoderModel model("ecg", {32, 3}, conv_stack_specs(10), 41);
    auto [n, d] = model.layer_shapes().back();
    (void)n;

    // All-zero head: exactly uniform probabilities.
    TaskHead zero_head = make_task_head(d, 4, 42);
    zero_head.W->value = Tensor(zero_head.W->value.shape());
    zero_head.b->value = Tensor(zero_head.b->value.shape());
    Rng rng(43);
    Tensor x = rng.normal_tensor({32, 3});
    Tensor uniform = predict(model, zero_head, x);
    for (int64_t c = 0; c < 4; ++c) CHECK(uniform[c] == doctest::Approx(0.25).epsilon(1e-12));

    TaskHead head = make_task_head(d, 4, 44);
    for (int trial = 0; trial < 5; ++trial) {
        Tensor probs = predict(model, head, rng.normal_tensor({32, 3}));
        double sum = 0.0;
        for (int64_t c = 0; c < 4; ++c) {
            CHECK(probs[c] >= 0.0);
            sum += probs[c];
        }
        CHECK(std::abs(sum - 1.0) < 1e-9);
    }

    TaskHead narrow = make_task_head(d + 1, 4, 45);
    CHECK_THROWS_AS(predict(model, narrow, x), ShapeError);
}

TEST_CASE("supervised pretraining learns and freezes") {
    EncoderModel model("ecg", {32, 2}, conv_stack_specs(8), 51);
    auto [n, d] = model.layer_shapes().back();
    (void)n;
    TaskHead head = make_task_head(d, 2, 52);

    std::vector<Tensor> xs;
    std::vector<int64_t> ys;
    make_blob_signals(40, {32, 2}, 53, xs, ys);

    // Zero epochs: values untouched.
    Tensor w_before = model.params()[0]->value;
    auto h0 = pretrain_supervised(model, head, xs, ys, {.epochs = 0, .seed = 1});
    CHECK(h0.epoch_loss.empty());
    CHECK(max_abs_diff(model.params()[0]->value, w_before) == 0.0);

    // Un-freeze for the real run (zero-epoch call already froze the stack).
    for (const ParamPtr& p : model.params()) p->trainable = true;
    head.W->trainable = head.b->trainable = true;

    auto hist = pretrain_supervised(model, head, xs, ys, {.epochs = 12, .lr = 5e-3, .batch = 8, .seed = 2});
    REQUIRE(hist.epoch_loss.size() == 12);
    CHECK(hist.epoch_loss.back() < hist.epoch_loss.front());
    CHECK(model.frozen());
    CHECK_FALSE(head.W->trainable);

    // The teacher separates its own training set.
    int64_t correct = 0;
    for (size_t i = 0; i < xs.size(); ++i) {
        Tensor probs = predict(model, head, xs[i]);
        int64_t arg = probs[0] >= probs[1] ? 0 : 1;
        correct += arg == ys[i] ? 1 : 0;
    }
    CHECK(static_cast<double>(correct) / static_cast<double>(xs.size()) > 0.9);

    // Re-running on the frozen stack leaves outputs bit-identical.
    Tensor before = predict(model, head, xs[0]);
    pretrain_supervised(model, head, xs, ys, {.epochs = 2, .lr = 5e-3, .batch = 8, .seed = 3});
    CHECK(max_abs_diff(predict(model, head, xs[0]), before) == 0.0);

    // Label outside the class range is rejected.
    std::vector<int64_t> bad_ys = ys;
    bad_ys[0] = 7;
    CHECK_THROWS_AS(pretrain_supervised(model, head, xs, bad_ys, {.epochs = 1}), std::runtime_error);
}

TEST_CASE("checkpoint round-trip is bit-exact") {
    EncoderModel model("ppg", {24, 2}, attention_stack_specs(6), 61);
    auto [n, d] = model.layer_shapes().back();
    (void)n;
    TaskHead head = make_task_head(d, 3, 62);
    model.freeze();
    head.freeze();

    std::string path = "ckpt_roundtrip.bin";
    save_model_checkpoint(path, model, &head);
    ModelCheckpoint loaded = load_model_checkpoint(path);

    CHECK(loaded.model.modality() == "ppg");
    CHECK(loaded.model.layer_count() == model.layer_count());
    CHECK(loaded.model.frozen());
    REQUIRE(loaded.head.has_value());
    CHECK(loaded.head->class_count() == 3);
    CHECK_FALSE(loaded.head->W->trainable);

    Rng rng(63);
    for (int trial = 0; trial < 3; ++trial) {
        Tensor x = rng.normal_tensor({24, 2});
        CHECK(max_abs_diff(loaded.model.full_forward(x), model.full_forward(x)) == 0.0);
        CHECK(max_abs_diff(predict(loaded.model, *loaded.head, x), predict(model, head, x)) == 0.0);
    }

    // Headless checkpoint.
    save_model_checkpoint(path, model);
    CHECK_FALSE(load_model_checkpoint(path).head.has_value());

    // Corrupt magic is rejected.
    {
        std::FILE* f = std::fopen(path.c_str(), "r+b");
        REQUIRE(f != nullptr);
        std::fputc('X', f);
        std::fclose(f);
    }
    CHECK_THROWS_AS(load_model_checkpoint(path), std::runtime_error);
    std::remove(path.c_str());
}

TEST_CASE("gradients reach bridge-side inputs through a frozen suffix") {
    // The training loop's core requirement: a trainable tensor injected at
    // layer l must receive gradient through the frozen layers above l.
    EncoderModel model("ecg", {32, 2}, conv_stack_specs(8), 71);
    model.freeze();
    auto [n2, d2] = model.layer_shapes()[1];
    auto injected = make_param(Rng(72).normal_tensor({n2, d2}), true, "injected");

    Tape tape;
    Var h = model.forward_suffix(tape, tape.leaf(injected), 2);
    Var loss = sum_all(h);
    auto touched = tape.backward(loss);
    REQUIRE(touched.size() == 1);
    CHECK(touched[0].get() == injected.get());
    double gnorm = 0.0;
    for (int64_t i = 0; i < injected->grad.numel(); ++i) gnorm += std::abs(injected->grad[i]);
    CHECK(gnorm > 0.0);
    for (const ParamPtr& p : model.params()) {
        CHECK(max_abs_diff(p->grad, Tensor(p->grad.shape())) == 0.0);
    }

    // And the analytic gradient through the frozen suffix is exact.
    std::vector<ParamPtr> ps{injected};
    double err = grad_check(
        [&](Tape& t) { return sum_all(model.forward_suffix(t, t.leaf(injected), 2)); }, ps);
    CHECK(err < 1e-4);
}
