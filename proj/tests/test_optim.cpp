#include <catch2/catch_amalgamated.hpp>

#include "support.hpp"

using namespace kdnli;
using kdnli::testing::random_tensor;
using Catch::Matchers::WithinAbs;

namespace {

TrainingHyperParams adam(double lr, double wd, double eps = 1e-8, std::size_t accumulation = 1) {
    return {.batch_size = 1, .max_sentence_length = 256, .max_tokens_length = 128, .epochs = 1,
            .learning_rate = lr, .epsilon = eps, .weight_decay = wd, .accumulation_step = accumulation};
}

/// Runs AdamW on a scalar parameter with a fixed gradient sequence.
double run_scalar(double start, const std::vector<double>& grads, const TrainingHyperParams& h) {
    auto p = Tensor<double>::scalar(start, true);
    AdamW<double> opt({{"p", p}}, h);
    for (const double g : grads) {
        p.mutable_grad()[0] = g;
        opt.step(1);
    }
    return p.item();
}

}  // namespace

TEST_CASE("single AdamW step against the hand-computed update") {
    // m = 0.05, v = 0.00025, bias-corrected 0.5 and 0.25: step = 0.1 * 0.5 / (0.5 + 1e-8).
    CHECK_THAT(run_scalar(1.0, {0.5}, adam(0.1, 0.0)), WithinAbs(0.9000000019999999, 1e-15));
    CHECK_THAT(run_scalar(1.0, {0.5}, adam(0.1, 0.01)), WithinAbs(0.8990000019999999, 1e-15));
}

TEST_CASE("multi-step AdamW against a reference recurrence") {
    // Reference values from an independent scalar implementation of the recurrence.
    CHECK_THAT(run_scalar(1.0, {0.5, -0.3}, adam(0.1, 0.01)), WithinAbs(0.878951198939775, 1e-14));
    CHECK_THAT(run_scalar(-2.0, {0.5, -0.3, 0.2}, adam(0.01, 0.1, 1e-6)), WithinAbs(-2.0093733159197282, 1e-14));
}

TEST_CASE("accumulating two micro-batches equals one step on the mean gradient") {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        auto a = random_tensor({5}, seed);
        auto b = a.clone(true);
        const auto g1 = random_tensor({5}, seed + 50, false);
        const auto g2 = random_tensor({5}, seed + 60, false);

        AdamW<double> accumulating({{"a", a}}, adam(0.01, 0.01, 1e-8, 2));
        backward(sum(mul(a, g1)));
        CHECK_FALSE(accumulating.accumulate());
        backward(sum(mul(a, g2)));
        CHECK(accumulating.accumulate());

        AdamW<double> direct({{"b", b}}, adam(0.01, 0.01));
        backward(sum(mul(b, scale(add(g1, g2), 0.5))));
        CHECK(direct.accumulate());

        for (std::size_t i = 0; i < 5; ++i) CHECK_THAT(a[i], WithinAbs(b[i], 1e-10));
        CHECK(accumulating.state().step_count == 1);
    }
}

TEST_CASE("flush applies a partial accumulation and is a no-op when nothing is pending") {
    auto p = Tensor<double>::scalar(1.0, true);
    AdamW<double> opt({{"p", p}}, adam(0.1, 0.0, 1e-8, 4));
    backward(scale(p, 0.5));
    CHECK_FALSE(opt.accumulate());
    CHECK(opt.pending() == 1);
    CHECK(opt.flush());
    CHECK_THAT(p.item(), WithinAbs(0.9000000019999999, 1e-15));
    CHECK_FALSE(opt.flush());
    CHECK(opt.state().step_count == 1);
}

TEST_CASE("a parameter without a gradient is an optimizer state error") {
    auto p = Tensor<double>::scalar(1.0, true);
    AdamW<double> opt({{"p", p}}, adam(0.1, 0.0));
    CHECK_THROWS_AS(opt.step(1), OptimizerStateError);
}

TEST_CASE("zero learning rate leaves parameters unchanged even with weight decay") {
    auto p = random_tensor({4}, 3);
    const auto before = std::vector<double>(p.data().begin(), p.data().end());
    AdamW<double> opt({{"p", p}}, adam(0.0, 0.5));
    backward(sum(mul(p, p)));
    opt.step(1);
    CHECK(std::vector<double>(p.data().begin(), p.data().end()) == before);
}

TEST_CASE("hyper-parameter validation") {
    auto h = adam(0.1, 0.0);
    h.batch_size = 0;
    CHECK_THROWS_AS(h.validate(), ConfigError);
    h = adam(0.1, 0.0);
    h.max_tokens_length = 300;
    CHECK_THROWS_AS(h.validate(), ConfigError);
    h = adam(-1.0, 0.0);
    CHECK_THROWS_AS(h.validate(), ConfigError);
}

TEST_CASE("regime presets carry the published values") {
    const auto nli = presets::source_nli();
    CHECK(nli == TrainingHyperParams{8, 256, 128, 1, 2e-5, 1e-8, 0.0, 8});
    const auto kd = presets::distillation();
    CHECK(kd == TrainingHyperParams{24, 256, 128, 6, 2e-5, 1e-6, 1e-2, 4});
    const auto mt = presets::translated_nli();
    CHECK(mt == TrainingHyperParams{8, 256, 256, 5, 4e-5, 1e-16, 1e-4, 4});
}
