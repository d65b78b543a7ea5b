#include <catch2/catch_amalgamated.hpp>

#include "support.hpp"

using namespace kdnli;
using namespace kdnli::testing;

TEST_CASE("fine-tuning memorises a small dataset") {
    auto model = tiny_model<float>(3, 8);
    const auto data = gen_synthetic_nli(5, 20, 10);
    TrainOptions options;
    options.seed = 1;
    const auto log = finetune_nli(model, data, hyper(4, 200, 1e-2), options);
    CHECK(accuracy(model, data) >= 0.99);
    CHECK(log.epochs.back().mean_loss < log.epochs.front().mean_loss);
}

TEST_CASE("zero learning rate keeps the epoch loss constant") {
    auto model = tiny_model<double>(2, 8);
    const auto data = gen_synthetic_nli(6, 12, 10);
    const auto log = finetune_nli(model, data, hyper(4, 3, 0.0));
    REQUIRE(log.epochs.size() == 3);
    CHECK(log.epochs[1].mean_loss == Catch::Approx(log.epochs[0].mean_loss).epsilon(1e-12));
    CHECK(log.epochs[2].mean_loss == Catch::Approx(log.epochs[0].mean_loss).epsilon(1e-12));
}

TEST_CASE("step and update counts follow batch size and accumulation") {
    auto model = tiny_model<float>(2, 8);
    const auto data = gen_synthetic_nli(7, 10, 10);
    std::size_t updates = 0;
    TrainOptions options;
    options.on_step = [&](const StepRecord& r) { updates += r.updated ? 1 : 0; };
    const auto log = finetune_nli(model, data, hyper(3, 2, 1e-3, 3), options);
    // 4 micro-batches per epoch (3+3+3+1); one full accumulation plus one flush.
    CHECK(log.step_losses.size() == 8);
    CHECK(updates == 2);
    CHECK(log.optimizer_steps == 4);
}

TEST_CASE("training is deterministic under a seed") {
    const auto data = gen_synthetic_nli(8, 16, 10);
    auto run = [&](std::uint64_t seed) {
        auto model = tiny_model<float>(4, 8);
        TrainOptions options;
        options.seed = seed;
        return finetune_nli(model, data, hyper(4, 2, 1e-3), options).step_losses;
    };
    CHECK(run(1) == run(1));
    CHECK(run(1) != run(2));
}

TEST_CASE("swapping premise and hypothesis changes the prediction") {
    // The difference half of the features is antisymmetric, so an untrained
    // model already separates (a, b) from (b, a).
    const auto model = tiny_model<double>(9, 8);
    const auto ab = model.predict_pair("the dog runs in the park", "the animal never runs");
    const auto ba = model.predict_pair("the animal never runs", "the dog runs in the park");
    CHECK(ab.probabilities != ba.probabilities);
}

TEST_CASE("training rejects an empty dataset") {
    auto model = tiny_model<float>(1, 8);
    CHECK_THROWS_AS(finetune_nli(model, {}, hyper(4, 1, 1e-3)), DataError);
    CHECK_THROWS_AS(accuracy(model, {}), DataError);
}

TEST_CASE("predict_all returns one prediction per example") {
    const auto model = tiny_model<float>(1, 8);
    const auto data = gen_synthetic_nli(3, 9, 10);
    const auto preds = predict_all(model, data);
    REQUIRE(preds.size() == data.size());
    for (const auto& p : preds) {
        double total = 0.0;
        for (const double v : p.probabilities) total += v;
        CHECK(total == Catch::Approx(1.0).epsilon(1e-5));
    }
}
