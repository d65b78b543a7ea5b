#ifndef KDNLI_TRAIN_HPP_
#define KDNLI_TRAIN_HPP_

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <numeric>
#include <ostream>
#include <random>
#include <span>
#include <vector>

#include "kdnli/autodiff.hpp"
#include "kdnli/data.hpp"
#include "kdnli/error.hpp"
#include "kdnli/head.hpp"
#include "kdnli/optim.hpp"

namespace kdnli {

struct StepRecord {
    std::size_t epoch = 0;
    std::size_t micro_batch = 0;
    std::size_t examples = 0;
    double loss = 0.0;
    bool updated = false;  // an optimizer update was applied after this micro-batch
};

struct EpochRecord {
    std::size_t epoch = 0;
    double mean_loss = 0.0;
    double accuracy = 0.0;  // training accuracy under the weights seen during the epoch
};

struct TrainingLog {
    std::vector<double> step_losses;
    std::vector<EpochRecord> epochs;
    std::uint64_t optimizer_steps = 0;
};

struct TrainOptions {
    std::uint64_t seed = 0;
    std::function<void(const StepRecord&)> on_step;
    std::ostream* progress = nullptr;
};

namespace detail {

/// Mini-batch loop shared by every classifier fine-tuning pipeline.
/// `prepare` maps each raw mini-batch to the examples actually trained on.
template <class T, class Prepare>
TrainingLog train_classifier(NliModel<T>& model, const std::vector<NliExample>& dataset,
                             const TrainingHyperParams& hyper, const TrainOptions& options, Prepare prepare) {
    if (dataset.empty()) throw DataError("training dataset is empty");
    hyper.validate();
    model.check_compatible();

    AdamW<T> optimizer(model.params(), hyper);
    std::mt19937_64 rng(options.seed);
    std::vector<std::size_t> order(dataset.size());
    std::iota(order.begin(), order.end(), std::size_t{0});

    TrainingLog log;
    for (std::size_t epoch = 0; epoch < hyper.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        double loss_sum = 0.0;
        std::size_t correct = 0;
        std::size_t micro = 0;
        for (std::size_t start = 0; start < order.size(); start += hyper.batch_size, ++micro) {
            const std::size_t end = std::min(order.size(), start + hyper.batch_size);
            std::vector<NliExample> raw;
            raw.reserve(end - start);
            for (std::size_t i = start; i < end; ++i) raw.push_back(dataset[order[i]]);
            const std::vector<NliExample> batch = prepare(std::move(raw));

            std::vector<Tensor<T>> terms;
            terms.reserve(batch.size());
            for (const auto& ex : batch) {
                const auto probs = model.forward(ex.premise, ex.hypothesis);
                if (to_prediction(probs).predicted_label == ex.label) ++correct;
                terms.push_back(cross_entropy(probs, static_cast<std::size_t>(ex.label)));
            }
            const auto loss = scale(add_n(terms), T(1) / T(batch.size()));
            backward(loss);
            const bool updated = optimizer.accumulate();

            const double value = double(loss.item());
            log.step_losses.push_back(value);
            loss_sum += value * double(batch.size());
            if (options.on_step) options.on_step({epoch, micro, batch.size(), value, updated});
        }
        optimizer.flush();
        const EpochRecord rec{epoch, loss_sum / double(dataset.size()), double(correct) / double(dataset.size())};
        log.epochs.push_back(rec);
        if (options.progress) {
            *options.progress << "epoch " << epoch + 1 << "/" << hyper.epochs << " loss " << rec.mean_loss
                              << " train_acc " << rec.accuracy << "\n";
        }
    }
    log.optimizer_steps = optimizer.state().step_count;
    return log;
}

}  // namespace detail

/// Cross-entropy fine-tuning of encoder and head together.
template <class T>
TrainingLog finetune_nli(NliModel<T>& model, const std::vector<NliExample>& dataset,
                         const TrainingHyperParams& hyper, const TrainOptions& options = {}) {
    return detail::train_classifier(model, dataset, hyper, options,
                                    [](std::vector<NliExample> batch) { return batch; });
}

template <class T>
std::vector<NliPrediction> predict_all(const NliModel<T>& model, const std::vector<NliExample>& data) {
    std::vector<NliPrediction> out;
    out.reserve(data.size());
    for (const auto& ex : data) out.push_back(model.predict_pair(ex.premise, ex.hypothesis));
    return out;
}

template <class T>
double accuracy(const NliModel<T>& model, const std::vector<NliExample>& data) {
    if (data.empty()) throw DataError("accuracy on empty dataset");
    std::size_t correct = 0;
    for (const auto& ex : data) {
        if (model.predict_pair(ex.premise, ex.hypothesis).predicted_label == ex.label) ++correct;
    }
    return double(correct) / double(data.size());
}

}  // namespace kdnli

#endif  // KDNLI_TRAIN_HPP_
