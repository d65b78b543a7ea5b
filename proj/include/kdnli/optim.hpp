#ifndef KDNLI_OPTIM_HPP_
#define KDNLI_OPTIM_HPP_

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "kdnli/autodiff.hpp"
#include "kdnli/error.hpp"

namespace kdnli {

/// One training regime's hyper-parameters. Field names mirror the keys of the
/// configuration file.
struct TrainingHyperParams {
    std::size_t batch_size = 8;
    std::size_t max_sentence_length = 256;  // characters
    std::size_t max_tokens_length = 128;    // tokens, including BOS/EOS
    std::size_t epochs = 1;
    double learning_rate = 2e-5;
    double epsilon = 1e-8;
    double weight_decay = 0.0;
    std::size_t accumulation_step = 1;

    void validate() const {
        if (batch_size == 0 || max_sentence_length == 0 || max_tokens_length == 0 || epochs == 0 ||
            accumulation_step == 0) {
            throw ConfigError("batch_size, lengths, epochs and accumulation_step must be positive");
        }
        if (!(learning_rate >= 0.0) || !(epsilon > 0.0) || !(weight_decay >= 0.0)) {
            throw ConfigError("learning_rate and weight_decay must be non-negative, epsilon positive");
        }
        if (max_tokens_length > max_sentence_length) {
            throw ConfigError("max_tokens_length exceeds max_sentence_length");
        }
    }

    bool operator==(const TrainingHyperParams&) const = default;
};

/// Full-scale settings for the three training regimes.
namespace presets {

inline TrainingHyperParams source_nli() {
    return {.batch_size = 8, .max_sentence_length = 256, .max_tokens_length = 128, .epochs = 1,
            .learning_rate = 2e-5, .epsilon = 1e-8, .weight_decay = 0.0, .accumulation_step = 8};
}

inline TrainingHyperParams distillation() {
    return {.batch_size = 24, .max_sentence_length = 256, .max_tokens_length = 128, .epochs = 6,
            .learning_rate = 2e-5, .epsilon = 1e-6, .weight_decay = 1e-2, .accumulation_step = 4};
}

inline TrainingHyperParams translated_nli() {
    return {.batch_size = 8, .max_sentence_length = 256, .max_tokens_length = 256, .epochs = 5,
            .learning_rate = 4e-5, .epsilon = 1e-16, .weight_decay = 1e-4, .accumulation_step = 4};
}

}  // namespace presets

template <class T>
struct NamedParam {
    std::string name;
    Tensor<T> tensor;
};

template <class T>
using ParamList = std::vector<NamedParam<T>>;

/// Per-parameter Adam moments plus the global step counter.
template <class T>
struct AdamState {
    std::uint64_t step_count = 0;
    std::vector<std::vector<T>> first_moment;
    std::vector<std::vector<T>> second_moment;
};

/// Adam with decoupled weight decay and gradient accumulation.
///
/// Each backward pass adds into the parameters' gradient buffers; call
/// accumulate() once per micro-batch. When accumulation_step micro-batches
/// have been collected the averaged gradient drives one update and the
/// buffers are cleared. flush() applies a pending partial accumulation,
/// averaging over the micro-batches actually collected.
template <class T>
class AdamW {
public:
    static constexpr double kBeta1 = 0.9;
    static constexpr double kBeta2 = 0.999;

    AdamW(ParamList<T> params, const TrainingHyperParams& hyper) : params_(std::move(params)), hyper_(hyper) {
        hyper_.validate();
        for (const auto& p : params_) {
            state_.first_moment.emplace_back(p.tensor.size(), T{0});
            state_.second_moment.emplace_back(p.tensor.size(), T{0});
        }
    }

    /// Records one finished micro-batch; returns true when an update was applied.
    bool accumulate() {
        ++pending_;
        if (pending_ < hyper_.accumulation_step) {
            return false;
        }
        apply(pending_);
        return true;
    }

    bool flush() {
        if (pending_ == 0) {
            return false;
        }
        apply(pending_);
        return true;
    }

    /// Applies the update on gradients accumulated over `micro_batches` passes.
    void step(std::size_t micro_batches) { apply(micro_batches); }

    void zero_grad() {
        for (auto& p : params_) {
            p.tensor.zero_grad();
        }
    }

    const AdamState<T>& state() const { return state_; }
    std::size_t pending() const { return pending_; }
    const ParamList<T>& params() const { return params_; }

private:
    void apply(std::size_t micro_batches) {
        for (const auto& p : params_) {
            if (!p.tensor.has_grad()) {
                throw OptimizerStateError("parameter '" + p.name + "' has no gradient");
            }
        }
        ++state_.step_count;
        const double t = static_cast<double>(state_.step_count);
        const T bias1 = T(1.0 - std::pow(kBeta1, t));
        const T bias2 = T(1.0 - std::pow(kBeta2, t));
        const T lr = T(hyper_.learning_rate);
        const T eps = T(hyper_.epsilon);
        const T decay = T(1.0 - hyper_.learning_rate * hyper_.weight_decay);
        const T inv_acc = T(1) / T(micro_batches);
        const T b1 = T(kBeta1);
        const T b2 = T(kBeta2);
        for (std::size_t k = 0; k < params_.size(); ++k) {
            auto value = params_[k].tensor.mutable_data();
            auto grad = params_[k].tensor.mutable_grad();
            auto& m = state_.first_moment[k];
            auto& v = state_.second_moment[k];
            for (std::size_t i = 0; i < value.size(); ++i) {
                const T g = grad[i] * inv_acc;
                m[i] = b1 * m[i] + (T(1) - b1) * g;
                v[i] = b2 * v[i] + (T(1) - b2) * g * g;
                const T m_hat = m[i] / bias1;
                const T v_hat = v[i] / bias2;
                value[i] = value[i] * decay - lr * m_hat / (std::sqrt(v_hat) + eps);
                grad[i] = T{0};
            }
        }
        pending_ = 0;
    }

    ParamList<T> params_;
    TrainingHyperParams hyper_;
    AdamState<T> state_;
    std::size_t pending_ = 0;
};

}  // namespace kdnli

#endif  // KDNLI_OPTIM_HPP_
