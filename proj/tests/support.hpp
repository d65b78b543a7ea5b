#ifndef KDNLI_TESTS_SUPPORT_HPP_
#define KDNLI_TESTS_SUPPORT_HPP_

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <random>
#include <vector>

#include "kdnli.hpp"

namespace kdnli::testing {

inline std::vector<double> random_values(std::size_t n, std::uint64_t seed, double scale = 1.0) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, scale);
    std::vector<double> out(n);
    for (auto& x : out) x = normal(rng);
    return out;
}

inline Tensor<double> random_tensor(Shape shape, std::uint64_t seed, bool requires_grad = true, double scale = 1.0) {
    const auto n = shape_numel(shape);
    return Tensor<double>::from(std::move(shape), random_values(n, seed, scale), requires_grad);
}

/// Largest relative error between analytic and central-difference gradients
/// of `loss` over every element of `params`. Relative error uses
/// max(|a|, |n|, floor) as denominator so near-zero gradients compare on an
/// absolute scale.
inline double max_gradient_error(const std::function<Tensor<double>()>& loss, std::vector<Tensor<double>> params,
                                 double h = 1e-5, double floor = 1e-6) {
    for (auto& p : params) p.zero_grad();
    backward(loss());
    std::vector<std::vector<double>> analytic;
    for (auto& p : params) analytic.emplace_back(p.grad().begin(), p.grad().end());

    double worst = 0.0;
    NoGradGuard no_grad;
    for (std::size_t k = 0; k < params.size(); ++k) {
        auto values = params[k].mutable_data();
        for (std::size_t i = 0; i < values.size(); ++i) {
            const double saved = values[i];
            values[i] = saved + h;
            const double up = loss().item();
            values[i] = saved - h;
            const double down = loss().item();
            values[i] = saved;
            const double numeric = (up - down) / (2 * h);
            const double a = analytic[k][i];
            const double err = std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), floor});
            worst = std::max(worst, err);
        }
    }
    return worst;
}

inline Vocabulary synthetic_vocab() { return Vocabulary(SyntheticLexicon::standard().words()); }

inline EncoderConfig tiny_config(std::size_t vocab_size, std::size_t d = 8, std::size_t layers = 1,
                                 std::size_t heads = 2) {
    return {.vocab_size = vocab_size, .embed_dim = d, .num_layers = layers, .num_heads = heads, .ffn_dim = 2 * d,
            .max_tokens_length = 16};
}

template <class T>
NliModel<T> tiny_model(std::uint64_t seed, std::size_t d = 8, std::size_t layers = 1) {
    const auto vocab = synthetic_vocab();
    return {SentenceEncoder<T>(vocab, EncoderWeights<T>::init(tiny_config(vocab.size(), d, layers), seed)),
            HeadWeights<T>::init(HeadWeights<T>::desk_dims(d), seed + 1)};
}

inline TrainingHyperParams hyper(std::size_t batch, std::size_t epochs, double lr, std::size_t accumulation = 1,
                                 double weight_decay = 0.0) {
    return {.batch_size = batch, .max_sentence_length = 256, .max_tokens_length = 16, .epochs = epochs,
            .learning_rate = lr, .epsilon = 1e-8, .weight_decay = weight_decay, .accumulation_step = accumulation};
}

}  // namespace kdnli::testing

#endif  // KDNLI_TESTS_SUPPORT_HPP_
