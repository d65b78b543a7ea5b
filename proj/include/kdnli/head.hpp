#ifndef KDNLI_HEAD_HPP_
#define KDNLI_HEAD_HPP_

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "kdnli/autodiff.hpp"
#include "kdnli/encoder.hpp"
#include "kdnli/error.hpp"
#include "kdnli/optim.hpp"

namespace kdnli {

/// Class index order is fixed project-wide.
enum class NliLabel : std::uint8_t { Entailment = 0, Neutral = 1, Contradiction = 2 };

inline constexpr std::size_t kNliClasses = 3;

inline std::string_view to_string(NliLabel label) {
    switch (label) {
        case NliLabel::Entailment: return "entailment";
        case NliLabel::Neutral: return "neutral";
        case NliLabel::Contradiction: return "contradiction";
    }
    return "?";
}

inline std::optional<NliLabel> parse_nli_label(std::string_view s) {
    if (s == "entailment") return NliLabel::Entailment;
    if (s == "neutral") return NliLabel::Neutral;
    if (s == "contradiction") return NliLabel::Contradiction;
    return std::nullopt;
}

inline NliLabel nli_label_from_index(std::size_t index) {
    if (index >= kNliClasses) {
        throw LabelError("NLI class index " + std::to_string(index) + " out of range");
    }
    return static_cast<NliLabel>(index);
}

template <class T>
struct DenseLayer {
    Tensor<T> weight;  // [in, out]
    Tensor<T> bias;    // [out]
};

/// The six-layer GELU MLP on top of the combined features.
template <class T>
struct HeadWeights {
    std::vector<DenseLayer<T>> layers;

    /// 1536 -> 1024 -> 512 -> 256 -> 128 -> 64 -> 3.
    static std::vector<std::size_t> full_dims() { return {1536, 1024, 512, 256, 128, 64, 3}; }

    /// The full-size topology shrunk to a small embedding width: hidden widths
    /// of 2d/4, 2d/8, 2d/16, 2d/16, 2d/32, floored at 16. d = 64 gives
    /// 128 -> 32 -> 16 -> 16 -> 16 -> 16 -> 3. Narrower bottlenecks let the
    /// final GELU pin a class at a dead negative logit from initialisation.
    static std::vector<std::size_t> desk_dims(std::size_t embed_dim) {
        const std::size_t in = 2 * embed_dim;
        auto at_least = [](std::size_t v) { return std::max<std::size_t>(v, 16); };
        return {in, at_least(in / 4), at_least(in / 8), at_least(in / 16), at_least(in / 16), at_least(in / 32), 3};
    }

    /// He-normal weights and zero biases.
    static HeadWeights init(const std::vector<std::size_t>& dims, std::uint64_t seed) {
        if (dims.size() != 7 || dims.back() != 3) {
            throw ConfigError("head needs six layers ending in 3 outputs");
        }
        std::mt19937_64 rng(seed);
        HeadWeights w;
        for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
            std::normal_distribution<double> normal(0.0, std::sqrt(2.0 / double(dims[l])));
            std::vector<T> values(dims[l] * dims[l + 1]);
            for (auto& v : values) v = T(normal(rng));
            w.layers.push_back({Tensor<T>::from({dims[l], dims[l + 1]}, std::move(values), true),
                                Tensor<T>::zeros({dims[l + 1]}, true)});
        }
        return w;
    }

    static HeadWeights zeros(const std::vector<std::size_t>& dims) {
        HeadWeights w;
        for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
            w.layers.push_back({Tensor<T>::zeros({dims[l], dims[l + 1]}, true), Tensor<T>::zeros({dims[l + 1]}, true)});
        }
        return w;
    }

    std::vector<std::size_t> dims() const {
        std::vector<std::size_t> out;
        if (layers.empty()) return out;
        out.push_back(layers.front().weight.shape()[0]);
        for (const auto& L : layers) out.push_back(L.weight.shape()[1]);
        return out;
    }

    std::size_t input_dim() const { return layers.empty() ? 0 : layers.front().weight.shape()[0]; }

    ParamList<T> params(const std::string& prefix = "head.") const {
        ParamList<T> out;
        for (std::size_t l = 0; l < layers.size(); ++l) {
            out.push_back({prefix + "layers." + std::to_string(l) + ".weight", layers[l].weight});
            out.push_back({prefix + "layers." + std::to_string(l) + ".bias", layers[l].bias});
        }
        return out;
    }

    HeadWeights deep_copy(bool requires_grad = true) const {
        HeadWeights w;
        for (const auto& L : layers) w.layers.push_back({L.weight.clone(requires_grad), L.bias.clone(requires_grad)});
        return w;
    }

    void set_requires_grad(bool flag) {
        for (auto& p : params()) p.tensor.set_requires_grad(flag);
    }
};

/// [u * v ; u - v]: element-wise product then premise-minus-hypothesis difference.
template <class T>
Tensor<T> combine_features(const Tensor<T>& u, const Tensor<T>& v) {
    if (u.shape() != v.shape() || u.rank() != 1) {
        throw ShapeError("combine_features: embeddings of shape " + shape_str(u.shape()) + " and " +
                         shape_str(v.shape()));
    }
    return concat_cols<T>({mul(u, v), sub(u, v)});
}

template <class T>
Tensor<T> combine_features(const SentenceEmbedding<T>& u, const SentenceEmbedding<T>& v) {
    return combine_features(u.vector, v.vector);
}

/// Six affine+GELU layers (GELU after the last one too) followed by softmax.
template <class T>
Tensor<T> classify_probabilities(const Tensor<T>& features, const HeadWeights<T>& w) {
    if (features.size() != w.input_dim()) {
        throw ShapeError("classify: feature length " + std::to_string(features.size()) + " but head expects " +
                         std::to_string(w.input_dim()));
    }
    Tensor<T> x = features;
    for (const auto& L : w.layers) {
        x = gelu(add_row(matmul(x, L.weight), L.bias));
    }
    return softmax(x);
}

struct NliPrediction {
    std::array<double, kNliClasses> probabilities{};
    NliLabel predicted_label = NliLabel::Entailment;

    bool operator==(const NliPrediction&) const = default;
};

/// argmax with ties broken towards the lowest class index.
inline std::size_t argmax_lowest(std::span<const double> values) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < values.size(); ++i) {
        if (values[i] > values[best]) best = i;
    }
    return best;
}

template <class T>
NliPrediction to_prediction(const Tensor<T>& probabilities) {
    if (probabilities.size() != kNliClasses) {
        throw ShapeError("expected 3 class probabilities");
    }
    NliPrediction pred;
    for (std::size_t i = 0; i < kNliClasses; ++i) pred.probabilities[i] = double(probabilities[i]);
    pred.predicted_label = nli_label_from_index(argmax_lowest(pred.probabilities));
    return pred;
}

template <class T>
NliPrediction classify(const Tensor<T>& features, const HeadWeights<T>& w) {
    NoGradGuard no_grad;
    return to_prediction(classify_probabilities(features, w));
}

/// Siamese encoder plus classifier head.
template <class T>
struct NliModel {
    SentenceEncoder<T> encoder;
    HeadWeights<T> head;

    void check_compatible() const {
        if (head.input_dim() != 2 * encoder.embed_dim()) {
            throw ShapeError("head input " + std::to_string(head.input_dim()) + " != 2 x encoder dim " +
                             std::to_string(encoder.embed_dim()));
        }
    }

    /// Differentiable probabilities for one pair.
    Tensor<T> forward(std::string_view premise, std::string_view hypothesis) const {
        auto [u, v] = encoder.encode_pair(premise, hypothesis);
        return classify_probabilities(combine_features(u, v), head);
    }

    NliPrediction predict_pair(std::string_view premise, std::string_view hypothesis) const {
        NoGradGuard no_grad;
        return to_prediction(forward(premise, hypothesis));
    }

    NliPrediction operator()(std::string_view premise, std::string_view hypothesis) const {
        return predict_pair(premise, hypothesis);
    }

    ParamList<T> params() const {
        auto out = encoder.weights().params();
        for (auto& p : head.params()) out.push_back(std::move(p));
        return out;
    }

    NliModel deep_copy() const { return {encoder.deep_copy(), head.deep_copy()}; }
};

}  // namespace kdnli

#endif  // KDNLI_HEAD_HPP_
