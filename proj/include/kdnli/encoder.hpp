#ifndef KDNLI_ENCODER_HPP_
#define KDNLI_ENCODER_HPP_

#include <atomic>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <memory>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "kdnli/autodiff.hpp"
#include "kdnli/error.hpp"
#include "kdnli/optim.hpp"
#include "kdnli/vocab.hpp"

namespace kdnli {

struct EncoderConfig {
    std::size_t vocab_size = 0;
    std::size_t embed_dim = 64;
    std::size_t num_layers = 2;
    std::size_t num_heads = 4;
    std::size_t ffn_dim = 128;
    std::size_t max_tokens_length = 128;

    void validate() const {
        if (vocab_size <= Vocabulary::kReserved) throw ConfigError("vocab_size must exceed the reserved ids");
        if (embed_dim == 0 || num_layers == 0 || num_heads == 0 || ffn_dim == 0 || max_tokens_length == 0) {
            throw ConfigError("encoder dimensions must be positive");
        }
        if (embed_dim % num_heads != 0) {
            throw ConfigError("embed_dim " + std::to_string(embed_dim) + " not divisible by num_heads " +
                              std::to_string(num_heads));
        }
    }

    std::size_t head_dim() const { return embed_dim / num_heads; }

    /// Sentence-BERT base geometry (768-wide, 12 layers).
    static EncoderConfig full_scale(std::size_t vocab_size) {
        return {.vocab_size = vocab_size, .embed_dim = 768, .num_layers = 12, .num_heads = 12,
                .ffn_dim = 3072, .max_tokens_length = 128};
    }

    bool operator==(const EncoderConfig&) const = default;
};

template <class T>
struct EncoderLayer {
    Tensor<T> ln1_gain, ln1_bias;
    Tensor<T> wq, bq, wk, bk, wv, bv, wo, bo;
    Tensor<T> ln2_gain, ln2_bias;
    Tensor<T> w1, b1, w2, b2;
};

/// Parameters of the pre-norm transformer sentence encoder.
template <class T>
struct EncoderWeights {
    EncoderConfig config;
    Tensor<T> token_embedding;  // [vocab, d]
    std::vector<EncoderLayer<T>> layers;
    Tensor<T> final_gain, final_bias;

    /// Normal(0, 0.02) matrices and embeddings, zero biases, unit norm gains.
    static EncoderWeights init(const EncoderConfig& config, std::uint64_t seed) {
        config.validate();
        std::mt19937_64 rng(seed);
        std::normal_distribution<double> normal(0.0, 0.02);
        auto randn = [&](Shape shape) {
            std::vector<T> v(shape_numel(shape));
            for (auto& x : v) x = T(normal(rng));
            return Tensor<T>::from(std::move(shape), std::move(v), true);
        };
        auto fill = [](std::size_t n, T value) { return Tensor<T>::from({n}, std::vector<T>(n, value), true); };
        const std::size_t d = config.embed_dim;
        const std::size_t f = config.ffn_dim;
        EncoderWeights w;
        w.config = config;
        w.token_embedding = randn({config.vocab_size, d});
        for (std::size_t l = 0; l < config.num_layers; ++l) {
            EncoderLayer<T> layer;
            layer.ln1_gain = fill(d, T(1));
            layer.ln1_bias = fill(d, T(0));
            layer.wq = randn({d, d});
            layer.bq = fill(d, T(0));
            layer.wk = randn({d, d});
            layer.bk = fill(d, T(0));
            layer.wv = randn({d, d});
            layer.bv = fill(d, T(0));
            layer.wo = randn({d, d});
            layer.bo = fill(d, T(0));
            layer.ln2_gain = fill(d, T(1));
            layer.ln2_bias = fill(d, T(0));
            layer.w1 = randn({d, f});
            layer.b1 = fill(f, T(0));
            layer.w2 = randn({f, d});
            layer.b2 = fill(d, T(0));
            w.layers.push_back(std::move(layer));
        }
        w.final_gain = fill(d, T(1));
        w.final_bias = fill(d, T(0));
        return w;
    }

    /// Stable names in a fixed order; used by the optimizer and checkpoints.
    ParamList<T> params(const std::string& prefix = "encoder.") const {
        ParamList<T> out;
        out.push_back({prefix + "token_embedding", token_embedding});
        for (std::size_t l = 0; l < layers.size(); ++l) {
            const auto& L = layers[l];
            const std::string p = prefix + "layers." + std::to_string(l) + ".";
            out.push_back({p + "ln1.gain", L.ln1_gain});
            out.push_back({p + "ln1.bias", L.ln1_bias});
            out.push_back({p + "attn.wq", L.wq});
            out.push_back({p + "attn.bq", L.bq});
            out.push_back({p + "attn.wk", L.wk});
            out.push_back({p + "attn.bk", L.bk});
            out.push_back({p + "attn.wv", L.wv});
            out.push_back({p + "attn.bv", L.bv});
            out.push_back({p + "attn.wo", L.wo});
            out.push_back({p + "attn.bo", L.bo});
            out.push_back({p + "ln2.gain", L.ln2_gain});
            out.push_back({p + "ln2.bias", L.ln2_bias});
            out.push_back({p + "ffn.w1", L.w1});
            out.push_back({p + "ffn.b1", L.b1});
            out.push_back({p + "ffn.w2", L.w2});
            out.push_back({p + "ffn.b2", L.b2});
        }
        out.push_back({prefix + "final_norm.gain", final_gain});
        out.push_back({prefix + "final_norm.bias", final_bias});
        return out;
    }

    /// Independent copy of every tensor (tensors are shared handles).
    EncoderWeights deep_copy(bool requires_grad = true) const {
        EncoderWeights w = *this;
        auto dup = [requires_grad](Tensor<T>& t) { t = t.clone(requires_grad); };
        dup(w.token_embedding);
        for (auto& L : w.layers) {
            for (auto* t : {&L.ln1_gain, &L.ln1_bias, &L.wq, &L.bq, &L.wk, &L.bk, &L.wv, &L.bv, &L.wo, &L.bo,
                            &L.ln2_gain, &L.ln2_bias, &L.w1, &L.b1, &L.w2, &L.b2}) {
                dup(*t);
            }
        }
        dup(w.final_gain);
        dup(w.final_bias);
        return w;
    }

    void set_requires_grad(bool flag) {
        for (auto& p : params()) p.tensor.set_requires_grad(flag);
    }
};

/// Fixed sinusoidal position table, rows [0, length).
template <class T>
Tensor<T> sinusoidal_positions(std::size_t length, std::size_t d) {
    std::vector<T> table(length * d);
    for (std::size_t pos = 0; pos < length; ++pos) {
        for (std::size_t i = 0; i < d; i += 2) {
            const double angle = double(pos) / std::pow(10000.0, double(i) / double(d));
            table[pos * d + i] = T(std::sin(angle));
            if (i + 1 < d) table[pos * d + i + 1] = T(std::cos(angle));
        }
    }
    return Tensor<T>::from({length, d}, std::move(table));
}

template <class T>
struct SentenceEmbedding {
    Tensor<T> vector;
    std::uint64_t source_text_hash = 0;

    std::size_t dim() const { return vector.size(); }
};

namespace detail {

template <class T>
Tensor<T> self_attention(const Tensor<T>& h, const EncoderLayer<T>& L, const EncoderConfig& cfg,
                         const Tensor<T>& key_mask) {
    const std::size_t dh = cfg.head_dim();
    const T inv_sqrt = T(1) / std::sqrt(T(dh));
    const auto q = add_row(matmul(h, L.wq), L.bq);
    const auto k = add_row(matmul(h, L.wk), L.bk);
    const auto v = add_row(matmul(h, L.wv), L.bv);
    std::vector<Tensor<T>> heads;
    heads.reserve(cfg.num_heads);
    for (std::size_t head = 0; head < cfg.num_heads; ++head) {
        const auto qh = slice_cols(q, head * dh, dh);
        const auto kh = slice_cols(k, head * dh, dh);
        const auto vh = slice_cols(v, head * dh, dh);
        const auto scores = add_row(scale(matmul(qh, transpose(kh)), inv_sqrt), key_mask);
        heads.push_back(matmul(softmax(scores), vh));
    }
    return add_row(matmul(concat_cols(heads), L.wo), L.bo);
}

}  // namespace detail

/// Runs the encoder over one id sequence and mean-pools the non-PAD rows.
/// PAD positions are excluded from attention keys and from pooling, so
/// padding never changes the embedding.
template <class T>
SentenceEmbedding<T> encode(std::span<const std::size_t> tokens, const EncoderWeights<T>& w) {
    const auto& cfg = w.config;
    if (tokens.empty() || tokens.size() > cfg.max_tokens_length) {
        throw TokenizationError("sequence length " + std::to_string(tokens.size()) + " outside [1, " +
                                std::to_string(cfg.max_tokens_length) + "]");
    }
    const std::size_t n = tokens.size();
    const std::size_t d = cfg.embed_dim;
    std::vector<bool> keep(n);
    std::vector<T> mask(n);
    for (std::size_t i = 0; i < n; ++i) {
        if (tokens[i] >= cfg.vocab_size) {
            throw TokenizationError("token id " + std::to_string(tokens[i]) + " outside vocabulary of " +
                                    std::to_string(cfg.vocab_size));
        }
        keep[i] = tokens[i] != Vocabulary::kPad;
        mask[i] = keep[i] ? T(0) : T(-1e9);
    }
    const auto key_mask = Tensor<T>::vector(std::move(mask));

    auto x = add(scale(embedding_lookup(w.token_embedding, tokens), std::sqrt(T(d))),
                 sinusoidal_positions<T>(n, d));
    for (const auto& L : w.layers) {
        x = add(x, detail::self_attention(layer_norm(x, L.ln1_gain, L.ln1_bias), L, cfg, key_mask));
        const auto h = layer_norm(x, L.ln2_gain, L.ln2_bias);
        x = add(x, add_row(matmul(gelu(add_row(matmul(h, L.w1), L.b1)), L.w2), L.b2));
    }
    x = layer_norm(x, w.final_gain, w.final_bias);
    return {masked_mean_rows(x, keep), 0};
}

/// Encoder weights plus everything needed to go from raw text to an
/// embedding. Counts invocations so split inference can prove it never
/// touched the encoder.
template <class T>
class SentenceEncoder {
public:
    SentenceEncoder() = default;
    SentenceEncoder(Vocabulary vocab, EncoderWeights<T> weights, std::size_t max_sentence_length = 256)
        : vocab_(std::move(vocab)), weights_(std::move(weights)), max_sentence_length_(max_sentence_length) {
        if (weights_.config.vocab_size != vocab_.size()) {
            throw ConfigError("encoder vocab_size " + std::to_string(weights_.config.vocab_size) +
                              " does not match vocabulary of " + std::to_string(vocab_.size()));
        }
    }

    SentenceEncoder(const SentenceEncoder& other)
        : vocab_(other.vocab_), weights_(other.weights_), max_sentence_length_(other.max_sentence_length_) {}
    SentenceEncoder& operator=(const SentenceEncoder& other) {
        vocab_ = other.vocab_;
        weights_ = other.weights_;
        max_sentence_length_ = other.max_sentence_length_;
        return *this;
    }

    std::vector<std::size_t> tokenize(std::string_view text) const {
        return kdnli::tokenize(text, vocab_, weights_.config.max_tokens_length, max_sentence_length_);
    }

    SentenceEmbedding<T> encode_ids(std::span<const std::size_t> ids) const {
        ++calls_;
        return kdnli::encode(ids, weights_);
    }

    SentenceEmbedding<T> encode(std::string_view text) const {
        const auto ids = tokenize(text);
        auto emb = encode_ids(ids);
        emb.source_text_hash = fnv1a64(text);
        return emb;
    }

    /// Two independent invocations with shared weights; no cross-sentence interaction.
    std::pair<SentenceEmbedding<T>, SentenceEmbedding<T>> encode_pair(std::string_view premise,
                                                                      std::string_view hypothesis) const {
        auto u = encode(premise);
        auto v = encode(hypothesis);
        return {std::move(u), std::move(v)};
    }

    /// Independent copy; tensors are not shared with this encoder.
    SentenceEncoder deep_copy(bool requires_grad = true) const {
        return SentenceEncoder(vocab_, weights_.deep_copy(requires_grad), max_sentence_length_);
    }

    const Vocabulary& vocab() const { return vocab_; }
    const EncoderWeights<T>& weights() const { return weights_; }
    EncoderWeights<T>& weights() { return weights_; }
    const EncoderConfig& config() const { return weights_.config; }
    std::size_t embed_dim() const { return weights_.config.embed_dim; }
    std::size_t max_sentence_length() const { return max_sentence_length_; }
    void set_max_sentence_length(std::size_t n) { max_sentence_length_ = n; }

    std::size_t invocation_count() const { return calls_.load(); }
    void reset_invocation_count() { calls_ = 0; }

private:
    Vocabulary vocab_;
    EncoderWeights<T> weights_;
    std::size_t max_sentence_length_ = 256;
    mutable std::atomic<std::size_t> calls_{0};
};

}  // namespace kdnli

#endif  // KDNLI_ENCODER_HPP_
