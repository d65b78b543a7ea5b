#ifndef KDNLI_CACHE_HPP_
#define KDNLI_CACHE_HPP_

// File-backed sentence embedding cache for split inference: sentences are
// encoded once, and later classification runs only the head.

#include <cstddef>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "kdnli/checkpoint.hpp"
#include "kdnli/encoder.hpp"
#include "kdnli/error.hpp"
#include "kdnli/head.hpp"

namespace kdnli {

inline std::string checkpoint_id_string(std::uint64_t id) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(id));
    return buf;
}

template <class T>
class EmbeddingCache {
public:
    EmbeddingCache(std::uint64_t checkpoint_id, std::size_t dim) : checkpoint_id_(checkpoint_id), dim_(dim) {}

    static EmbeddingCache for_encoder(const SentenceEncoder<T>& encoder) {
        return EmbeddingCache(encoder_fingerprint(encoder), encoder.embed_dim());
    }

    std::uint64_t checkpoint_id() const { return checkpoint_id_; }
    std::size_t dim() const { return dim_; }
    std::size_t size() const { return keys_.size(); }

    /// Throws StaleCacheError unless the cache was built by the encoder with id `id`.
    void require_checkpoint(std::uint64_t id) const {
        if (id != checkpoint_id_) {
            throw StaleCacheError("cache built for encoder " + checkpoint_id_string(checkpoint_id_) +
                                  ", current encoder is " + checkpoint_id_string(id));
        }
    }

    const std::vector<T>* find(std::string_view text) const {
        auto it = entries_.find(std::string(text));
        return it == entries_.end() ? nullptr : &it->second;
    }

    bool contains(std::string_view text) const { return find(text) != nullptr; }

    void insert(std::string_view text, std::vector<T> vector) {
        if (vector.size() != dim_) throw ShapeError("cache entry has the wrong width");
        auto [it, inserted] = entries_.emplace(std::string(text), std::move(vector));
        if (inserted) keys_.push_back(it->first);
    }

    /// Cached vector for `text`, encoding it on a miss. `encoder` must be the
    /// one the cache was built for; callers check that once via require_checkpoint.
    const std::vector<T>& get_or_encode(std::string_view text, const SentenceEncoder<T>& encoder) {
        if (const auto* hit = find(text)) return *hit;
        NoGradGuard no_grad;
        const auto emb = encoder.encode(text);
        insert(text, std::vector<T>(emb.vector.data().begin(), emb.vector.data().end()));
        return *find(text);
    }

    Checkpoint to_checkpoint() const {
        Checkpoint ckpt{ModelKind::Cache, static_cast<std::uint32_t>(sizeof(T)), 0, {}, {}, {}};
        ckpt.metadata["checkpoint_id"] = checkpoint_id_string(checkpoint_id_);
        ckpt.metadata["embed_dim"] = std::to_string(dim_);
        StoredTensor table{"embeddings", {keys_.size(), dim_}, {}};
        table.values.reserve(keys_.size() * dim_);
        for (const auto& k : keys_) {
            const auto& v = entries_.at(k);
            table.values.insert(table.values.end(), v.begin(), v.end());
            ckpt.keys.push_back({fnv1a64(k), k});
        }
        ckpt.tensors.push_back(std::move(table));
        return ckpt;
    }

    static EmbeddingCache from_checkpoint(const Checkpoint& ckpt) {
        if (ckpt.kind != ModelKind::Cache) throw FormatError("file is not an embedding cache");
        const auto id = std::stoull(ckpt.meta("checkpoint_id"), nullptr, 16);
        const auto dim = std::stoul(ckpt.meta("embed_dim"));
        EmbeddingCache cache(id, dim);
        const auto& table = ckpt.tensor("embeddings");
        if (table.shape != Shape{ckpt.keys.size(), dim}) throw IntegrityError("embedding table does not match key table");
        for (std::size_t i = 0; i < ckpt.keys.size(); ++i) {
            const auto& key = ckpt.keys[i];
            if (fnv1a64(key.text) != key.hash) throw IntegrityError("cache key #" + std::to_string(i) + " is corrupt");
            std::vector<T> v(dim);
            for (std::size_t j = 0; j < dim; ++j) v[j] = T(table.values[i * dim + j]);
            cache.insert(key.text, std::move(v));
        }
        return cache;
    }

    void save(const std::filesystem::path& path) const { save_checkpoint(path, to_checkpoint()); }

    static EmbeddingCache load(const std::filesystem::path& path) { return from_checkpoint(load_checkpoint(path)); }

private:
    std::uint64_t checkpoint_id_;
    std::size_t dim_;
    std::unordered_map<std::string, std::vector<T>> entries_;
    std::vector<std::string> keys_;  // insertion order, for deterministic files
};

/// Embeds every text not yet in the cache at `path` (created when absent)
/// and writes the cache back. An existing cache from another encoder is
/// rejected with StaleCacheError.
template <class T>
EmbeddingCache<T> embed_corpus(const std::vector<std::string>& texts, const SentenceEncoder<T>& encoder,
                               const std::filesystem::path& path) {
    const auto id = encoder_fingerprint(encoder);
    auto cache = std::filesystem::exists(path) ? EmbeddingCache<T>::load(path)
                                               : EmbeddingCache<T>(id, encoder.embed_dim());
    cache.require_checkpoint(id);
    for (const auto& t : texts) cache.get_or_encode(t, encoder);
    cache.save(path);
    return cache;
}

/// Head-only predictor over cached embeddings; never touches an encoder.
template <class T>
class CachedPredictor {
public:
    CachedPredictor(const EmbeddingCache<T>& cache, const HeadWeights<T>& head) : cache_(cache), head_(head) {
        if (head.input_dim() != 2 * cache.dim()) {
            throw ShapeError("head input " + std::to_string(head.input_dim()) + " != 2 x cached embedding width " +
                             std::to_string(cache.dim()));
        }
    }

    NliPrediction operator()(std::string_view premise, std::string_view hypothesis) const {
        return classify(combine_features(lookup(premise), lookup(hypothesis)), head_);
    }

private:
    Tensor<T> lookup(std::string_view text) const {
        const auto* v = cache_.find(text);
        if (!v) throw DataError("text missing from embedding cache: '" + std::string(text) + "'");
        return Tensor<T>::vector(*v);
    }

    const EmbeddingCache<T>& cache_;
    const HeadWeights<T>& head_;
};

}  // namespace kdnli

#endif  // KDNLI_CACHE_HPP_
