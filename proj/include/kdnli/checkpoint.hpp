#ifndef KDNLI_CHECKPOINT_HPP_
#define KDNLI_CHECKPOINT_HPP_

// Binary checkpoint container.
//
// All integers are little-endian.
//
//   magic            8 bytes  "KDNLICKP"
//   version          u32      1
//   kind             u32      0 encoder, 1 head, 2 composed, 3 embedding cache
//   value width      u32      4 (float32) or 8 (float64)
//   seed             u64      RNG seed of the producing run
//   metadata         u32 length + bytes, "key=value" lines
//   tensor count     u32
//   per tensor       u32 name length, name bytes, u32 rank, u32 dims[rank],
//                    values (little-endian IEEE floats of the value width)
//   key count        u32      (embedding cache only)
//   per key          u64 text hash, u32 text length, text bytes

#include <bit>
#include <cstddef>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "kdnli/encoder.hpp"
#include "kdnli/error.hpp"
#include "kdnli/head.hpp"
#include "kdnli/vocab.hpp"

namespace kdnli {

inline constexpr char kCheckpointMagic[8] = {'K', 'D', 'N', 'L', 'I', 'C', 'K', 'P'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

enum class ModelKind : std::uint32_t { Encoder = 0, Head = 1, Composed = 2, Cache = 3 };

struct StoredTensor {
    std::string name;
    Shape shape;
    std::vector<double> values;  // widened; exact for both storage widths

    bool operator==(const StoredTensor&) const = default;
};

struct CacheKey {
    std::uint64_t hash = 0;
    std::string text;

    bool operator==(const CacheKey&) const = default;
};

struct Checkpoint {
    ModelKind kind = ModelKind::Composed;
    std::uint32_t value_width = 4;
    std::uint64_t seed = 0;
    std::map<std::string, std::string> metadata;
    std::vector<StoredTensor> tensors;
    std::vector<CacheKey> keys;

    const StoredTensor& tensor(const std::string& name) const {
        for (const auto& t : tensors) {
            if (t.name == name) return t;
        }
        throw FormatError("checkpoint has no tensor '" + name + "'");
    }

    const std::string& meta(const std::string& key) const {
        auto it = metadata.find(key);
        if (it == metadata.end()) throw FormatError("checkpoint metadata lacks '" + key + "'");
        return it->second;
    }

    bool operator==(const Checkpoint&) const = default;
};

namespace detail {

class ByteWriter {
public:
    void u32(std::uint32_t v) {
        for (int i = 0; i < 4; ++i) bytes_.push_back(char((v >> (8 * i)) & 0xFF));
    }
    void u64(std::uint64_t v) {
        for (int i = 0; i < 8; ++i) bytes_.push_back(char((v >> (8 * i)) & 0xFF));
    }
    void raw(std::string_view s) { bytes_.append(s); }
    void str(std::string_view s) {
        u32(static_cast<std::uint32_t>(s.size()));
        raw(s);
    }
    void value(double v, std::uint32_t width) {
        if (width == 4) {
            u32(std::bit_cast<std::uint32_t>(static_cast<float>(v)));
        } else {
            u64(std::bit_cast<std::uint64_t>(v));
        }
    }
    const std::string& bytes() const { return bytes_; }

private:
    std::string bytes_;
};

class ByteReader {
public:
    explicit ByteReader(std::string bytes) : bytes_(std::move(bytes)) {}

    bool has(std::size_t n) const { return pos_ + n <= bytes_.size(); }
    std::uint32_t u32() {
        need(4);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= std::uint32_t(static_cast<unsigned char>(bytes_[pos_++])) << (8 * i);
        return v;
    }
    std::uint64_t u64() {
        need(8);
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= std::uint64_t(static_cast<unsigned char>(bytes_[pos_++])) << (8 * i);
        return v;
    }
    std::string raw(std::size_t n) {
        need(n);
        std::string s = bytes_.substr(pos_, n);
        pos_ += n;
        return s;
    }
    std::string str() { return raw(u32()); }
    double value(std::uint32_t width) {
        return width == 4 ? double(std::bit_cast<float>(u32())) : std::bit_cast<double>(u64());
    }
    bool at_end() const { return pos_ == bytes_.size(); }

private:
    void need(std::size_t n) const {
        if (!has(n)) throw IntegrityError("unexpected end of data");
    }

    std::string bytes_;
    std::size_t pos_ = 0;
};

inline std::string encode_metadata(const std::map<std::string, std::string>& meta) {
    std::string out;
    for (const auto& [k, v] : meta) {
        if (k.find_first_of("=\n") != std::string::npos || v.find('\n') != std::string::npos) {
            throw FormatError("metadata entry '" + k + "' cannot be serialised");
        }
        out += k + "=" + v + "\n";
    }
    return out;
}

inline std::map<std::string, std::string> decode_metadata(const std::string& text) {
    std::map<std::string, std::string> meta;
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) {
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw FormatError("malformed metadata line '" + line + "'");
        meta[line.substr(0, eq)] = line.substr(eq + 1);
    }
    return meta;
}

}  // namespace detail

inline std::string serialize_checkpoint(const Checkpoint& ckpt) {
    if (ckpt.value_width != 4 && ckpt.value_width != 8) throw FormatError("value width must be 4 or 8");
    detail::ByteWriter w;
    w.raw(std::string_view(kCheckpointMagic, sizeof kCheckpointMagic));
    w.u32(kCheckpointVersion);
    w.u32(static_cast<std::uint32_t>(ckpt.kind));
    w.u32(ckpt.value_width);
    w.u64(ckpt.seed);
    w.str(detail::encode_metadata(ckpt.metadata));
    w.u32(static_cast<std::uint32_t>(ckpt.tensors.size()));
    for (const auto& t : ckpt.tensors) {
        if (shape_numel(t.shape) != t.values.size()) throw FormatError("tensor '" + t.name + "' shape/value mismatch");
        w.str(t.name);
        w.u32(static_cast<std::uint32_t>(t.shape.size()));
        for (const auto d : t.shape) w.u32(static_cast<std::uint32_t>(d));
        for (const auto v : t.values) w.value(v, ckpt.value_width);
    }
    if (ckpt.kind == ModelKind::Cache) {
        w.u32(static_cast<std::uint32_t>(ckpt.keys.size()));
        for (const auto& k : ckpt.keys) {
            w.u64(k.hash);
            w.str(k.text);
        }
    }
    return w.bytes();
}

inline Checkpoint deserialize_checkpoint(std::string bytes) {
    detail::ByteReader r(std::move(bytes));
    if (!r.has(sizeof kCheckpointMagic) || r.raw(sizeof kCheckpointMagic) != std::string_view(kCheckpointMagic, 8)) {
        throw FormatError("bad checkpoint magic");
    }
    Checkpoint ckpt;
    try {
        if (const auto version = r.u32(); version != kCheckpointVersion) {
            throw FormatError("unsupported checkpoint version " + std::to_string(version));
        }
        const auto kind = r.u32();
        if (kind > 3) throw FormatError("unknown model kind " + std::to_string(kind));
        ckpt.kind = static_cast<ModelKind>(kind);
        ckpt.value_width = r.u32();
        if (ckpt.value_width != 4 && ckpt.value_width != 8) throw FormatError("bad value width");
        ckpt.seed = r.u64();
        ckpt.metadata = detail::decode_metadata(r.str());
    } catch (const IntegrityError&) {
        throw FormatError("truncated checkpoint header");
    }
    const auto count = r.u32();
    for (std::uint32_t i = 0; i < count; ++i) {
        StoredTensor t;
        try {
            t.name = r.str();
        } catch (const IntegrityError&) {
            throw IntegrityError("tensor table truncated before tensor #" + std::to_string(i));
        }
        try {
            const auto rank = r.u32();
            if (rank > 8) throw IntegrityError("implausible rank " + std::to_string(rank));
            for (std::uint32_t k = 0; k < rank; ++k) t.shape.push_back(r.u32());
            const auto n = shape_numel(t.shape);
            if (!r.has(n * ckpt.value_width)) throw IntegrityError("values missing");
            t.values.reserve(n);
            for (std::size_t k = 0; k < n; ++k) t.values.push_back(r.value(ckpt.value_width));
        } catch (const IntegrityError& e) {
            throw IntegrityError("tensor '" + t.name + "' is truncated or corrupt: " + e.what());
        }
        ckpt.tensors.push_back(std::move(t));
    }
    if (ckpt.kind == ModelKind::Cache) {
        const auto n = r.u32();
        for (std::uint32_t i = 0; i < n; ++i) {
            CacheKey k;
            k.hash = r.u64();
            k.text = r.str();
            ckpt.keys.push_back(std::move(k));
        }
    }
    if (!r.at_end()) throw IntegrityError("trailing bytes after checkpoint");
    return ckpt;
}

/// Writes through a temporary file and an atomic rename.
inline void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
    const auto bytes = serialize_checkpoint(ckpt);
    auto tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw Error("cannot write " + tmp.string());
        out.write(bytes.data(), std::streamsize(bytes.size()));
        out.flush();
        if (!out) throw Error("write failed for " + tmp.string());
    }
    std::filesystem::rename(tmp, path);
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open checkpoint " + path.string());
    std::ostringstream buf;
    buf << in.rdbuf();
    return deserialize_checkpoint(buf.str());
}

// ---------------------------------------------------------------------------
// Model <-> checkpoint

namespace detail {

template <class T>
void store_params(Checkpoint& ckpt, const ParamList<T>& params) {
    for (const auto& p : params) {
        ckpt.tensors.push_back({p.name, p.tensor.shape(), std::vector<double>(p.tensor.data().begin(), p.tensor.data().end())});
    }
}

template <class T>
void restore_params(const Checkpoint& ckpt, const ParamList<T>& params) {
    for (const auto& p : params) {
        const auto& stored = ckpt.tensor(p.name);
        if (stored.shape != p.tensor.shape()) {
            throw FormatError("tensor '" + p.name + "' has shape " + shape_str(stored.shape) + ", expected " +
                              shape_str(p.tensor.shape()));
        }
        auto dst = Tensor<T>(p.tensor).mutable_data();
        for (std::size_t i = 0; i < dst.size(); ++i) dst[i] = T(stored.values[i]);
    }
}

inline std::string join(const std::vector<std::string>& words, char sep) {
    std::string out;
    for (std::size_t i = 0; i < words.size(); ++i) {
        if (i) out += sep;
        out += words[i];
    }
    return out;
}

inline std::vector<std::size_t> parse_dims(const std::string& s) {
    std::vector<std::size_t> out;
    std::size_t start = 0;
    while (start <= s.size()) {
        const auto comma = s.find(',', start);
        out.push_back(std::stoul(s.substr(start, comma - start)));
        if (comma == std::string::npos) break;
        start = comma + 1;
    }
    return out;
}

template <class T>
void describe_encoder(Checkpoint& ckpt, const SentenceEncoder<T>& enc) {
    const auto& c = enc.config();
    ckpt.metadata["vocab_size"] = std::to_string(c.vocab_size);
    ckpt.metadata["embed_dim"] = std::to_string(c.embed_dim);
    ckpt.metadata["num_layers"] = std::to_string(c.num_layers);
    ckpt.metadata["num_heads"] = std::to_string(c.num_heads);
    ckpt.metadata["ffn_dim"] = std::to_string(c.ffn_dim);
    ckpt.metadata["max_tokens_length"] = std::to_string(c.max_tokens_length);
    ckpt.metadata["max_sentence_length"] = std::to_string(enc.max_sentence_length());
    ckpt.metadata["vocab"] = join(enc.vocab().words(), ' ');
}

inline std::string dims_to_string(const std::vector<std::size_t>& dims) {
    std::vector<std::string> parts;
    for (const auto d : dims) parts.push_back(std::to_string(d));
    return join(parts, ',');
}

}  // namespace detail

template <class T>
Checkpoint encoder_checkpoint(const SentenceEncoder<T>& enc, std::uint64_t seed, std::uint32_t value_width = 4) {
    Checkpoint ckpt{ModelKind::Encoder, value_width, seed, {}, {}, {}};
    detail::describe_encoder(ckpt, enc);
    detail::store_params(ckpt, enc.weights().params());
    return ckpt;
}

template <class T>
Checkpoint head_checkpoint(const HeadWeights<T>& head, std::uint64_t seed, std::uint32_t value_width = 4) {
    Checkpoint ckpt{ModelKind::Head, value_width, seed, {}, {}, {}};
    ckpt.metadata["head_dims"] = detail::dims_to_string(head.dims());
    detail::store_params(ckpt, head.params());
    return ckpt;
}

template <class T>
Checkpoint model_checkpoint(const NliModel<T>& model, std::uint64_t seed, std::uint32_t value_width = 4) {
    Checkpoint ckpt{ModelKind::Composed, value_width, seed, {}, {}, {}};
    detail::describe_encoder(ckpt, model.encoder);
    ckpt.metadata["head_dims"] = detail::dims_to_string(model.head.dims());
    detail::store_params(ckpt, model.params());
    return ckpt;
}

template <class T>
SentenceEncoder<T> encoder_from_checkpoint(const Checkpoint& ckpt) {
    if (ckpt.kind != ModelKind::Encoder && ckpt.kind != ModelKind::Composed) {
        throw FormatError("checkpoint holds no encoder");
    }
    std::vector<std::string> words;
    const auto& vocab_line = ckpt.meta("vocab");
    if (!vocab_line.empty()) words = split_whitespace(vocab_line);
    Vocabulary vocab(words);
    EncoderConfig cfg{.vocab_size = std::stoul(ckpt.meta("vocab_size")),
                      .embed_dim = std::stoul(ckpt.meta("embed_dim")),
                      .num_layers = std::stoul(ckpt.meta("num_layers")),
                      .num_heads = std::stoul(ckpt.meta("num_heads")),
                      .ffn_dim = std::stoul(ckpt.meta("ffn_dim")),
                      .max_tokens_length = std::stoul(ckpt.meta("max_tokens_length"))};
    auto weights = EncoderWeights<T>::init(cfg, 0);
    detail::restore_params(ckpt, weights.params());
    return SentenceEncoder<T>(std::move(vocab), std::move(weights), std::stoul(ckpt.meta("max_sentence_length")));
}

template <class T>
HeadWeights<T> head_from_checkpoint(const Checkpoint& ckpt) {
    if (ckpt.kind != ModelKind::Head && ckpt.kind != ModelKind::Composed) {
        throw FormatError("checkpoint holds no classifier head");
    }
    auto head = HeadWeights<T>::zeros(detail::parse_dims(ckpt.meta("head_dims")));
    detail::restore_params(ckpt, head.params());
    return head;
}

template <class T>
NliModel<T> model_from_checkpoint(const Checkpoint& ckpt) {
    NliModel<T> model{encoder_from_checkpoint<T>(ckpt), head_from_checkpoint<T>(ckpt)};
    model.check_compatible();
    return model;
}

/// Identity of an encoder's exact weights and vocabulary; keys embedding caches.
template <class T>
std::uint64_t encoder_fingerprint(const SentenceEncoder<T>& enc) {
    std::uint64_t h = enc.vocab().fingerprint();
    h = fnv1a64(std::to_string(enc.max_sentence_length()), h);
    for (const auto& p : enc.weights().params()) {
        h = fnv1a64(p.name + shape_str(p.tensor.shape()), h);
        for (const T v : p.tensor.data()) {
            const double wide = double(v);
            char bytes[sizeof(double)];
            std::memcpy(bytes, &wide, sizeof wide);
            h = fnv1a64(std::string_view(bytes, sizeof bytes), h);
        }
    }
    return h;
}

}  // namespace kdnli

#endif  // KDNLI_CHECKPOINT_HPP_
