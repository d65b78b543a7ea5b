#ifndef KDNLI_CONFIG_HPP_
#define KDNLI_CONFIG_HPP_

// Flat key=value run configuration. Blank lines and lines starting with '#'
// are ignored. Training keys match TrainingHyperParams field names; the
// optional model keys size a freshly initialised encoder and head.

#include <charconv>
#include <cstddef>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "kdnli/error.hpp"
#include "kdnli/optim.hpp"
#include "kdnli/vocab.hpp"

namespace kdnli {

struct ModelShape {
    std::size_t embed_dim = 64;
    std::size_t num_layers = 2;
    std::size_t num_heads = 4;
    std::size_t ffn_dim = 128;
    std::vector<std::size_t> head_dims;  // empty: derived from embed_dim

    bool operator==(const ModelShape&) const = default;
};

struct RunConfig {
    TrainingHyperParams hyper;
    ModelShape model;
    std::map<std::string, std::string> entries;  // every key as written, for echoing

    bool operator==(const RunConfig&) const = default;
};

namespace detail {

inline std::string trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return std::string(s.substr(b, e - b + 1));
}

inline std::size_t parse_size(const std::string& key, const std::string& value) {
    std::size_t out = 0;
    const auto* end = value.data() + value.size();
    const auto [ptr, ec] = std::from_chars(value.data(), end, out);
    if (ec != std::errc() || ptr != end) throw ConfigError(key + ": expected a non-negative integer, got '" + value + "'");
    return out;
}

inline double parse_real(const std::string& key, const std::string& value) {
    std::istringstream in(value);
    in.imbue(std::locale::classic());
    double out = 0.0;
    in >> out;
    if (in.fail() || !(in >> std::ws).eof()) throw ConfigError(key + ": expected a number, got '" + value + "'");
    return out;
}

inline std::vector<std::size_t> parse_size_list(const std::string& key, const std::string& value) {
    std::vector<std::size_t> out;
    std::size_t start = 0;
    while (true) {
        const auto comma = value.find(',', start);
        out.push_back(parse_size(key, trim(value.substr(start, comma - start))));
        if (comma == std::string::npos) break;
        start = comma + 1;
    }
    return out;
}

}  // namespace detail

inline RunConfig parse_config(std::string_view text, const std::string& origin = "<config>") {
    RunConfig cfg;
    std::istringstream in{std::string(text)};
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto content = detail::trim(line);
        if (content.empty() || content.front() == '#') continue;
        const auto where = origin + ":" + std::to_string(lineno);
        const auto eq = content.find('=');
        if (eq == std::string::npos) throw ConfigError(where + ": expected key=value");
        const auto key = detail::trim(content.substr(0, eq));
        const auto value = detail::trim(content.substr(eq + 1));
        if (value.empty()) throw ConfigError(where + ": empty value for '" + key + "'");
        if (cfg.entries.count(key)) throw ConfigError(where + ": duplicate key '" + key + "'");

        auto& h = cfg.hyper;
        auto& m = cfg.model;
        try {
            if (key == "batch_size") h.batch_size = detail::parse_size(key, value);
            else if (key == "max_sentence_length") h.max_sentence_length = detail::parse_size(key, value);
            else if (key == "max_tokens_length") h.max_tokens_length = detail::parse_size(key, value);
            else if (key == "epochs") h.epochs = detail::parse_size(key, value);
            else if (key == "learning_rate") h.learning_rate = detail::parse_real(key, value);
            else if (key == "epsilon") h.epsilon = detail::parse_real(key, value);
            else if (key == "weight_decay") h.weight_decay = detail::parse_real(key, value);
            else if (key == "accumulation_step") h.accumulation_step = detail::parse_size(key, value);
            else if (key == "embed_dim") m.embed_dim = detail::parse_size(key, value);
            else if (key == "num_layers") m.num_layers = detail::parse_size(key, value);
            else if (key == "num_heads") m.num_heads = detail::parse_size(key, value);
            else if (key == "ffn_dim") m.ffn_dim = detail::parse_size(key, value);
            else if (key == "head_dims") m.head_dims = detail::parse_size_list(key, value);
            else throw ConfigError("unknown key '" + key + "'");
        } catch (const ConfigError& e) {
            throw ConfigError(where + ": " + e.what());
        }
        cfg.entries[key] = value;
    }
    cfg.hyper.validate();
    return cfg;
}

inline RunConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config " + path.string());
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_config(buf.str(), path.string());
}

}  // namespace kdnli

#endif  // KDNLI_CONFIG_HPP_
