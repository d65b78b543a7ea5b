#ifndef KDNLI_DATA_HPP_
#define KDNLI_DATA_HPP_

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <numeric>
#include <optional>
#include <random>
#include <set>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "kdnli/error.hpp"
#include "kdnli/head.hpp"
#include "kdnli/vocab.hpp"

namespace kdnli {

// ---------------------------------------------------------------------------
// Records

struct NliExample {
    std::string premise;
    std::string hypothesis;
    NliLabel label = NliLabel::Entailment;

    bool operator==(const NliExample&) const = default;
    auto operator<=>(const NliExample&) const = default;
};

enum class RteLabel : std::uint8_t { Entailment = 0, NoEntailment = 1 };

struct RteExample {
    std::string premise;
    std::string hypothesis;
    RteLabel label = RteLabel::Entailment;

    bool operator==(const RteExample&) const = default;
};

enum class Sentiment : std::uint8_t { Positive = 0, Negative = 1 };

struct AbsaExample {
    std::string text;
    std::string topic;
    Sentiment sentiment = Sentiment::Positive;
    std::string split = "test";

    bool operator==(const AbsaExample&) const = default;
};

struct ParallelPair {
    std::string source_sentence;
    std::string target_sentence;

    bool operator==(const ParallelPair&) const = default;
};

inline std::string_view to_string(RteLabel label) {
    return label == RteLabel::Entailment ? "entailment" : "no_entailment";
}

inline std::string_view to_string(Sentiment s) { return s == Sentiment::Positive ? "positive" : "negative"; }

// ---------------------------------------------------------------------------
// Tab-separated files

namespace detail {

inline std::vector<std::string> split_tabs(const std::string& line) {
    std::vector<std::string> cols;
    std::size_t start = 0;
    while (true) {
        const auto tab = line.find('\t', start);
        cols.push_back(line.substr(start, tab == std::string::npos ? std::string::npos : tab - start));
        if (tab == std::string::npos) break;
        start = tab + 1;
    }
    return cols;
}

/// Calls `row(cols, lineno)` for every non-empty line, checking the column count.
template <class RowFn>
void read_tsv(const std::filesystem::path& path, std::size_t columns, RowFn row) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open " + path.string());
    std::string line;
    std::size_t lineno = 0;
    std::size_t rows = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        auto cols = split_tabs(line);
        const std::string where = path.string() + ":" + std::to_string(lineno);
        if (cols.size() != columns) {
            throw ParseError(where + ": expected " + std::to_string(columns) + " tab-separated columns, got " +
                             std::to_string(cols.size()));
        }
        for (const auto& c : cols) {
            if (split_whitespace(c).empty()) throw ParseError(where + ": empty field");
        }
        row(cols, where);
        ++rows;
    }
    if (rows == 0) throw DataError(path.string() + ": no records");
}

inline void check_field(std::string_view field) {
    if (field.find_first_of("\t\n\r") != std::string_view::npos || split_whitespace(field).empty()) {
        throw DataError("field cannot be written as TSV: '" + std::string(field) + "'");
    }
}

/// Writes to a sibling temporary and renames it into place.
template <class WriteFn>
void write_atomically(const std::filesystem::path& path, WriteFn write) {
    auto tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw DataError("cannot write " + tmp.string());
        write(out);
        out.flush();
        if (!out) throw DataError("write failed for " + tmp.string());
    }
    std::filesystem::rename(tmp, path);
}

}  // namespace detail

/// premise \t hypothesis \t label, labels lowercase, no header.
inline std::vector<NliExample> load_nli(const std::filesystem::path& path) {
    std::vector<NliExample> out;
    detail::read_tsv(path, 3, [&](std::vector<std::string>& c, const std::string& where) {
        const auto label = parse_nli_label(c[2]);
        if (!label) throw ParseError(where + ": unknown label '" + c[2] + "'");
        out.push_back({std::move(c[0]), std::move(c[1]), *label});
    });
    return out;
}

inline void save_nli(const std::filesystem::path& path, const std::vector<NliExample>& data) {
    for (const auto& ex : data) {
        detail::check_field(ex.premise);
        detail::check_field(ex.hypothesis);
    }
    detail::write_atomically(path, [&](std::ostream& out) {
        for (const auto& ex : data) out << ex.premise << '\t' << ex.hypothesis << '\t' << to_string(ex.label) << '\n';
    });
}

inline std::vector<RteExample> load_rte(const std::filesystem::path& path) {
    std::vector<RteExample> out;
    detail::read_tsv(path, 3, [&](std::vector<std::string>& c, const std::string& where) {
        RteLabel label;
        if (c[2] == "entailment") {
            label = RteLabel::Entailment;
        } else if (c[2] == "no_entailment") {
            label = RteLabel::NoEntailment;
        } else {
            throw ParseError(where + ": unknown label '" + c[2] + "'");
        }
        out.push_back({std::move(c[0]), std::move(c[1]), label});
    });
    return out;
}

inline void save_rte(const std::filesystem::path& path, const std::vector<RteExample>& data) {
    detail::write_atomically(path, [&](std::ostream& out) {
        for (const auto& ex : data) out << ex.premise << '\t' << ex.hypothesis << '\t' << to_string(ex.label) << '\n';
    });
}

/// text \t topic \t sentiment \t split.
inline std::vector<AbsaExample> load_absa(const std::filesystem::path& path) {
    std::vector<AbsaExample> out;
    detail::read_tsv(path, 4, [&](std::vector<std::string>& c, const std::string& where) {
        Sentiment s;
        if (c[2] == "positive") {
            s = Sentiment::Positive;
        } else if (c[2] == "negative") {
            s = Sentiment::Negative;
        } else {
            throw ParseError(where + ": unknown sentiment '" + c[2] + "'");
        }
        out.push_back({std::move(c[0]), std::move(c[1]), s, std::move(c[3])});
    });
    return out;
}

inline void save_absa(const std::filesystem::path& path, const std::vector<AbsaExample>& data) {
    detail::write_atomically(path, [&](std::ostream& out) {
        for (const auto& ex : data) {
            out << ex.text << '\t' << ex.topic << '\t' << to_string(ex.sentiment) << '\t' << ex.split << '\n';
        }
    });
}

/// source \t target.
inline std::vector<ParallelPair> load_parallel(const std::filesystem::path& path) {
    std::vector<ParallelPair> out;
    detail::read_tsv(path, 2, [&](std::vector<std::string>& c, const std::string&) {
        out.push_back({std::move(c[0]), std::move(c[1])});
    });
    return out;
}

inline void save_parallel(const std::filesystem::path& path, const std::vector<ParallelPair>& data) {
    for (const auto& p : data) {
        detail::check_field(p.source_sentence);
        detail::check_field(p.target_sentence);
    }
    detail::write_atomically(path, [&](std::ostream& out) {
        for (const auto& p : data) out << p.source_sentence << '\t' << p.target_sentence << '\n';
    });
}

/// Plain concatenation; no deduplication.
inline std::vector<NliExample> merge_datasets(const std::vector<std::vector<NliExample>>& parts) {
    std::vector<NliExample> out;
    for (const auto& p : parts) out.insert(out.end(), p.begin(), p.end());
    return out;
}

// ---------------------------------------------------------------------------
// Synthetic NLI grammar
//
//   sentence := "the" NOUN ["never"] PREDICATE ["in"|"near" "the" PLACE]
//
// Predicates are grouped into independent domains. Within a domain every
// specific predicate implies the general one, and the antonym implies its
// negation. Predicates of different domains say nothing about each other.

struct PredicateDomain {
    std::string general;
    std::vector<std::string> specific;
    std::string antonym;
};

struct SyntheticLexicon {
    std::vector<std::string> persons;
    std::vector<std::string> animals;
    std::string person_hypernym;
    std::string animal_hypernym;
    std::vector<PredicateDomain> domains;
    std::vector<std::string> places;
    std::vector<std::string> function_words;  // "the", "never", prepositions

    static const SyntheticLexicon& standard() {
        static const SyntheticLexicon lex{
            {"man", "woman", "boy", "girl", "teacher", "doctor", "farmer", "singer", "baker", "pilot"},
            {"dog", "cat", "horse", "bird", "rabbit", "goat", "cow", "duck"},
            "person",
            "animal",
            {
                {"moves", {"runs", "jumps", "dances", "climbs", "swims"}, "halts"},
                {"eats", {"chews", "devours", "nibbles", "munches", "gobbles"}, "fasts"},
                {"talks", {"shouts", "whispers", "chats", "mumbles", "rambles"}, "hushes"},
                {"cleans", {"scrubs", "wipes", "washes", "sweeps", "polishes"}, "litters"},
                {"works", {"builds", "paints", "writes", "cooks", "repairs"}, "idles"},
            },
            {"park", "garden", "street", "kitchen", "field", "house", "river", "beach"},
            {"the", "never", "in", "near"},
        };
        return lex;
    }

    /// The first `grammar_size` subject nouns, alternating persons and animals.
    std::vector<std::string> subjects(std::size_t grammar_size) const {
        std::vector<std::string> out;
        for (std::size_t i = 0; out.size() < grammar_size && (i < persons.size() || i < animals.size()); ++i) {
            if (i < persons.size()) out.push_back(persons[i]);
            if (out.size() < grammar_size && i < animals.size()) out.push_back(animals[i]);
        }
        return out;
    }

    const std::string& hypernym(const std::string& noun) const {
        if (std::find(persons.begin(), persons.end(), noun) != persons.end()) return person_hypernym;
        if (std::find(animals.begin(), animals.end(), noun) != animals.end()) return animal_hypernym;
        throw ArgumentError("'" + noun + "' is not a subject noun");
    }

    /// Every word the grammar can emit, in a fixed order.
    std::vector<std::string> words() const {
        std::vector<std::string> out = function_words;
        out.insert(out.end(), persons.begin(), persons.end());
        out.insert(out.end(), animals.begin(), animals.end());
        out.push_back(person_hypernym);
        out.push_back(animal_hypernym);
        for (const auto& d : domains) {
            out.push_back(d.general);
            out.insert(out.end(), d.specific.begin(), d.specific.end());
            out.push_back(d.antonym);
        }
        out.insert(out.end(), places.begin(), places.end());
        return out;
    }
};

namespace detail {

inline std::size_t uniform_index(std::mt19937_64& rng, std::size_t n) {
    return std::uniform_int_distribution<std::size_t>(0, n - 1)(rng);
}

inline bool coin(std::mt19937_64& rng, double p) { return std::uniform_real_distribution<double>(0.0, 1.0)(rng) < p; }

inline std::string sentence(const std::string& noun, bool negated, const std::string& predicate,
                            const std::string& location) {
    std::string s = "the " + noun + (negated ? " never " : " ") + predicate;
    if (!location.empty()) s += " " + location;
    return s;
}

}  // namespace detail

/// Template-generated NLI pairs whose labels follow from the grammar's
/// semantics. Labels cycle through the three classes before shuffling, so
/// each class count is within one of n / 3.
inline std::vector<NliExample> gen_synthetic_nli(std::uint64_t seed, std::size_t n, std::size_t grammar_size) {
    if (n < 3) throw ArgumentError("gen_synthetic_nli needs n >= 3");
    if (grammar_size < 10) throw ArgumentError("gen_synthetic_nli needs grammar_size >= 10");
    const auto& lex = SyntheticLexicon::standard();
    const auto nouns = lex.subjects(grammar_size);
    std::mt19937_64 rng(seed);
    using detail::coin;
    using detail::uniform_index;

    std::vector<NliExample> out;
    out.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        const auto label = static_cast<NliLabel>(i % 3);
        const auto& noun = nouns[uniform_index(rng, nouns.size())];
        const std::size_t dom = uniform_index(rng, lex.domains.size());
        const auto& domain = lex.domains[dom];
        const auto& verb = domain.specific[uniform_index(rng, domain.specific.size())];
        std::string location;
        if (coin(rng, 0.5)) {
            location = std::string(coin(rng, 0.5) ? "in" : "near") + " the " + lex.places[uniform_index(rng, lex.places.size())];
        }
        const std::string premise = detail::sentence(noun, false, verb, location);

        const std::string& hyp_noun = coin(rng, 0.5) ? noun : lex.hypernym(noun);
        const std::string hyp_loc = coin(rng, 0.5) ? location : std::string();
        std::string hypothesis;
        switch (label) {
            case NliLabel::Entailment:
                hypothesis = detail::sentence(hyp_noun, false, coin(rng, 0.7) ? domain.general : verb, hyp_loc);
                break;
            case NliLabel::Contradiction: {
                const std::size_t form = uniform_index(rng, 3);
                if (form == 0) {
                    hypothesis = detail::sentence(hyp_noun, true, domain.general, hyp_loc);
                } else if (form == 1) {
                    hypothesis = detail::sentence(hyp_noun, true, verb, hyp_loc);
                } else {
                    hypothesis = detail::sentence(hyp_noun, false, domain.antonym, hyp_loc);
                }
                break;
            }
            case NliLabel::Neutral: {
                std::size_t other = uniform_index(rng, lex.domains.size() - 1);
                if (other >= dom) ++other;
                const auto& od = lex.domains[other];
                const std::size_t form = uniform_index(rng, 3);
                if (form == 0) {
                    hypothesis = detail::sentence(hyp_noun, coin(rng, 0.3), od.general, hyp_loc);
                } else if (form == 1) {
                    hypothesis = detail::sentence(hyp_noun, coin(rng, 0.3),
                                                  od.specific[uniform_index(rng, od.specific.size())], hyp_loc);
                } else {
                    hypothesis = detail::sentence(hyp_noun, false, od.antonym, hyp_loc);
                }
                break;
            }
        }
        out.push_back({premise, hypothesis, label});
    }
    std::shuffle(out.begin(), out.end(), rng);
    return out;
}

/// Distinct sentences drawn from generated NLI pairs (premises and hypotheses).
inline std::vector<std::string> gen_synthetic_sentences(std::uint64_t seed, std::size_t n, std::size_t grammar_size) {
    std::vector<std::string> out;
    std::set<std::string> seen;
    std::uint64_t round = 0;
    while (out.size() < n) {
        const auto batch = gen_synthetic_nli(seed + 7919 * round++, std::max<std::size_t>(n, 3), grammar_size);
        for (const auto& ex : batch) {
            for (const auto* s : {&ex.premise, &ex.hypothesis}) {
                if (out.size() < n && seen.insert(*s).second) out.push_back(*s);
            }
        }
        if (round > 64) throw DataError("grammar too small for " + std::to_string(n) + " distinct sentences");
    }
    return out;
}

// ---------------------------------------------------------------------------
// Synthetic aspect-based review corpus (seven topics, two sentiments)

struct AbsaTopic {
    std::string name;
    std::vector<std::string> aspects;
    std::vector<std::string> positive;
    std::vector<std::string> negative;
};

inline const std::vector<AbsaTopic>& absa_topics() {
    static const std::vector<AbsaTopic> topics{
        {"cleanliness", {"room", "bathroom", "sheets"}, {"clean", "spotless"}, {"dirty", "filthy"}},
        {"comfort", {"bed", "pillow", "mattress"}, {"comfortable", "cozy"}, {"hard", "lumpy"}},
        {"amenities", {"pool", "gym", "spa"}, {"great", "modern"}, {"broken", "closed"}},
        {"staff", {"receptionist", "waiter", "manager"}, {"friendly", "helpful"}, {"rude", "unhelpful"}},
        {"value", {"price", "rate", "bill"}, {"fair", "cheap"}, {"expensive", "overpriced"}},
        {"wifi", {"wifi", "internet", "connection"}, {"fast", "reliable"}, {"slow", "unreliable"}},
        {"location", {"area", "neighborhood", "view"}, {"central", "quiet"}, {"remote", "noisy"}},
    };
    return topics;
}

inline std::vector<std::string> absa_words() {
    std::vector<std::string> out{"the", "was", "very"};
    for (const auto& t : absa_topics()) {
        for (const auto* list : {&t.aspects, &t.positive, &t.negative}) out.insert(out.end(), list->begin(), list->end());
    }
    return out;
}

/// `per_cell` reviews for every (topic, sentiment) pair.
inline std::vector<AbsaExample> gen_synthetic_absa(std::uint64_t seed, std::size_t per_cell) {
    std::mt19937_64 rng(seed);
    std::vector<AbsaExample> out;
    for (const auto& topic : absa_topics()) {
        for (const auto sentiment : {Sentiment::Positive, Sentiment::Negative}) {
            const auto& adjectives = sentiment == Sentiment::Positive ? topic.positive : topic.negative;
            for (std::size_t i = 0; i < per_cell; ++i) {
                std::string text = "the " + topic.aspects[detail::uniform_index(rng, topic.aspects.size())] + " was ";
                if (detail::coin(rng, 0.5)) text += "very ";
                text += adjectives[detail::uniform_index(rng, adjectives.size())];
                out.push_back({std::move(text), topic.name, sentiment, "test"});
            }
        }
    }
    std::shuffle(out.begin(), out.end(), rng);
    return out;
}

// ---------------------------------------------------------------------------
// Cipher language

/// Injective word substitution defining a synthetic target language.
struct CipherSpec {
    std::uint64_t seed = 0;
    std::map<std::string, std::string> substitution;

    /// Maps every word to a fresh pseudo-word that collides with neither
    /// the source words nor another image.
    static CipherSpec generate(const std::vector<std::string>& words, std::uint64_t seed) {
        static const char* kOnsets[] = {"b", "d", "f", "g", "k", "l", "m", "n", "p", "r", "s", "t", "v", "z"};
        static const char* kVowels[] = {"a", "e", "i", "o", "u"};
        std::mt19937_64 rng(seed);
        std::set<std::string> taken(words.begin(), words.end());
        CipherSpec spec;
        spec.seed = seed;
        for (const auto& w : words) {
            if (spec.substitution.count(w)) continue;
            std::string image;
            do {
                image.clear();
                const std::size_t syllables = 2 + detail::uniform_index(rng, 2);
                for (std::size_t s = 0; s < syllables; ++s) {
                    image += kOnsets[detail::uniform_index(rng, std::size(kOnsets))];
                    image += kVowels[detail::uniform_index(rng, std::size(kVowels))];
                }
            } while (!taken.insert(image).second);
            spec.substitution.emplace(w, image);
        }
        return spec;
    }

    static CipherSpec identity(const std::vector<std::string>& words) {
        CipherSpec spec;
        for (const auto& w : words) spec.substitution.emplace(w, w);
        return spec;
    }

    bool injective() const {
        std::set<std::string> images;
        for (const auto& [k, v] : substitution) {
            if (!images.insert(v).second) return false;
        }
        return true;
    }

    CipherSpec inverse() const {
        CipherSpec inv;
        inv.seed = seed;
        for (const auto& [k, v] : substitution) {
            if (!inv.substitution.emplace(v, k).second) throw DataError("cipher is not injective");
        }
        return inv;
    }

    std::vector<std::string> images() const {
        std::vector<std::string> out;
        for (const auto& [k, v] : substitution) out.push_back(v);
        return out;
    }

    /// Word-wise substitution; output words are joined by single spaces.
    std::string apply(std::string_view sentence, bool passthrough = false) const {
        std::string out;
        for (const auto& word : split_whitespace(sentence)) {
            auto it = substitution.find(word);
            if (it == substitution.end() && !passthrough) {
                throw CoverageError("word '" + word + "' has no cipher image");
            }
            if (!out.empty()) out += ' ';
            out += it == substitution.end() ? word : it->second;
        }
        return out;
    }

    /// Two columns: word \t image. The seed is not persisted.
    void save(const std::filesystem::path& path) const {
        detail::write_atomically(path, [&](std::ostream& out) {
            for (const auto& [k, v] : substitution) out << k << '\t' << v << '\n';
        });
    }

    static CipherSpec load(const std::filesystem::path& path) {
        CipherSpec spec;
        detail::read_tsv(path, 2, [&](std::vector<std::string>& c, const std::string& where) {
            if (!spec.substitution.emplace(c[0], c[1]).second) throw ParseError(where + ": duplicate word '" + c[0] + "'");
        });
        if (!spec.injective()) throw DataError(path.string() + ": substitution is not injective");
        return spec;
    }
};

inline std::vector<NliExample> apply_cipher(const std::vector<NliExample>& data, const CipherSpec& spec,
                                            bool passthrough = false) {
    std::vector<NliExample> out;
    out.reserve(data.size());
    for (const auto& ex : data) {
        out.push_back({spec.apply(ex.premise, passthrough), spec.apply(ex.hypothesis, passthrough), ex.label});
    }
    return out;
}

/// (source, ciphered source) pairs.
inline std::vector<ParallelPair> apply_cipher(const std::vector<std::string>& sentences, const CipherSpec& spec,
                                              bool passthrough = false) {
    std::vector<ParallelPair> out;
    out.reserve(sentences.size());
    for (const auto& s : sentences) out.push_back({s, spec.apply(s, passthrough)});
    return out;
}

// ---------------------------------------------------------------------------
// Balancing

/// Keeps the positives (optionally subsampled to `positive_limit`) and draws
/// k negatives per positive uniformly without replacement. The result is
/// shuffled; identical seeds give identical samples.
template <class Example, class IsPositive>
std::vector<Example> balance_sample(const std::vector<Example>& data, IsPositive is_positive, std::size_t k,
                                    std::uint64_t seed, std::optional<std::size_t> positive_limit = std::nullopt) {
    if (k == 0) throw ArgumentError("balance ratio must be 1:k with k >= 1");
    std::vector<std::size_t> pos;
    std::vector<std::size_t> neg;
    for (std::size_t i = 0; i < data.size(); ++i) (is_positive(data[i]) ? pos : neg).push_back(i);
    std::mt19937_64 rng(seed);
    if (positive_limit && pos.size() > *positive_limit) {
        std::shuffle(pos.begin(), pos.end(), rng);
        pos.resize(*positive_limit);
        std::sort(pos.begin(), pos.end());
    }
    if (pos.empty()) throw DataError("balance_sample: no positive examples");
    const std::size_t wanted = k * pos.size();
    if (neg.size() < wanted) {
        throw DataError("balance_sample: need " + std::to_string(wanted) + " negatives, have " +
                        std::to_string(neg.size()) + " (deficit " + std::to_string(wanted - neg.size()) + ")");
    }
    std::shuffle(neg.begin(), neg.end(), rng);
    neg.resize(wanted);
    std::vector<std::size_t> chosen = pos;
    chosen.insert(chosen.end(), neg.begin(), neg.end());
    std::shuffle(chosen.begin(), chosen.end(), rng);
    std::vector<Example> out;
    out.reserve(chosen.size());
    for (const auto i : chosen) out.push_back(data[i]);
    return out;
}

}  // namespace kdnli

#endif  // KDNLI_DATA_HPP_
