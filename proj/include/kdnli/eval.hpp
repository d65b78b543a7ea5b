#ifndef KDNLI_EVAL_HPP_
#define KDNLI_EVAL_HPP_

#include <algorithm>
#include <concepts>
#include <cstddef>
#include <cstdint>
#include <cstdio>
#include <numeric>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "kdnli/data.hpp"
#include "kdnli/error.hpp"
#include "kdnli/head.hpp"

namespace kdnli {

// ---------------------------------------------------------------------------
// Metrics

namespace detail {

/// Non-negative fraction in lowest terms; nullopt signals overflow.
struct Fraction {
    std::int64_t num = 0;
    std::int64_t den = 1;

    static Fraction make(std::int64_t num, std::int64_t den) {
        if (den == 0) return {0, 1};  // 0/0 scores 0
        const auto g = std::gcd(num, den);
        return {num / g, den / g};
    }

    double value() const { return double(num) / double(den); }
};

inline std::optional<Fraction> add(const Fraction& a, const Fraction& b) {
    std::int64_t lhs, rhs, den, num;
    if (__builtin_mul_overflow(a.num, b.den, &lhs) || __builtin_mul_overflow(b.num, a.den, &rhs) ||
        __builtin_mul_overflow(a.den, b.den, &den) || __builtin_add_overflow(lhs, rhs, &num)) {
        return std::nullopt;
    }
    return Fraction::make(num, den);
}

inline std::string format_double(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.6f", v);
    return buf;
}

}  // namespace detail

struct EvalReport {
    std::string task;
    std::vector<std::string> class_names;
    std::size_t n = 0;
    double accuracy = 0.0;
    std::vector<double> per_class_f1;
    double min_f1 = 0.0;
    double macro_avg_f1 = 0.0;
    std::vector<std::vector<std::size_t>> confusion;  // [gold][predicted]

    bool operator==(const EvalReport&) const = default;

    /// Human-readable report.
    std::string to_text() const {
        std::ostringstream os;
        os << "task: " << task << "\n";
        os << "examples: " << n << "\n";
        os << "accuracy: " << detail::format_double(accuracy) << "\n";
        os << "min_f1: " << detail::format_double(min_f1) << "\n";
        os << "macro_avg_f1: " << detail::format_double(macro_avg_f1) << "\n";
        for (std::size_t c = 0; c < class_names.size(); ++c) {
            os << "f1[" << class_names[c] << "]: " << detail::format_double(per_class_f1[c]) << "\n";
        }
        os << "confusion (rows = gold, cols = predicted):\n";
        for (std::size_t g = 0; g < confusion.size(); ++g) {
            os << "  " << class_names[g] << ":";
            for (const auto v : confusion[g]) os << ' ' << v;
            os << "\n";
        }
        return os.str();
    }

    /// Single-line machine-readable record.
    std::string to_record() const {
        std::ostringstream os;
        os << "task=" << task << " n=" << n << " accuracy=" << detail::format_double(accuracy)
           << " min_f1=" << detail::format_double(min_f1) << " macro_f1=" << detail::format_double(macro_avg_f1)
           << " per_class_f1=";
        for (std::size_t c = 0; c < class_names.size(); ++c) {
            os << (c ? "," : "") << class_names[c] << ':' << detail::format_double(per_class_f1[c]);
        }
        return os.str();
    }
};

/// Accuracy, per-class F1 = 2TP / (2TP + FP + FN) (0 when the class never
/// occurs in predictions or golds), Min F1 and Macro-Avg F1. Values are
/// computed as exact fractions and rounded once.
inline EvalReport evaluate(std::span<const std::size_t> predictions, std::span<const std::size_t> golds,
                           const std::vector<std::string>& class_names, std::string task = "") {
    if (predictions.size() != golds.size()) {
        throw DataError("evaluate: " + std::to_string(predictions.size()) + " predictions for " +
                        std::to_string(golds.size()) + " golds");
    }
    if (predictions.empty()) throw DataError("evaluate: no examples");
    const std::size_t k = class_names.size();
    if (k == 0) throw DataError("evaluate: empty class set");

    EvalReport r;
    r.task = std::move(task);
    r.class_names = class_names;
    r.n = predictions.size();
    r.confusion.assign(k, std::vector<std::size_t>(k, 0));
    std::size_t correct = 0;
    for (std::size_t i = 0; i < predictions.size(); ++i) {
        if (predictions[i] >= k || golds[i] >= k) throw LabelError("evaluate: label outside class set");
        ++r.confusion[golds[i]][predictions[i]];
        if (predictions[i] == golds[i]) ++correct;
    }
    r.accuracy = detail::Fraction::make(std::int64_t(correct), std::int64_t(r.n)).value();

    std::optional<detail::Fraction> macro = detail::Fraction{0, 1};
    double macro_fallback = 0.0;
    for (std::size_t c = 0; c < k; ++c) {
        std::int64_t tp = std::int64_t(r.confusion[c][c]);
        std::int64_t fp = 0;
        std::int64_t fn = 0;
        for (std::size_t o = 0; o < k; ++o) {
            if (o == c) continue;
            fp += std::int64_t(r.confusion[o][c]);
            fn += std::int64_t(r.confusion[c][o]);
        }
        const auto f1 = detail::Fraction::make(2 * tp, 2 * tp + fp + fn);
        r.per_class_f1.push_back(f1.value());
        macro_fallback += f1.value();
        if (macro) macro = detail::add(*macro, f1);
    }
    if (macro && !__builtin_mul_overflow(macro->den, std::int64_t(k), &macro->den)) {
        r.macro_avg_f1 = detail::Fraction::make(macro->num, macro->den).value();
    } else {
        r.macro_avg_f1 = macro_fallback / double(k);
    }
    r.min_f1 = *std::min_element(r.per_class_f1.begin(), r.per_class_f1.end());
    return r;
}

// ---------------------------------------------------------------------------
// Task adapters

enum class Task : std::uint8_t { Nli, Rte, Sa, Tr, Absa };

inline std::string_view to_string(Task task) {
    switch (task) {
        case Task::Nli: return "nli";
        case Task::Rte: return "rte";
        case Task::Sa: return "sa";
        case Task::Tr: return "tr";
        case Task::Absa: return "absa";
    }
    return "?";
}

inline std::optional<Task> parse_task(std::string_view s) {
    for (const auto t : {Task::Nli, Task::Rte, Task::Sa, Task::Tr, Task::Absa}) {
        if (to_string(t) == s) return t;
    }
    return std::nullopt;
}

/// Two-class outcome. Index 0 is the entailment side, index 1 the other
/// side (No-Entailment for RTE, Contradiction for SA/TR/ABSA).
enum class BinaryLabel : std::uint8_t { Entailment = 0, Other = 1 };

struct LabelMapping {
    Task task = Task::Rte;
    BinaryLabel neutral_maps_to = BinaryLabel::Other;
    BinaryLabel contradiction_maps_to = BinaryLabel::Other;

    /// The fixed mapping table: RTE sends Neutral and Contradiction to
    /// No-Entailment, SA and TR send Neutral to Entailment, ABSA sends
    /// Neutral to Contradiction.
    static LabelMapping for_task(Task task) {
        switch (task) {
            case Task::Rte: return {task, BinaryLabel::Other, BinaryLabel::Other};
            case Task::Sa:
            case Task::Tr: return {task, BinaryLabel::Entailment, BinaryLabel::Other};
            case Task::Absa: return {task, BinaryLabel::Other, BinaryLabel::Other};
            case Task::Nli: break;
        }
        throw ArgumentError("the 3-class NLI task has no two-label mapping");
    }

    /// Every mapping with Entailment fixed and Neutral sent either way.
    static std::vector<LabelMapping> variants(Task task) {
        return {{task, BinaryLabel::Entailment, BinaryLabel::Other}, {task, BinaryLabel::Other, BinaryLabel::Other}};
    }

    BinaryLabel map(NliLabel label) const {
        switch (label) {
            case NliLabel::Entailment: return BinaryLabel::Entailment;
            case NliLabel::Neutral: return neutral_maps_to;
            case NliLabel::Contradiction: return contradiction_maps_to;
        }
        return BinaryLabel::Other;
    }

    std::vector<std::string> class_names() const {
        return task == Task::Rte ? std::vector<std::string>{"entailment", "no_entailment"}
                                 : std::vector<std::string>{"entailment", "contradiction"};
    }

    std::string describe() const {
        const auto names = class_names();
        return "neutral->" + names[std::size_t(neutral_maps_to)] + ",contradiction->" +
               names[std::size_t(contradiction_maps_to)];
    }
};

inline BinaryLabel map_prediction(const NliPrediction& pred, const LabelMapping& mapping) {
    return mapping.map(pred.predicted_label);
}

struct HypothesisTemplate {
    Task task = Task::Sa;
    std::string hypothesis_text;

    /// Default fixed hypotheses for the review tasks.
    static HypothesisTemplate default_for(Task task) {
        switch (task) {
            case Task::Sa: return {task, "Sono soddisfatto"};
            case Task::Tr: return {task, "Parlo di pulizia"};
            case Task::Absa: return {task, "La camera \xC3\xA8 pulita"};
            default: break;
        }
        throw ArgumentError("no default hypothesis for task " + std::string(to_string(task)));
    }
};

/// Gold outcome of a review for a zero-shot task.
inline BinaryLabel review_gold(const AbsaExample& ex, Task task, std::string_view target_topic) {
    bool positive = false;
    switch (task) {
        case Task::Sa: positive = ex.sentiment == Sentiment::Positive; break;
        case Task::Tr: positive = ex.topic == target_topic; break;
        case Task::Absa: positive = ex.topic == target_topic && ex.sentiment == Sentiment::Positive; break;
        default: throw ArgumentError("task " + std::string(to_string(task)) + " is not a review task");
    }
    return positive ? BinaryLabel::Entailment : BinaryLabel::Other;
}

/// Any callable (premise, hypothesis) -> NliPrediction.
template <class P>
concept PairPredictor = requires(const P& p, std::string_view a, std::string_view b) {
    { p(a, b) } -> std::convertible_to<NliPrediction>;
};

/// Each review is the premise, the template the hypothesis; predictions go
/// through argmax and the mapping before scoring.
template <PairPredictor Predictor>
EvalReport zero_shot_task(const Predictor& predictor, const std::vector<AbsaExample>& dataset,
                          const HypothesisTemplate& hypothesis, const LabelMapping& mapping,
                          std::string_view target_topic = "cleanliness") {
    if (dataset.empty()) throw DataError("zero_shot_task: empty dataset");
    if (split_whitespace(hypothesis.hypothesis_text).empty()) throw ArgumentError("empty hypothesis template");
    std::vector<std::size_t> preds;
    std::vector<std::size_t> golds;
    for (const auto& ex : dataset) {
        preds.push_back(std::size_t(map_prediction(predictor(ex.text, hypothesis.hypothesis_text), mapping)));
        golds.push_back(std::size_t(review_gold(ex, hypothesis.task, target_topic)));
    }
    return evaluate(preds, golds, mapping.class_names(), std::string(to_string(hypothesis.task)));
}

template <PairPredictor Predictor>
EvalReport evaluate_nli(const Predictor& predictor, const std::vector<NliExample>& dataset) {
    std::vector<std::size_t> preds;
    std::vector<std::size_t> golds;
    for (const auto& ex : dataset) {
        preds.push_back(std::size_t(predictor(ex.premise, ex.hypothesis).predicted_label));
        golds.push_back(std::size_t(ex.label));
    }
    return evaluate(preds, golds, {"entailment", "neutral", "contradiction"}, "nli");
}

template <PairPredictor Predictor>
EvalReport evaluate_rte(const Predictor& predictor, const std::vector<RteExample>& dataset,
                        const LabelMapping& mapping = LabelMapping::for_task(Task::Rte)) {
    std::vector<std::size_t> preds;
    std::vector<std::size_t> golds;
    for (const auto& ex : dataset) {
        preds.push_back(std::size_t(map_prediction(predictor(ex.premise, ex.hypothesis), mapping)));
        golds.push_back(ex.label == RteLabel::Entailment ? 0 : 1);
    }
    return evaluate(preds, golds, mapping.class_names(), "rte");
}

}  // namespace kdnli

#endif  // KDNLI_EVAL_HPP_
