// Acceptance run: one PASS/FAIL line per criterion, tolerances fixed below.

#include <CLI11.hpp>

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <random>
#include <set>
#include <sstream>

#include "support.hpp"

using namespace kdnli;
using namespace kdnli::testing;
namespace fs = std::filesystem;

namespace {

constexpr double kGradTolerance = 1e-4;
constexpr double kGradStep = 1e-5;
constexpr std::uint64_t kGradSeeds = 20;
constexpr double kKdLossTolerance = 1e-9;
constexpr double kFixedPointTolerance = 1e-6;
constexpr double kSourceAccuracyFloor = 0.90;
constexpr double kTransferGap = 0.05;
constexpr double kParityTolerance = 1e-10;

struct Outcome {
    bool pass;
    std::string detail;
};

struct Criterion {
    int id;
    std::string name;
    std::function<Outcome()> run;
};

std::string fmt(double v) {
    std::ostringstream out;
    out << std::setprecision(6) << v;
    return out.str();
}

// 1. Analytic gradients of the full pipeline against central differences.
Outcome gradient_check() {
    double worst = 0.0;
    for (std::uint64_t seed = 0; seed < kGradSeeds; ++seed) {
        const auto model = tiny_model<double>(100 + seed, 4);
        const auto ex = gen_synthetic_nli(seed, 3, 10)[seed % 3];
        const auto loss = [&] { return cross_entropy(model.forward(ex.premise, ex.hypothesis), std::size_t(ex.label)); };
        std::vector<Tensor<double>> params;
        for (const auto& p : model.params()) params.push_back(p.tensor);
        worst = std::max(worst, max_gradient_error(loss, params, kGradStep));
    }
    return {worst < kGradTolerance, "max rel err " + fmt(worst) + " over " + std::to_string(kGradSeeds) +
                                        " seeds (tol " + fmt(kGradTolerance) + ")"};
}

// 2. kd_loss against a double loop over batch and components.
Outcome kd_loss_oracle() {
    std::mt19937_64 rng(2);
    double worst = 0.0;
    for (int trial = 0; trial < 100; ++trial) {
        const std::size_t b = 1 + rng() % 24;
        const std::size_t d = 4 + rng() % 61;
        std::vector<Tensor<double>> t, s;
        double oracle = 0.0;
        for (std::size_t i = 0; i < b; ++i) {
            const auto tv = random_values(d, rng());
            const auto sv = random_values(d, rng());
            for (std::size_t j = 0; j < d; ++j) oracle += (tv[j] - sv[j]) * (tv[j] - sv[j]);
            t.push_back(Tensor<double>::vector(tv));
            s.push_back(Tensor<double>::vector(sv));
        }
        oracle /= double(b * d);
        worst = std::max(worst, std::abs(kd_loss(t, s).item() - oracle));
    }
    return {worst <= kKdLossTolerance, "max abs err " + fmt(worst) + " on 100 batches (tol " + fmt(kKdLossTolerance) + ")"};
}

// 3. Student == teacher on an identity corpus stays put.
Outcome identity_fixed_point() {
    const auto vocab = synthetic_vocab();
    const SentenceEncoder<double> source(vocab, EncoderWeights<double>::init(tiny_config(vocab.size(), 16, 2, 4), 3));
    auto setup = TeacherStudentSetup<double>::from_teacher(source);
    std::vector<ParallelPair> corpus;
    for (const auto& s : gen_synthetic_sentences(6, 96, 18)) corpus.push_back({s, s});
    const double initial = corpus_kd_loss(corpus, setup, 24);
    distill(setup, corpus, hyper(24, 1, 2e-5, 4, 0.0));
    double drift = 0.0;
    const auto t = setup.teacher.weights().params();
    const auto s = setup.student.weights().params();
    for (std::size_t k = 0; k < t.size(); ++k) {
        for (std::size_t i = 0; i < t[k].tensor.size(); ++i) drift = std::max(drift, std::abs(s[k].tensor[i] - t[k].tensor[i]));
    }
    return {initial == 0.0 && drift <= kFixedPointTolerance,
            "initial loss " + fmt(initial) + ", max weight drift " + fmt(drift) + " (tol " + fmt(kFixedPointTolerance) + ")"};
}

// 4. Source-trained head transfers to ciphered inputs through the distilled student.
Outcome synthetic_transfer() {
    const auto words = SyntheticLexicon::standard().words();
    const auto cipher = CipherSpec::generate(words, 3);
    Vocabulary vocab(words);
    for (const auto& w : cipher.images()) vocab.add(w);

    const auto train = gen_synthetic_nli(1, 3000, 18);
    const auto test = gen_synthetic_nli(2, 600, 18);
    const EncoderConfig cfg{.vocab_size = vocab.size(), .embed_dim = 64, .num_layers = 2, .num_heads = 4,
                            .ffn_dim = 128, .max_tokens_length = 16};
    NliModel<float> model{SentenceEncoder<float>(vocab, EncoderWeights<float>::init(cfg, 1)),
                          HeadWeights<float>::init(HeadWeights<float>::desk_dims(64), 2)};
    TrainOptions options;
    options.seed = 3;
    finetune_nli(model, train, TrainingHyperParams{.batch_size = 8, .max_sentence_length = 256, .max_tokens_length = 16,
                                                   .epochs = 16, .learning_rate = 5e-4, .epsilon = 1e-8,
                                                   .weight_decay = 0.0, .accumulation_step = 1},
                 options);
    const double source = accuracy(model, test);

    // The head is frozen from here on; only the student encoder moves.
    const auto corpus = apply_cipher(gen_synthetic_sentences(4, 2000, 18), cipher);
    auto setup = TeacherStudentSetup<float>::from_teacher(model.encoder);
    distill(setup, corpus, TrainingHyperParams{.batch_size = 24, .max_sentence_length = 256, .max_tokens_length = 16,
                                               .epochs = 6, .learning_rate = 5e-3, .epsilon = 1e-6,
                                               .weight_decay = 1e-2, .accumulation_step = 4});
    const auto target_model = assemble_target_nli(setup.student, model.head);
    const double target = accuracy(target_model, apply_cipher(test, cipher));
    const bool pass = source >= kSourceAccuracyFloor && target >= source - kTransferGap;
    return {pass, "source acc " + fmt(source) + " (floor " + fmt(kSourceAccuracyFloor) + "), ciphered acc " + fmt(target) +
                      " (floor source-" + fmt(kTransferGap) + ")"};
}

// 5. Translate-train with the identity translator equals plain fine-tuning.
Outcome identity_translation_parity() {
    const auto data = gen_synthetic_nli(3, 40, 10);
    auto a = tiny_model<double>(4, 8);
    auto b = a.deep_copy();
    TrainOptions options;
    options.seed = 9;
    const auto h = hyper(8, 2, 4e-5, 4, 1e-4);
    const auto plain = finetune_nli(a, data, h, options);
    const auto translated = finetune_translated(b, data, IdentityTranslator{}, h, options);
    double worst = plain.step_losses.size() == translated.step_losses.size() ? 0.0 : 1.0;
    for (std::size_t i = 0; i < std::min(plain.step_losses.size(), translated.step_losses.size()); ++i) {
        worst = std::max(worst, std::abs(plain.step_losses[i] - translated.step_losses[i]));
    }
    const auto pa = a.params();
    const auto pb = b.params();
    for (std::size_t k = 0; k < pa.size(); ++k) {
        for (std::size_t i = 0; i < pa[k].tensor.size(); ++i) worst = std::max(worst, std::abs(pa[k].tensor[i] - pb[k].tensor[i]));
    }
    return {worst <= kParityTolerance, "max loss/weight diff " + fmt(worst) + " (tol " + fmt(kParityTolerance) + ")"};
}

// 6. Metrics against exact rational arithmetic.
Outcome metric_oracle() {
    std::mt19937_64 rng(6);
    std::size_t mismatches = 0;
    for (int trial = 0; trial < 100; ++trial) {
        const std::size_t k = 2 + rng() % 4;
        std::vector<std::vector<long long>> m(k, std::vector<long long>(k));
        std::vector<std::size_t> preds, golds;
        for (std::size_t g = 0; g < k; ++g) {
            for (std::size_t p = 0; p < k; ++p) {
                m[g][p] = rng() % 3 == 0 ? 0 : (long long)(rng() % 25);
                for (long long n = 0; n < m[g][p]; ++n) {
                    golds.push_back(g);
                    preds.push_back(p);
                }
            }
        }
        if (preds.empty()) {
            golds.push_back(0);
            preds.push_back(0);
            m[0][0] = 1;
        }
        const auto r = evaluate(preds, golds, std::vector<std::string>(k, "c"));
        // F1 = 2PR/(P+R) with P = tp/pred and R = tp/gold, kept as num/den.
        long long total = 0, correct = 0;
        long long macro_num = 0, macro_den = 1;
        for (std::size_t c = 0; c < k; ++c) {
            long long tp = m[c][c], pred = 0, gold = 0;
            for (std::size_t o = 0; o < k; ++o) {
                pred += m[o][c];
                gold += m[c][o];
                total += m[c][o];
            }
            correct += tp;
            long long num = 0, den = 1;
            if (tp > 0) {
                num = 2 * tp * tp;
                den = tp * gold + tp * pred;
                const auto g = std::gcd(num, den);
                num /= g;
                den /= g;
            }
            if (r.per_class_f1[c] != double(num) / double(den)) ++mismatches;
            macro_num = macro_num * den + num * macro_den;
            macro_den *= den;
            const auto g = std::gcd(macro_num, macro_den);
            macro_num /= g;
            macro_den /= g;
        }
        macro_den *= (long long)k;
        const auto g = std::gcd(macro_num, macro_den);
        if (r.macro_avg_f1 != double(macro_num / g) / double(macro_den / g)) ++mismatches;
        if (r.accuracy != double(correct / std::gcd(correct, total)) / double(total / std::gcd(correct, total))) ++mismatches;
        if (r.min_f1 > r.macro_avg_f1) ++mismatches;
    }
    return {mismatches == 0, std::to_string(mismatches) + " mismatches on 100 random matrices (exact)"};
}

// 7. Neutral mapping per task.
Outcome mapping_table() {
    using B = BinaryLabel;
    const std::vector<std::tuple<Task, std::array<B, 3>>> table{
        {Task::Rte, {B::Entailment, B::Other, B::Other}},
        {Task::Sa, {B::Entailment, B::Entailment, B::Other}},
        {Task::Tr, {B::Entailment, B::Entailment, B::Other}},
        {Task::Absa, {B::Entailment, B::Other, B::Other}},
    };
    std::size_t ok = 0;
    for (const auto& [task, expected] : table) {
        for (std::size_t l = 0; l < 3; ++l) {
            NliPrediction p;
            p.probabilities[l] = 1.0;
            p.predicted_label = NliLabel(l);
            if (map_prediction(p, LabelMapping::for_task(task)) == expected[l]) ++ok;
        }
    }
    return {ok == 12, std::to_string(ok) + "/12 cells match"};
}

// 8. Full-size head and the 2d input rule.
Outcome head_topology() {
    const auto head = HeadWeights<float>::init(HeadWeights<float>::full_dims(), 8);
    const auto u = Tensor<float>::vector(std::vector<float>(768, 0.1f));
    auto vals = std::vector<float>(768);
    for (std::size_t i = 0; i < vals.size(); ++i) vals[i] = float(i % 7) * 0.05f;
    const auto v = Tensor<float>::vector(vals);
    const auto p = classify(combine_features(u, v), head);
    double total = 0.0;
    for (const double x : p.probabilities) total += x;
    bool ok = head.dims() == std::vector<std::size_t>{1536, 1024, 512, 256, 128, 64, 3} && std::abs(total - 1.0) < 1e-5;

    std::size_t checked = 0;
    for (const std::size_t d : {8, 16, 64, 768}) {
        ok = ok && HeadWeights<float>::desk_dims(d).front() == 2 * d;
        ++checked;
    }
    // A mismatched head is rejected at composition time.
    const auto small = tiny_model<float>(1, 8);
    try {
        NliModel<float> bad{small.encoder, HeadWeights<float>::init(HeadWeights<float>::desk_dims(16), 1)};
        bad.check_compatible();
        ok = false;
    } catch (const ShapeError&) {
    }
    return {ok, "dims 1536..3, forward sums to " + fmt(total) + ", 2d rule on " + std::to_string(checked) + " widths"};
}

// 9. Class-imbalance sampling on the synthetic review set.
Outcome imbalance_sampling() {
    const auto reviews = gen_synthetic_absa(9, 80);
    const auto positive = [](const AbsaExample& r) { return r.topic == "cleanliness" && r.sentiment == Sentiment::Positive; };
    std::string detail;
    bool ok = true;
    for (const std::size_t k : {1, 7, 15}) {
        const auto sample = balance_sample(reviews, positive, k, 11, std::size_t{60});
        const auto pos = std::size_t(std::count_if(sample.begin(), sample.end(), positive));
        ok = ok && pos == 60 && sample.size() - pos == 60 * k;
        detail += "1:" + std::to_string(k) + "=" + std::to_string(pos) + "/" + std::to_string(sample.size() - pos) + " ";
    }
    return {ok, detail};
}

// 10. Split inference reproduces monolithic inference without the encoder.
Outcome split_inference() {
    auto model = tiny_model<float>(10, 16);
    const auto data = gen_synthetic_nli(10, 500, 18);
    auto cache = EmbeddingCache<float>::for_encoder(model.encoder);
    for (const auto& ex : data) {
        cache.get_or_encode(ex.premise, model.encoder);
        cache.get_or_encode(ex.hypothesis, model.encoder);
    }
    const auto mono = evaluate_nli([&](std::string_view a, std::string_view b) { return model.predict_pair(a, b); }, data);
    model.encoder.reset_invocation_count();
    const auto split = evaluate_nli(CachedPredictor<float>(cache, model.head), data);
    const auto calls = model.encoder.invocation_count();
    return {split == mono && calls == 0,
            std::string(split == mono ? "reports identical" : "reports differ") + ", encoder calls " + std::to_string(calls)};
}

// 11. Two seeded CLI runs produce identical bytes.
std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), {}};
}

void write_file(const fs::path& p, const std::string& text) {
    std::ofstream out(p);
    out << text;
}

Outcome cli_determinism(const std::string& cli, const fs::path& workdir) {
    const std::string common = "batch_size=8\nmax_sentence_length=256\nmax_tokens_length=16\nepsilon=1e-8\n"
                               "embed_dim=16\nnum_layers=1\nnum_heads=2\nffn_dim=32\n";
    const std::vector<std::string> outputs{"teacher.ckpt", "student.ckpt", "report.txt", "cache.kdc"};
    std::vector<std::string> bytes[2];
    for (int run = 0; run < 2; ++run) {
        const auto dir = workdir / ("run" + std::to_string(run));
        fs::remove_all(dir);
        fs::create_directories(dir);
        write_file(dir / "nli.cfg", common + "epochs=2\nlearning_rate=1e-3\nweight_decay=0\naccumulation_step=1\n");
        write_file(dir / "kd.cfg", "batch_size=24\nmax_sentence_length=256\nmax_tokens_length=16\nepochs=1\n"
                                   "learning_rate=5e-3\nepsilon=1e-6\nweight_decay=1e-2\naccumulation_step=4\n");
        const std::string d = "'" + dir.string() + "'";
        const std::string q = "'" + cli + "'";
        const std::vector<std::string> steps{
            q + " gen-data --seed 5 --out " + d + " --train-size 120 --test-size 60 --parallel-size 96 --absa-per-cell 5",
            q + " train-nli --seed 5 --data " + d + "/nli_train.tsv --vocab " + d + "/vocab.txt --config " + d +
                "/nli.cfg --out " + d + "/teacher.ckpt",
            q + " distill --seed 5 --teacher " + d + "/teacher.ckpt --parallel " + d + "/parallel.tsv --config " + d +
                "/kd.cfg --out " + d + "/student.ckpt",
            q + " eval --model " + d + "/student.ckpt --data " + d + "/nli_test.cipher.tsv --cache " + d +
                "/cache.kdc --report " + d + "/report.txt",
        };
        for (const auto& cmd : steps) {
            const auto full = cmd + " > " + d + "/log.txt 2>&1";
            if (std::system(full.c_str()) != 0) return {false, "command failed: " + cmd};
        }
        for (const auto& name : outputs) bytes[run].push_back(slurp(dir / name));
    }
    std::size_t same = 0;
    for (std::size_t i = 0; i < outputs.size(); ++i) same += (!bytes[0][i].empty() && bytes[0][i] == bytes[1][i]) ? 1 : 0;
    return {same == outputs.size(), std::to_string(same) + "/" + std::to_string(outputs.size()) + " artifacts byte-identical"};
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"kdnli acceptance run"};
    std::string cli;
    std::string workdir = "acceptance_work";
    std::set<int> only;
    app.add_option("--cli", cli, "kdnli executable")->required()->check(CLI::ExistingFile);
    app.add_option("--workdir", workdir, "Scratch directory");
    app.add_option("--only", only, "Run just these criteria");
    CLI11_PARSE(app, argc, argv);
    fs::create_directories(workdir);

    const std::vector<Criterion> criteria{
        {1, "pipeline gradient check", gradient_check},
        {2, "kd_loss oracle", kd_loss_oracle},
        {3, "identity distillation fixed point", identity_fixed_point},
        {4, "synthetic cross-lingual transfer", synthetic_transfer},
        {5, "identity translate-train parity", identity_translation_parity},
        {6, "metric oracle", metric_oracle},
        {7, "label mapping table", mapping_table},
        {8, "classifier head topology", head_topology},
        {9, "imbalance sampling ratios", imbalance_sampling},
        {10, "split inference equivalence", split_inference},
        {11, "CLI determinism", [&] { return cli_determinism(fs::absolute(cli).string(), fs::absolute(workdir)); }},
    };

    int failures = 0;
    for (const auto& c : criteria) {
        if (!only.empty() && !only.count(c.id)) continue;
        const auto start = std::chrono::steady_clock::now();
        Outcome outcome;
        try {
            outcome = c.run();
        } catch (const std::exception& e) {
            outcome = {false, std::string("exception: ") + e.what()};
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        std::printf("%s criterion %d (%s): %s [%.1fs]\n", outcome.pass ? "PASS" : "FAIL", c.id, c.name.c_str(),
                    outcome.detail.c_str(), secs);
        std::fflush(stdout);
        failures += outcome.pass ? 0 : 1;
    }
    return failures == 0 ? 0 : 1;
}
