// kdnli command-line driver.
//
// Exit status: 0 on success, 1 on a runtime error, 2 on a usage error.
// Progress and metrics go to standard output, errors to standard error.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <set>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "kdnli.hpp"

namespace fs = std::filesystem;
using namespace kdnli;
using Real = float;

namespace {

struct Common {
    std::uint64_t seed = 0;
    bool wide = false;

    std::uint32_t width() const { return wide ? 8 : 4; }
};

void write_text(const fs::path& path, const std::string& text) {
    auto tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw Error("cannot write " + tmp.string());
        out << text;
    }
    fs::rename(tmp, path);
}

std::vector<std::string> distinct_words(const std::vector<std::string>& texts) {
    std::set<std::string> seen;
    for (const auto& t : texts) {
        for (auto& w : split_whitespace(to_lower_ascii(t))) seen.insert(std::move(w));
    }
    return {seen.begin(), seen.end()};
}

void add_config_echo(Checkpoint& ckpt, const RunConfig& cfg, const std::string& stage) {
    for (const auto& [k, v] : cfg.entries) ckpt.metadata["config." + stage + "." + k] = v;
}

NliModel<Real> fresh_model(const Vocabulary& vocab, const RunConfig& cfg, std::uint64_t seed) {
    const auto& m = cfg.model;
    EncoderConfig ec{.vocab_size = vocab.size(), .embed_dim = m.embed_dim, .num_layers = m.num_layers,
                     .num_heads = m.num_heads, .ffn_dim = m.ffn_dim, .max_tokens_length = cfg.hyper.max_tokens_length};
    auto dims = m.head_dims.empty() ? HeadWeights<Real>::desk_dims(m.embed_dim) : m.head_dims;
    NliModel<Real> model{SentenceEncoder<Real>(vocab, EncoderWeights<Real>::init(ec, seed), cfg.hyper.max_sentence_length),
                         HeadWeights<Real>::init(dims, seed + 1)};
    model.check_compatible();
    return model;
}

Vocabulary vocab_for(const std::string& vocab_path, const std::vector<NliExample>& data) {
    if (!vocab_path.empty()) return Vocabulary::load(vocab_path);
    std::vector<std::string> texts;
    for (const auto& ex : data) {
        texts.push_back(ex.premise);
        texts.push_back(ex.hypothesis);
    }
    return Vocabulary(distinct_words(texts));
}

std::unique_ptr<Translator> make_translator(const std::string& cipher, const std::string& command) {
    if (!cipher.empty() && !command.empty()) throw ArgumentError("--cipher and --translator-cmd are exclusive");
    if (!cipher.empty()) return std::make_unique<DictionaryTranslator>(CipherSpec::load(cipher));
    if (!command.empty()) return std::make_unique<SubprocessTranslator>(command);
    return std::make_unique<IdentityTranslator>();
}

TrainOptions train_options(std::uint64_t seed) {
    TrainOptions o;
    o.seed = seed;
    o.progress = &std::cout;
    return o;
}

// ---------------------------------------------------------------------------

struct GenDataArgs {
    std::string out;
    std::size_t train_size = 3000;
    std::size_t test_size = 600;
    std::size_t parallel_size = 2000;
    std::size_t grammar_size = 18;
    std::size_t absa_per_cell = 40;
};

void run_gen_data(const GenDataArgs& a, const Common& c) {
    const fs::path dir(a.out);
    fs::create_directories(dir);
    const auto& lex = SyntheticLexicon::standard();
    std::vector<std::string> source_words = lex.words();
    std::set<std::string> seen(source_words.begin(), source_words.end());
    for (const auto& w : absa_words()) {
        if (seen.insert(w).second) source_words.push_back(w);
    }
    const auto cipher = CipherSpec::generate(source_words, c.seed);

    std::vector<std::string> vocab_words = source_words;
    for (const auto& w : cipher.images()) vocab_words.push_back(w);
    Vocabulary(vocab_words).save(dir / "vocab.txt");

    const auto train = gen_synthetic_nli(c.seed + 1, a.train_size, a.grammar_size);
    const auto test = gen_synthetic_nli(c.seed + 2, a.test_size, a.grammar_size);
    save_nli(dir / "nli_train.tsv", train);
    save_nli(dir / "nli_test.tsv", test);
    save_nli(dir / "nli_test.cipher.tsv", apply_cipher(test, cipher));

    std::vector<RteExample> rte;
    for (const auto& ex : test) {
        rte.push_back({ex.premise, ex.hypothesis,
                       ex.label == NliLabel::Entailment ? RteLabel::Entailment : RteLabel::NoEntailment});
    }
    save_rte(dir / "rte_test.tsv", rte);

    cipher.save(dir / "cipher.map");
    save_parallel(dir / "parallel.tsv",
                  apply_cipher(gen_synthetic_sentences(c.seed + 3, a.parallel_size, a.grammar_size), cipher));
    save_absa(dir / "absa.tsv", gen_synthetic_absa(c.seed + 4, a.absa_per_cell));
    std::cout << "wrote synthetic corpus to " << dir.string() << " (" << train.size() << " train, " << test.size()
              << " test, " << a.parallel_size << " parallel pairs)\n";
}

struct TrainArgs {
    std::string data;
    std::string vocab;
    std::string config;
    std::string out;
    std::string init;
    std::string cipher;
    std::string translator_cmd;
};

void run_train_nli(const TrainArgs& a, const Common& c, bool translated) {
    const auto cfg = load_config(a.config);
    const auto data = load_nli(a.data);
    auto model = a.init.empty() ? fresh_model(vocab_for(a.vocab, data), cfg, c.seed)
                                : model_from_checkpoint<Real>(load_checkpoint(a.init));
    const auto options = train_options(c.seed + 2);
    TrainingLog log;
    if (translated) {
        const auto translator = make_translator(a.cipher, a.translator_cmd);
        log = finetune_translated(model, data, *translator, cfg.hyper, options);
    } else {
        log = finetune_nli(model, data, cfg.hyper, options);
    }
    auto ckpt = model_checkpoint(model, c.seed, c.width());
    add_config_echo(ckpt, cfg, translated ? "translate_train" : "train_nli");
    save_checkpoint(a.out, ckpt);
    std::cout << "optimizer_steps=" << log.optimizer_steps << " final_loss=" << log.epochs.back().mean_loss
              << " train_accuracy=" << log.epochs.back().accuracy << "\n";
    std::cout << "saved " << a.out << "\n";
}

struct DistillArgs {
    std::string teacher;
    std::string parallel;
    std::string config;
    std::string out;
};

void run_distill(const DistillArgs& a, const Common& c) {
    const auto cfg = load_config(a.config);
    const auto teacher_ckpt = load_checkpoint(a.teacher);
    const auto corpus = load_parallel(a.parallel);
    const auto teacher = encoder_from_checkpoint<Real>(teacher_ckpt);
    auto setup = TeacherStudentSetup<Real>::from_teacher(teacher);
    std::cout << "initial kd_loss=" << corpus_kd_loss(corpus, setup, cfg.hyper.batch_size) << "\n";
    const auto log = distill(setup, corpus, cfg.hyper, train_options(c.seed));
    std::cout << "epochs=" << log.epochs.size() << " optimizer_steps=" << log.optimizer_steps
              << " final_kd_loss=" << log.epochs.back().mean_loss << "\n";

    Checkpoint ckpt;
    if (teacher_ckpt.kind == ModelKind::Composed) {
        // Student encoder in front of the teacher's unchanged head.
        ckpt = model_checkpoint(assemble_target_nli(setup.student, head_from_checkpoint<Real>(teacher_ckpt)), c.seed,
                                c.width());
    } else {
        ckpt = encoder_checkpoint(setup.student, c.seed, c.width());
    }
    for (const auto& [k, v] : teacher_ckpt.metadata) {
        if (k.rfind("config.", 0) == 0) ckpt.metadata[k] = v;
    }
    add_config_echo(ckpt, cfg, "distill");
    save_checkpoint(a.out, ckpt);
    std::cout << "saved " << a.out << "\n";
}

struct EvalArgs {
    std::string model;
    std::string data;
    std::string task = "nli";
    std::string hypothesis;
    std::string topic = "cleanliness";
    bool all_mappings = false;
    std::string cache;
    std::string report;
    std::string cipher;
    std::string translator_cmd;
    std::string persist;
};

/// Loaded evaluation inputs; an NLI set is translated at most once.
struct EvalInputs {
    std::vector<NliExample> nli;
    std::vector<RteExample> rte;
    std::vector<AbsaExample> reviews;
    HypothesisTemplate hypothesis;
    std::vector<LabelMapping> mappings;

    std::vector<std::string> texts() const {
        std::vector<std::string> out;
        for (const auto& ex : nli) {
            out.push_back(ex.premise);
            out.push_back(ex.hypothesis);
        }
        for (const auto& ex : rte) {
            out.push_back(ex.premise);
            out.push_back(ex.hypothesis);
        }
        if (!reviews.empty()) out.push_back(hypothesis.hypothesis_text);
        for (const auto& ex : reviews) out.push_back(ex.text);
        return out;
    }
};

EvalInputs load_eval_inputs(const EvalArgs& a, Task task) {
    EvalInputs in;
    if (task == Task::Nli) {
        in.nli = load_nli(a.data);
        if (!a.cipher.empty() || !a.translator_cmd.empty()) {
            const auto translator = make_translator(a.cipher, a.translator_cmd);
            in.nli = translate_batch(*translator, in.nli);
            if (!a.persist.empty()) save_nli(a.persist, in.nli);
        }
        return in;
    }
    in.mappings = a.all_mappings ? LabelMapping::variants(task) : std::vector{LabelMapping::for_task(task)};
    if (task == Task::Rte) {
        in.rte = load_rte(a.data);
    } else {
        in.hypothesis = HypothesisTemplate::default_for(task);
        if (!a.hypothesis.empty()) in.hypothesis.hypothesis_text = a.hypothesis;
        in.reviews = load_absa(a.data);
    }
    return in;
}

template <class Predictor>
std::string evaluate_inputs(const Predictor& predictor, const EvalInputs& in, const EvalArgs& a, Task task) {
    std::string text;
    auto emit = [&text](const EvalReport& r) {
        text += r.to_text();
        text += "record: " + r.to_record() + "\n";
    };
    if (task == Task::Nli) {
        emit(evaluate_nli(predictor, in.nli));
        return text;
    }
    for (const auto& m : in.mappings) {
        text += "mapping: " + m.describe() + "\n";
        emit(task == Task::Rte ? evaluate_rte(predictor, in.rte, m)
                               : zero_shot_task(predictor, in.reviews, in.hypothesis, m, a.topic));
    }
    return text;
}

void run_eval(const EvalArgs& a) {
    const auto task = parse_task(a.task);
    if (!task) throw ArgumentError("unknown task '" + a.task + "' (nli, rte, sa, tr, absa)");
    const auto model = model_from_checkpoint<Real>(load_checkpoint(a.model));
    const auto inputs = load_eval_inputs(a, *task);

    std::string text;
    if (a.cache.empty()) {
        text = evaluate_inputs(model, inputs, a, *task);
    } else {
        const auto cache = embed_corpus(inputs.texts(), model.encoder, a.cache);
        text = evaluate_inputs(CachedPredictor<Real>(cache, model.head), inputs, a, *task);
    }
    std::cout << text;
    if (!a.report.empty()) write_text(a.report, text);
}

std::vector<std::string> texts_of(const std::vector<NliExample>& data) {
    std::vector<std::string> out;
    for (const auto& ex : data) {
        out.push_back(ex.premise);
        out.push_back(ex.hypothesis);
    }
    return out;
}

struct EmbedArgs {
    std::string model;
    std::string data;
    std::string format = "nli";
    std::string cache;
};

void run_embed(const EmbedArgs& a) {
    const auto ckpt = load_checkpoint(a.model);
    auto encoder = encoder_from_checkpoint<Real>(ckpt);
    std::vector<std::string> texts;
    if (a.format == "nli") {
        texts = texts_of(load_nli(a.data));
    } else if (a.format == "absa") {
        for (const auto& ex : load_absa(a.data)) texts.push_back(ex.text);
    } else if (a.format == "lines") {
        std::ifstream in(a.data);
        if (!in) throw DataError("cannot open " + a.data);
        for (std::string line; std::getline(in, line);) {
            if (!split_whitespace(line).empty()) texts.push_back(line);
        }
    } else {
        throw ArgumentError("unknown format '" + a.format + "' (nli, absa, lines)");
    }
    encoder.reset_invocation_count();
    const auto cache = embed_corpus(texts, encoder, a.cache);
    std::cout << "cache entries=" << cache.size() << " new encodings=" << encoder.invocation_count()
              << " encoder_id=" << checkpoint_id_string(cache.checkpoint_id()) << "\n";
}

struct PredictArgs {
    std::string model;
    std::string premise;
    std::string hypothesis;
};

void run_predict(const PredictArgs& a) {
    const auto model = model_from_checkpoint<Real>(load_checkpoint(a.model));
    const auto p = model.predict_pair(a.premise, a.hypothesis);
    std::cout << "label=" << to_string(p.predicted_label);
    for (std::size_t i = 0; i < kNliClasses; ++i) {
        std::cout << " p_" << to_string(nli_label_from_index(i)) << "=" << detail::format_double(p.probabilities[i]);
    }
    std::cout << "\n";
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Cross-lingual NLI via sentence-embedding distillation"};
    app.require_subcommand(1);
    app.fallthrough();
    Common common;
    app.add_option("--seed", common.seed, "RNG seed")->default_val(0);
    app.add_flag("--wide", common.wide, "Store checkpoint values as 64-bit floats");

    GenDataArgs gen;
    auto* gen_cmd = app.add_subcommand("gen-data", "Write the synthetic corpora, vocabulary and cipher");
    gen_cmd->add_option("--out", gen.out, "Output directory")->required();
    gen_cmd->add_option("--train-size", gen.train_size)->default_val(gen.train_size);
    gen_cmd->add_option("--test-size", gen.test_size)->default_val(gen.test_size);
    gen_cmd->add_option("--parallel-size", gen.parallel_size)->default_val(gen.parallel_size);
    gen_cmd->add_option("--grammar-size", gen.grammar_size)->default_val(gen.grammar_size);
    gen_cmd->add_option("--absa-per-cell", gen.absa_per_cell)->default_val(gen.absa_per_cell);

    TrainArgs train;
    auto* train_cmd = app.add_subcommand("train-nli", "Fine-tune encoder and head on NLI data");
    TrainArgs mt;
    auto* mt_cmd = app.add_subcommand("translate-train", "Fine-tune on NLI data translated batch by batch");
    for (auto [cmd, args] : {std::pair{train_cmd, &train}, std::pair{mt_cmd, &mt}}) {
        cmd->add_option("--data", args->data, "NLI TSV")->required()->check(CLI::ExistingFile);
        cmd->add_option("--config", args->config, "key=value config")->required()->check(CLI::ExistingFile);
        cmd->add_option("--out", args->out, "Output checkpoint")->required();
        cmd->add_option("--vocab", args->vocab, "Vocabulary file (default: words of --data)");
        cmd->add_option("--init", args->init, "Start from this composed checkpoint");
    }
    mt_cmd->add_option("--cipher", mt.cipher, "Word map for the dictionary translator");
    mt_cmd->add_option("--translator-cmd", mt.translator_cmd, "External line-based translator command");

    DistillArgs kd;
    auto* kd_cmd = app.add_subcommand("distill", "Distill a teacher encoder onto target-language sentences");
    kd_cmd->add_option("--teacher", kd.teacher, "Teacher checkpoint")->required()->check(CLI::ExistingFile);
    kd_cmd->add_option("--parallel", kd.parallel, "Parallel TSV (source, target)")->required()->check(CLI::ExistingFile);
    kd_cmd->add_option("--config", kd.config, "key=value config")->required()->check(CLI::ExistingFile);
    kd_cmd->add_option("--out", kd.out, "Output checkpoint")->required();

    EvalArgs ev;
    auto* eval_cmd = app.add_subcommand("eval", "Evaluate a composed model");
    eval_cmd->add_option("--model", ev.model)->required()->check(CLI::ExistingFile);
    eval_cmd->add_option("--data", ev.data)->required()->check(CLI::ExistingFile);
    eval_cmd->add_option("--task", ev.task, "nli, rte, sa, tr or absa")->default_val(ev.task);
    eval_cmd->add_option("--hypothesis", ev.hypothesis, "Hypothesis text for sa/tr/absa");
    eval_cmd->add_option("--topic", ev.topic, "Target topic for tr/absa")->default_val(ev.topic);
    eval_cmd->add_flag("--all-mappings", ev.all_mappings, "Report every neutral mapping");
    eval_cmd->add_option("--cache", ev.cache, "Embedding cache for split inference");
    eval_cmd->add_option("--report", ev.report, "Also write the report here");
    eval_cmd->add_option("--cipher", ev.cipher, "Translate the NLI eval set once with this word map");
    eval_cmd->add_option("--translator-cmd", ev.translator_cmd, "Translate the NLI eval set once with this command");
    eval_cmd->add_option("--persist", ev.persist, "Write the translated eval set here");

    EmbedArgs em;
    auto* embed_cmd = app.add_subcommand("embed", "Fill an embedding cache");
    embed_cmd->add_option("--model", em.model)->required()->check(CLI::ExistingFile);
    embed_cmd->add_option("--data", em.data)->required()->check(CLI::ExistingFile);
    embed_cmd->add_option("--format", em.format, "nli, absa or lines")->default_val(em.format);
    embed_cmd->add_option("--cache", em.cache)->required();

    PredictArgs pr;
    auto* predict_cmd = app.add_subcommand("predict", "Classify one premise/hypothesis pair");
    predict_cmd->add_option("--model", pr.model)->required()->check(CLI::ExistingFile);
    predict_cmd->add_option("--premise", pr.premise)->required();
    predict_cmd->add_option("--hypothesis", pr.hypothesis)->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        if (*gen_cmd) run_gen_data(gen, common);
        else if (*train_cmd) run_train_nli(train, common, false);
        else if (*mt_cmd) run_train_nli(mt, common, true);
        else if (*kd_cmd) run_distill(kd, common);
        else if (*eval_cmd) run_eval(ev);
        else if (*embed_cmd) run_embed(em);
        else if (*predict_cmd) run_predict(pr);
    } catch (const ArgumentError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
