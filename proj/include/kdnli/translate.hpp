#ifndef KDNLI_TRANSLATE_HPP_
#define KDNLI_TRANSLATE_HPP_

#include <csignal>
#include <cstddef>
#include <map>
#include <mutex>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <sys/types.h>
#include <sys/wait.h>
#include <unistd.h>

#include "kdnli/data.hpp"
#include "kdnli/error.hpp"
#include "kdnli/train.hpp"

namespace kdnli {

/// Deterministic sentence translator. translate_lines() may be overridden
/// to batch requests; it throws TranslationError carrying the line index.
class Translator {
public:
    virtual ~Translator() = default;
    virtual std::string translate(std::string_view text) const = 0;

    virtual std::vector<std::string> translate_lines(const std::vector<std::string>& lines) const {
        std::vector<std::string> out;
        out.reserve(lines.size());
        for (std::size_t i = 0; i < lines.size(); ++i) {
            try {
                out.push_back(translate(lines[i]));
            } catch (const TranslationError&) {
                throw;
            } catch (const std::exception& e) {
                throw TranslationError(i, e.what());
            }
        }
        return out;
    }
};

class IdentityTranslator final : public Translator {
public:
    std::string translate(std::string_view text) const override { return std::string(text); }
};

/// Word-substitution translator over an injective map.
class DictionaryTranslator final : public Translator {
public:
    explicit DictionaryTranslator(CipherSpec spec, bool passthrough_unknown = false)
        : spec_(std::move(spec)), passthrough_(passthrough_unknown) {
        if (!spec_.injective()) throw DataError("dictionary translator needs an injective map");
    }

    std::string translate(std::string_view text) const override { return spec_.apply(text, passthrough_); }

private:
    CipherSpec spec_;
    bool passthrough_;
};

/// Talks to an external translation process over its standard streams:
/// one UTF-8 sentence per line in, one translated line per input line out,
/// flushed once per batch. The child is started with /bin/sh -c.
class SubprocessTranslator final : public Translator {
public:
    explicit SubprocessTranslator(const std::string& command) {
        std::signal(SIGPIPE, SIG_IGN);
        int to_child[2];
        int from_child[2];
        if (pipe(to_child) != 0 || pipe(from_child) != 0) throw Error("pipe() failed");
        pid_ = fork();
        if (pid_ < 0) throw Error("fork() failed");
        if (pid_ == 0) {
            dup2(to_child[0], STDIN_FILENO);
            dup2(from_child[1], STDOUT_FILENO);
            close(to_child[0]);
            close(to_child[1]);
            close(from_child[0]);
            close(from_child[1]);
            execl("/bin/sh", "sh", "-c", command.c_str(), static_cast<char*>(nullptr));
            _exit(127);
        }
        close(to_child[0]);
        close(from_child[1]);
        write_fd_ = to_child[1];
        read_fd_ = from_child[0];
    }

    SubprocessTranslator(const SubprocessTranslator&) = delete;
    SubprocessTranslator& operator=(const SubprocessTranslator&) = delete;

    ~SubprocessTranslator() override {
        if (write_fd_ >= 0) close(write_fd_);
        if (read_fd_ >= 0) close(read_fd_);
        if (pid_ > 0) {
            int status = 0;
            waitpid(pid_, &status, 0);
        }
    }

    std::string translate(std::string_view text) const override { return translate_lines({std::string(text)}).at(0); }

    std::vector<std::string> translate_lines(const std::vector<std::string>& lines) const override {
        std::lock_guard lock(mutex_);
        std::string request;
        for (std::size_t i = 0; i < lines.size(); ++i) {
            if (lines[i].find_first_of("\r\n") != std::string::npos) {
                throw TranslationError(i, "input contains a line break");
            }
            request += lines[i];
            request += '\n';
        }
        std::size_t written = 0;
        while (written < request.size()) {
            const auto n = ::write(write_fd_, request.data() + written, request.size() - written);
            if (n <= 0) throw TranslationError(0, "translator process closed its input");
            written += static_cast<std::size_t>(n);
        }
        std::vector<std::string> out;
        out.reserve(lines.size());
        for (std::size_t i = 0; i < lines.size(); ++i) {
            std::string line;
            if (!read_line(line)) throw TranslationError(i, "translator process ended early");
            out.push_back(std::move(line));
        }
        return out;
    }

private:
    bool read_line(std::string& line) const {
        while (true) {
            const auto nl = buffer_.find('\n');
            if (nl != std::string::npos) {
                line = buffer_.substr(0, nl);
                if (!line.empty() && line.back() == '\r') line.pop_back();
                buffer_.erase(0, nl + 1);
                return true;
            }
            char chunk[4096];
            const auto n = ::read(read_fd_, chunk, sizeof chunk);
            if (n <= 0) return false;
            buffer_.append(chunk, static_cast<std::size_t>(n));
        }
    }

    pid_t pid_ = -1;
    int write_fd_ = -1;
    int read_fd_ = -1;
    mutable std::string buffer_;
    mutable std::mutex mutex_;
};

/// Translates premise and hypothesis of every example; labels and order are kept.
inline std::vector<NliExample> translate_batch(const Translator& translator, const std::vector<NliExample>& batch) {
    if (batch.empty()) throw DataError("translate_batch: empty batch");
    std::vector<std::string> lines;
    lines.reserve(2 * batch.size());
    for (const auto& ex : batch) {
        lines.push_back(ex.premise);
        lines.push_back(ex.hypothesis);
    }
    std::vector<std::string> translated;
    try {
        translated = translator.translate_lines(lines);
    } catch (const TranslationError& e) {
        throw TranslationError(e.index() / 2, e.what());
    }
    if (translated.size() != lines.size()) {
        throw TranslationError(translated.size() / 2, "translator returned " + std::to_string(translated.size()) +
                                                          " lines for " + std::to_string(lines.size()));
    }
    std::vector<NliExample> out;
    out.reserve(batch.size());
    for (std::size_t i = 0; i < batch.size(); ++i) {
        for (std::size_t k = 0; k < 2; ++k) {
            if (split_whitespace(translated[2 * i + k]).empty()) throw TranslationError(i, "empty translation");
        }
        out.push_back({std::move(translated[2 * i]), std::move(translated[2 * i + 1]), batch[i].label});
    }
    return out;
}

/// Same loop as finetune_nli, but every mini-batch is translated just
/// before it is used; no translated copy of the dataset is ever built.
template <class T>
TrainingLog finetune_translated(NliModel<T>& model, const std::vector<NliExample>& dataset,
                                const Translator& translator, const TrainingHyperParams& hyper,
                                const TrainOptions& options = {}) {
    return detail::train_classifier(model, dataset, hyper, options, [&translator](std::vector<NliExample> batch) {
        return translate_batch(translator, batch);
    });
}

}  // namespace kdnli

#endif  // KDNLI_TRANSLATE_HPP_
