#ifndef KDNLI_DISTILL_HPP_
#define KDNLI_DISTILL_HPP_

// Embedding-level knowledge distillation: a frozen teacher encodes source
// sentences, a trainable student encodes their translations, and the
// student is pulled onto the teacher's embeddings by mean squared error.

#include <algorithm>
#include <cstddef>
#include <numeric>
#include <random>
#include <span>
#include <vector>

#include "kdnli/autodiff.hpp"
#include "kdnli/data.hpp"
#include "kdnli/encoder.hpp"
#include "kdnli/error.hpp"
#include "kdnli/head.hpp"
#include "kdnli/optim.hpp"
#include "kdnli/train.hpp"

namespace kdnli {

template <class T>
struct TeacherStudentSetup {
    SentenceEncoder<T> teacher;  // frozen
    SentenceEncoder<T> student;  // trainable

    /// Teacher is a frozen copy of `source`; the student starts as an exact copy of it.
    static TeacherStudentSetup from_teacher(const SentenceEncoder<T>& source) {
        return {source.deep_copy(false), source.deep_copy(true)};
    }
};

/// Batch-mean of the squared teacher/student difference, averaged over the
/// embedding components as well.
template <class T>
Tensor<T> kd_loss(const std::vector<Tensor<T>>& teacher_embeddings, const std::vector<Tensor<T>>& student_embeddings) {
    if (teacher_embeddings.empty()) throw DataError("kd_loss: empty batch");
    if (teacher_embeddings.size() != student_embeddings.size()) {
        throw ShapeError("kd_loss: teacher and student batch sizes differ");
    }
    return mse_loss(stack_rows(teacher_embeddings), stack_rows(student_embeddings));
}

template <class T>
Tensor<T> kd_loss(std::span<const ParallelPair> batch, const TeacherStudentSetup<T>& setup) {
    if (batch.empty()) throw DataError("kd_loss: empty batch");
    if (setup.teacher.embed_dim() != setup.student.embed_dim()) {
        throw ShapeError("kd_loss: teacher and student embedding widths differ");
    }
    std::vector<Tensor<T>> teacher;
    std::vector<Tensor<T>> student;
    teacher.reserve(batch.size());
    student.reserve(batch.size());
    {
        NoGradGuard no_grad;
        for (const auto& pair : batch) teacher.push_back(setup.teacher.encode(pair.source_sentence).vector);
    }
    for (const auto& pair : batch) student.push_back(setup.student.encode(pair.target_sentence).vector);
    return kd_loss(teacher, student);
}

/// Mean kd_loss over the corpus without updating anything.
template <class T>
double corpus_kd_loss(const std::vector<ParallelPair>& corpus, const TeacherStudentSetup<T>& setup,
                      std::size_t batch_size) {
    if (corpus.empty()) throw DataError("corpus_kd_loss: empty corpus");
    NoGradGuard no_grad;
    double total = 0.0;
    for (std::size_t start = 0; start < corpus.size(); start += batch_size) {
        const std::size_t n = std::min(batch_size, corpus.size() - start);
        total += double(kd_loss(std::span<const ParallelPair>(corpus).subspan(start, n), setup).item()) * double(n);
    }
    return total / double(corpus.size());
}

/// Epochs of shuffled mini-batches; only the student's parameters move.
template <class T>
TrainingLog distill(TeacherStudentSetup<T>& setup, const std::vector<ParallelPair>& corpus,
                    const TrainingHyperParams& hyper, const TrainOptions& options = {}) {
    if (corpus.empty()) throw DataError("distillation corpus is empty");
    hyper.validate();
    AdamW<T> optimizer(setup.student.weights().params(), hyper);
    std::mt19937_64 rng(options.seed);
    std::vector<std::size_t> order(corpus.size());
    std::iota(order.begin(), order.end(), std::size_t{0});

    TrainingLog log;
    for (std::size_t epoch = 0; epoch < hyper.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        double loss_sum = 0.0;
        std::size_t micro = 0;
        for (std::size_t start = 0; start < order.size(); start += hyper.batch_size, ++micro) {
            const std::size_t end = std::min(order.size(), start + hyper.batch_size);
            std::vector<ParallelPair> batch;
            batch.reserve(end - start);
            for (std::size_t i = start; i < end; ++i) batch.push_back(corpus[order[i]]);
            const auto loss = kd_loss(std::span<const ParallelPair>(batch), setup);
            backward(loss);
            const bool updated = optimizer.accumulate();
            const double value = double(loss.item());
            log.step_losses.push_back(value);
            loss_sum += value * double(batch.size());
            if (options.on_step) options.on_step({epoch, micro, batch.size(), value, updated});
        }
        optimizer.flush();
        log.epochs.push_back({epoch, loss_sum / double(corpus.size()), 0.0});
        if (options.progress) {
            *options.progress << "epoch " << epoch + 1 << "/" << hyper.epochs << " kd_loss "
                              << log.epochs.back().mean_loss << "\n";
        }
    }
    log.optimizer_steps = optimizer.state().step_count;
    return log;
}

/// Student encoder in front of the unchanged source-language head.
template <class T>
NliModel<T> assemble_target_nli(const SentenceEncoder<T>& student, const HeadWeights<T>& head) {
    NliModel<T> model{student, head};
    model.check_compatible();
    return model;
}

}  // namespace kdnli

#endif  // KDNLI_DISTILL_HPP_
