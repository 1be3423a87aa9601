#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <string>
#include <thread>

#include "lens/error.hpp"
#include "lens/model.hpp"
#include "lens/random.hpp"

namespace lens {

std::size_t default_workers() {
    if (const char* env = std::getenv("LENS_WORKERS")) {
        try {
            const long n = std::stol(env);
            if (n > 0) return static_cast<std::size_t>(n);
        } catch (const std::exception&) {
        }
        throw InputError(std::string("LENS_WORKERS must be a positive integer, got '") + env + "'");
    }
    return std::max(1u, std::thread::hardware_concurrency());
}

namespace {

struct StudentBatches {
    std::int64_t student = 0;
    std::vector<TimestepBatch> batches;
};

std::vector<StudentBatches> prepare(const LensModel& model, const Dataset& data) {
    std::vector<StudentBatches> out;
    out.reserve(data.size());
    for (const auto& s : data) {
        if (s.responses.empty()) continue;
        for (const auto& x : s.responses) model.item_index(x.item);
        out.push_back(StudentBatches{s.student, bucket_by_timestep(s.responses)});
    }
    return out;
}

std::vector<Eigen::MatrixXd> draw_noise(Rng& rng, std::size_t steps, std::size_t dim, std::size_t samples) {
    std::vector<Eigen::MatrixXd> noise;
    noise.reserve(steps);
    for (std::size_t i = 0; i < steps; ++i)
        noise.push_back(standard_normal(rng, static_cast<Eigen::Index>(dim), static_cast<Eigen::Index>(samples)));
    return noise;
}

template <typename Fn>
void parallel_for(std::size_t count, std::size_t workers, Fn&& fn) {
    workers = std::min(workers, count);
    if (workers <= 1) {
        for (std::size_t i = 0; i < count; ++i) fn(i);
        return;
    }
    std::vector<std::exception_ptr> errors(workers);
    std::vector<std::thread> threads;
    threads.reserve(workers);
    for (std::size_t w = 0; w < workers; ++w) {
        threads.emplace_back([&, w] {
            try {
                for (std::size_t i = w; i < count; i += workers) fn(i);
            } catch (...) {
                errors[w] = std::current_exception();
            }
        });
    }
    for (auto& t : threads) t.join();
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
}

}  // namespace

TrainResult train(LensModel& model, const Dataset& train_set, const Dataset& validation_set,
                  const std::function<void(const EpochMetrics&)>& on_epoch, std::size_t workers) {
    const auto& config = model.config();
    config.validate();
    if (workers == 0) workers = default_workers();
    model.set_gaps(GapNormalizer::fit(train_set));
    const auto train_data = prepare(model, train_set);
    const auto val_data = prepare(model, validation_set);
    if (train_data.empty()) throw InputError("train: training set is empty");

    nn::AdamState adam(model.params(), config.adam);
    const auto warmup_epochs =
        static_cast<std::size_t>(std::ceil(config.warmup_fraction * static_cast<double>(config.epochs)));
    const std::size_t dim = model.latent_dim();

    TrainResult result;
    std::vector<std::size_t> order(train_data.size());
    for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
        const double beta =
            warmup_epochs > 0
                ? config.beta * std::min(1.0, static_cast<double>(epoch + 1) / static_cast<double>(warmup_epochs))
                : config.beta;
        for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
        auto shuffle_rng = make_stream(config.seed, {kTrainStream, epoch, 0});
        for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[shuffle_rng() % i]);

        double epoch_loss = 0.0;
        std::size_t batch_index = 0;
        for (std::size_t start = 0; start < order.size(); start += config.batch_size, ++batch_index) {
            const std::size_t count = std::min(config.batch_size, order.size() - start);
            std::vector<nn::Gradients> grads(count);
            std::vector<double> losses(count);
            parallel_for(count, workers, [&](std::size_t k) {
                const auto& student = train_data[order[start + k]];
                auto rng = make_stream(config.seed, {kTrainStream, epoch, 1, static_cast<std::uint64_t>(student.student)});
                const auto noise = draw_noise(rng, student.batches.size(), dim, config.train_samples);
                nn::Tape tape(model.params());
                auto loss = sequence_loss(tape, model, student.batches, beta, noise);
                losses[k] = loss.loss.value()(0, 0);
                grads[k] = std::isfinite(losses[k]) ? tape.backward(loss.loss) : nn::Gradients(model.params());
            });
            nn::Gradients total(model.params());
            for (std::size_t k = 0; k < count; ++k) {
                if (!std::isfinite(losses[k]))
                    throw NumericError("non-finite loss at epoch " + std::to_string(epoch) + ", batch " +
                                       std::to_string(batch_index) + " (student " +
                                       std::to_string(train_data[order[start + k]].student) + ")");
                total += grads[k];
                epoch_loss += losses[k];
            }
            total *= 1.0 / static_cast<double>(count);
            try {
                adam.apply(model.params(), total);
            } catch (const NumericError& e) {
                throw NumericError(std::string(e.what()) + " at epoch " + std::to_string(epoch) + ", batch " +
                                   std::to_string(batch_index));
            }
        }

        EpochMetrics metrics;
        metrics.epoch = epoch;
        metrics.train_loss = epoch_loss / static_cast<double>(train_data.size());
        if (!val_data.empty()) {
            std::vector<double> nll(val_data.size()), kl(val_data.size());
            parallel_for(val_data.size(), workers, [&](std::size_t k) {
                const auto& student = val_data[k];
                auto rng = make_stream(config.seed, {kEvalStream, 0, static_cast<std::uint64_t>(student.student)});
                const auto noise = draw_noise(rng, student.batches.size(), dim, config.train_samples);
                nn::Tape tape(model.params(), false);
                auto loss = sequence_loss(tape, model, student.batches, 1.0, noise);
                nll[k] = loss.nll;
                kl[k] = loss.kl;
            });
            for (std::size_t k = 0; k < val_data.size(); ++k) {
                metrics.val_nll += nll[k];
                metrics.val_kl += kl[k];
            }
            metrics.val_nll /= static_cast<double>(val_data.size());
            metrics.val_kl /= static_cast<double>(val_data.size());
        }
        result.history.push_back(metrics);
        if (on_epoch) on_epoch(metrics);
    }
    return result;
}

}  // namespace lens
