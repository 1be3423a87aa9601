#pragma once

// Dynamic LENS: a learned Gaussian state-space model for knowledge tracing.
//
// Each response is encoded into a diagonal Gaussian likelihood over a latent
// student state. Within a timestep the likelihoods are fused with the prior
// in closed form; between timesteps a learned forecast maps the previous
// posterior to the next prior. The first timestep of a sequence starts from
// N(0, I). A decoder maps latent samples plus the shared item embedding to a
// probability of a correct response.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "json.hpp"
#include "lens/dataset.hpp"
#include "lens/gaussian.hpp"
#include "lens/nn/adam.hpp"
#include "lens/nn/layers.hpp"

namespace lens {

struct LensConfig {
    // Architecture.
    std::size_t item_count = 1000;
    std::size_t latent_dim = 16;
    std::size_t embedding_dim = 16;
    std::vector<std::size_t> encoder_hidden{64, 64};
    std::vector<std::size_t> decoder_hidden{64, 64};
    std::vector<std::size_t> forecast_hidden{64, 64};
    bool forecast_skip = false;  // learned per-coordinate gain carrying [mean; log_var] into the forecast output
    nn::Activation activation = nn::Activation::tanh;
    double log_var_clamp = kDefaultLogVarClamp;

    // Objective and optimisation.
    double beta = 1.0;
    double warmup_fraction = 0.1;   // linear KL warm-up over this share of epochs
    std::size_t train_samples = 1;  // posterior samples per timestep in the loss
    std::size_t eval_samples = 32;  // posterior samples per prediction
    int truncation_length = 0;      // forecasts backpropagated through; 0 detaches every step, -1 never
    std::size_t epochs = 30;
    std::size_t batch_size = 8;
    nn::AdamConfig adam{};
    std::uint64_t seed = 0;

    void validate() const;
};

void to_json(nlohmann::json& j, const LensConfig& c);
void from_json(const nlohmann::json& j, LensConfig& c);

/// Elapsed-timestep control input, min-max normalised against the gaps seen
/// in training.
struct GapNormalizer {
    double min_gap = 1.0;
    double max_gap = 1.0;

    double operator()(std::int64_t gap) const {
        if (max_gap <= min_gap) return 0.0;
        return (static_cast<double>(gap) - min_gap) / (max_gap - min_gap);
    }

    static GapNormalizer fit(const Dataset& data);
};

class LensModel {
public:
    /// Random initialisation seeded from config.seed.
    explicit LensModel(LensConfig config);

    const LensConfig& config() const { return config_; }
    std::size_t latent_dim() const { return config_.latent_dim; }
    nn::ParameterStore& params() { return params_; }
    const nn::ParameterStore& params() const { return params_; }
    const nn::EmbeddingTable& embeddings() const { return embeddings_; }
    const nn::Mlp& encoder() const { return encoder_; }
    const nn::Mlp& decoder() const { return decoder_; }
    const nn::Mlp& forecaster() const { return forecaster_; }
    /// Per-coordinate skip gain of the forecast (2d x 1); absent when disabled.
    const std::optional<nn::ParamId>& forecast_gain() const { return forecast_gain_; }
    const GapNormalizer& gaps() const { return gaps_; }
    void set_gaps(GapNormalizer g) { gaps_ = g; }

    /// Sets every learnable value to zero (used to build uninformative models).
    void zero_parameters();

    // Traced building blocks.
    /// Likelihood columns (d x K) for K responses.
    GaussianVar encode(nn::Tape& tape, nn::Var item_embeddings, std::span<const double> correct) const;
    GaussianVar forecast(nn::Tape& tape, const GaussianVar& previous, double control) const;
    /// Logits (1 x S*K) for all (sample, item) pairs; column s*K + k.
    nn::Var decode_logits(nn::Tape& tape, nn::Var samples, nn::Var item_embeddings) const;
    nn::Var embed(nn::Tape& tape, std::span<const std::size_t> items) const;

    // Plain evaluation.
    DiagonalGaussian encode_response(std::size_t item, int correct) const;
    DiagonalGaussian forecast(const DiagonalGaussian& previous, double control) const;
    double decode(const Eigen::VectorXd& sample, std::size_t item) const;
    /// Probability of a correct answer for each column of `samples`.
    Eigen::VectorXd decode_samples(const Eigen::MatrixXd& samples, std::size_t item) const;

    std::size_t item_index(std::int64_t item) const;

    nlohmann::json to_json() const;
    static LensModel from_json(const nlohmann::json& j);

private:
    LensConfig config_;
    nn::ParameterStore params_;
    nn::EmbeddingTable embeddings_;
    nn::Mlp encoder_;
    nn::Mlp decoder_;
    nn::Mlp forecaster_;
    std::optional<nn::ParamId> forecast_gain_;
    GapNormalizer gaps_;
};

struct BeliefState {
    std::int64_t student = 0;
    std::int64_t t = 0;
    DiagonalGaussian posterior;
};

struct StepResult {
    BeliefState belief;
    double nll = 0.0;
    double kl = 0.0;
};

/// One filtering step: prior (forecast or N(0, I)), fusion of the batch's
/// encodings, then Monte-Carlo NLL with `noise` (d x S) and KL to the prior.
StepResult step_timestep(const LensModel& model, const std::optional<BeliefState>& previous,
                         const TimestepBatch& batch, const Eigen::MatrixXd& noise);

/// Traced loss of one student sequence.
struct TracedLoss {
    nn::Var loss;
    double nll = 0.0;
    double kl = 0.0;
};

/// sum_t (nll_t + beta kl_t). `noise[t]` is d x S for the t-th batch.
TracedLoss sequence_loss(nn::Tape& tape, const LensModel& model, std::span<const TimestepBatch> batches, double beta,
                         std::span<const Eigen::MatrixXd> noise);

double sequence_loss(const LensModel& model, std::span<const TimestepBatch> batches, double beta,
                     std::span<const Eigen::MatrixXd> noise);

/// Incremental filter over one student's responses. Fusion always restarts
/// from the timestep prior, so permuting responses inside a timestep gives a
/// bit-identical belief.
class LensFilter {
public:
    explicit LensFilter(const LensModel& model) : model_(&model) {}

    void reset();
    /// Responses must arrive with non-decreasing t.
    void observe(const Interaction& x);

    /// Belief about the state at timestep `t` given everything observed so far.
    DiagonalGaussian belief_at(std::int64_t t) const;
    /// Posterior of the timestep in progress; N(0, I) before any observation.
    DiagonalGaussian current() const;
    std::optional<std::int64_t> current_t() const { return current_t_; }

    /// Decoded probabilities for each noise column at timestep `t`.
    Eigen::VectorXd sample_predictions(std::size_t item, std::int64_t t, const Eigen::MatrixXd& noise) const;
    /// Monte-Carlo mean over the noise columns.
    double predict(std::size_t item, std::int64_t t, const Eigen::MatrixXd& noise) const;

private:
    const LensModel* model_;
    std::optional<std::int64_t> current_t_;
    std::optional<DiagonalGaussian> prior_;
    std::optional<DiagonalGaussian> posterior_;
    std::vector<DiagonalGaussian> encodings_;
};

/// Probability that `item` is answered correctly at timestep `t` given the
/// earlier responses in `history` (t-ordered; same-timestep responses are
/// fused into the current prior).
double predict_next(const LensModel& model, std::span<const Interaction> history, std::size_t item, std::int64_t t,
                    const Eigen::MatrixXd& noise);

/// For each length L, the S decoded probabilities using only the L most
/// recent responses of `history`. `noise` is d x S, reused for every L.
std::vector<std::vector<double>> posterior_trace(const LensModel& model, std::span<const Interaction> history,
                                                 std::size_t item, std::int64_t t,
                                                 std::span<const std::size_t> lengths, const Eigen::MatrixXd& noise);

struct EpochMetrics {
    std::size_t epoch = 0;
    double train_loss = 0.0;
    double val_nll = 0.0;
    double val_kl = 0.0;
};

void to_json(nlohmann::json& j, const EpochMetrics& m);

struct TrainResult {
    std::vector<EpochMetrics> history;
};

/// Adam minimisation of the mean per-student sequence loss. Deterministic for
/// a given config (including across worker counts). Throws NumericError
/// naming the epoch and batch if the loss becomes non-finite.
TrainResult train(LensModel& model, const Dataset& train_set, const Dataset& validation_set,
                  const std::function<void(const EpochMetrics&)>& on_epoch = {}, std::size_t workers = 0);

/// Worker count: LENS_WORKERS if set, else hardware concurrency.
std::size_t default_workers();

}  // namespace lens
