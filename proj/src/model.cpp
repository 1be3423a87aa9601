#include "lens/model.hpp"

#include <algorithm>
#include <cmath>

#include "lens/error.hpp"
#include "lens/nn/serialize.hpp"
#include "lens/random.hpp"

namespace lens {

namespace {

// Probabilities are kept strictly inside (0, 1) even when the logit saturates.
constexpr double kProbabilityFloor = 1e-15;

double to_probability(double logit) {
    const double p = 1.0 / (1.0 + std::exp(-logit));
    return std::clamp(p, kProbabilityFloor, 1.0 - kProbabilityFloor);
}

struct TracedStep {
    GaussianVar posterior;
    nn::Var nll;
    nn::Var kl;
};

TracedStep traced_step(nn::Tape& tape, const LensModel& model, const GaussianVar& prior, const TimestepBatch& batch,
                       const Eigen::MatrixXd& noise) {
    if (batch.responses.empty()) throw InputError("empty timestep batch");
    if (noise.rows() != static_cast<Eigen::Index>(model.latent_dim()) || noise.cols() < 1)
        throw ShapeError("step noise must be latent_dim x S with S >= 1");
    std::vector<std::size_t> items;
    std::vector<double> labels;
    items.reserve(batch.responses.size());
    labels.reserve(batch.responses.size());
    for (const auto& x : batch.responses) {
        items.push_back(model.item_index(x.item));
        labels.push_back(static_cast<double>(x.correct));
    }
    nn::Var emb = model.embed(tape, items);
    GaussianVar likelihoods = model.encode(tape, emb, labels);
    GaussianVar posterior = fuse(prior, likelihoods, model.config().log_var_clamp);
    nn::Var samples = sample(posterior, noise);
    nn::Var logits = model.decode_logits(tape, samples, emb);
    const auto s_count = static_cast<std::size_t>(noise.cols());
    std::vector<double> repeated;
    repeated.reserve(s_count * labels.size());
    for (std::size_t s = 0; s < s_count; ++s) repeated.insert(repeated.end(), labels.begin(), labels.end());
    nn::Var nll = nn::scale(nn::bernoulli_nll(logits, repeated), 1.0 / static_cast<double>(s_count));
    nn::Var kl = kl_divergence(posterior, prior);
    return TracedStep{posterior, nll, kl};
}

}  // namespace

void LensConfig::validate() const {
    auto positive = [](std::size_t v, const char* name) {
        if (v == 0) throw InputError(std::string("lens config: ") + name + " must be positive");
    };
    positive(item_count, "item_count");
    positive(latent_dim, "latent_dim");
    positive(embedding_dim, "embedding_dim");
    positive(train_samples, "train_samples");
    positive(eval_samples, "eval_samples");
    positive(epochs, "epochs");
    positive(batch_size, "batch_size");
    for (const auto* hidden : {&encoder_hidden, &decoder_hidden, &forecast_hidden})
        for (auto h : *hidden) positive(h, "hidden layer width");
    if (!(log_var_clamp > 0)) throw InputError("lens config: log_var_clamp must be positive");
    if (!(beta >= 0)) throw InputError("lens config: beta must be non-negative");
    if (!(warmup_fraction >= 0 && warmup_fraction <= 1))
        throw InputError("lens config: warmup_fraction must be in [0, 1]");
    if (truncation_length < -1) throw InputError("lens config: truncation_length must be >= -1");
    if (!(adam.learning_rate > 0)) throw InputError("lens config: learning_rate must be positive");
}

void to_json(nlohmann::json& j, const LensConfig& c) {
    j = nlohmann::json{{"item_count", c.item_count},
                       {"latent_dim", c.latent_dim},
                       {"embedding_dim", c.embedding_dim},
                       {"encoder_hidden", c.encoder_hidden},
                       {"decoder_hidden", c.decoder_hidden},
                       {"forecast_hidden", c.forecast_hidden},
                       {"forecast_skip", c.forecast_skip},
                       {"activation", nn::to_string(c.activation)},
                       {"log_var_clamp", c.log_var_clamp},
                       {"beta", c.beta},
                       {"warmup_fraction", c.warmup_fraction},
                       {"train_samples", c.train_samples},
                       {"eval_samples", c.eval_samples},
                       {"truncation_length", c.truncation_length},
                       {"epochs", c.epochs},
                       {"batch_size", c.batch_size},
                       {"learning_rate", c.adam.learning_rate},
                       {"adam_beta1", c.adam.beta1},
                       {"adam_beta2", c.adam.beta2},
                       {"adam_epsilon", c.adam.epsilon},
                       {"seed", c.seed}};
}

void from_json(const nlohmann::json& j, LensConfig& c) {
    static const std::vector<std::string> kKnown = {
        "item_count",  "latent_dim",    "embedding_dim",     "encoder_hidden", "decoder_hidden",
        "forecast_hidden", "forecast_skip", "activation", "log_var_clamp",    "beta",           "warmup_fraction",
        "train_samples", "eval_samples", "truncation_length", "epochs",        "batch_size",
        "learning_rate", "adam_beta1",   "adam_beta2",        "adam_epsilon",  "seed"};
    for (const auto& [key, _] : j.items())
        if (std::find(kKnown.begin(), kKnown.end(), key) == kKnown.end())
            throw InputError("lens config: unknown key '" + key + "'");
    auto get = [&j](const char* key, auto& field) {
        if (j.contains(key)) j.at(key).get_to(field);
    };
    get("item_count", c.item_count);
    get("latent_dim", c.latent_dim);
    get("embedding_dim", c.embedding_dim);
    get("encoder_hidden", c.encoder_hidden);
    get("decoder_hidden", c.decoder_hidden);
    get("forecast_hidden", c.forecast_hidden);
    get("forecast_skip", c.forecast_skip);
    if (j.contains("activation")) c.activation = nn::parse_activation(j.at("activation").get<std::string>());
    get("log_var_clamp", c.log_var_clamp);
    get("beta", c.beta);
    get("warmup_fraction", c.warmup_fraction);
    get("train_samples", c.train_samples);
    get("eval_samples", c.eval_samples);
    get("truncation_length", c.truncation_length);
    get("epochs", c.epochs);
    get("batch_size", c.batch_size);
    get("learning_rate", c.adam.learning_rate);
    get("adam_beta1", c.adam.beta1);
    get("adam_beta2", c.adam.beta2);
    get("adam_epsilon", c.adam.epsilon);
    get("seed", c.seed);
}

GapNormalizer GapNormalizer::fit(const Dataset& data) {
    GapNormalizer g;
    bool any = false;
    for (const auto& s : data) {
        for (std::size_t i = 1; i < s.responses.size(); ++i) {
            const auto gap = s.responses[i].t - s.responses[i - 1].t;
            if (gap <= 0) continue;
            const auto v = static_cast<double>(gap);
            g.min_gap = any ? std::min(g.min_gap, v) : v;
            g.max_gap = any ? std::max(g.max_gap, v) : v;
            any = true;
        }
    }
    return g;
}

LensModel::LensModel(LensConfig config) : config_(std::move(config)) {
    config_.validate();
    auto rng = make_stream(config_.seed, {kInitStream});
    const auto d = config_.latent_dim;
    const auto e = config_.embedding_dim;
    embeddings_ = nn::make_embedding(params_, "item_embedding", config_.item_count, e, rng);
    encoder_ = nn::make_mlp(params_, "encoder", e + 1, config_.encoder_hidden, 2 * d, config_.activation, rng);
    decoder_ = nn::make_mlp(params_, "decoder", d + e, config_.decoder_hidden, 1, config_.activation, rng);
    forecaster_ = nn::make_mlp(params_, "forecast", 2 * d + 1, config_.forecast_hidden, 2 * d, config_.activation, rng);
    // Starts as persistence: the previous belief passes straight through.
    if (config_.forecast_skip)
        forecast_gain_ = params_.add("forecast.gain", nn::Matrix::Ones(static_cast<Eigen::Index>(2 * d), 1));
}

void LensModel::zero_parameters() {
    for (std::size_t i = 0; i < params_.size(); ++i) params_.value(nn::ParamId{i}).setZero();
}

std::size_t LensModel::item_index(std::int64_t item) const {
    if (item < 0 || static_cast<std::size_t>(item) >= config_.item_count)
        throw InputError("unknown item " + std::to_string(item) + " (model vocabulary has " +
                         std::to_string(config_.item_count) + " items)");
    return static_cast<std::size_t>(item);
}

nn::Var LensModel::embed(nn::Tape& tape, std::span<const std::size_t> items) const {
    return nn::embed(tape, embeddings_, items);
}

GaussianVar LensModel::encode(nn::Tape& tape, nn::Var item_embeddings, std::span<const double> correct) const {
    nn::Matrix indicator = Eigen::Map<const Eigen::RowVectorXd>(correct.data(), static_cast<Eigen::Index>(correct.size()));
    nn::Var input = nn::concat_rows(item_embeddings, tape.constant(std::move(indicator)));
    return split_gaussian(nn::forward(tape, encoder_, input), config_.log_var_clamp);
}

GaussianVar LensModel::forecast(nn::Tape& tape, const GaussianVar& previous, double control) const {
    nn::Var state = nn::concat_rows(previous.mean, previous.log_var);
    nn::Var out = nn::forward(tape, forecaster_, nn::concat_rows(state, tape.constant(nn::Matrix::Constant(1, 1, control))));
    if (forecast_gain_) out = nn::add(out, nn::mul(nn::parameter(tape, *forecast_gain_), state));
    return split_gaussian(out, config_.log_var_clamp);
}

nn::Var LensModel::decode_logits(nn::Tape& tape, nn::Var samples, nn::Var item_embeddings) const {
    return nn::forward(tape, decoder_, nn::pair_columns(samples, item_embeddings));
}

DiagonalGaussian LensModel::encode_response(std::size_t item, int correct) const {
    if (correct != 0 && correct != 1) throw InputError("correctness must be 0 or 1");
    nn::Tape tape(params_, false);
    const std::size_t ids[] = {item_index(static_cast<std::int64_t>(item))};
    const double labels[] = {static_cast<double>(correct)};
    return encode(tape, embed(tape, ids), labels).value(0, config_.log_var_clamp);
}

DiagonalGaussian LensModel::forecast(const DiagonalGaussian& previous, double control) const {
    if (previous.dim() != latent_dim()) throw ShapeError("forecast: belief dimension does not match latent_dim");
    nn::Tape tape(params_, false);
    return forecast(tape, constant_gaussian(tape, previous), control).value(0, config_.log_var_clamp);
}

Eigen::VectorXd LensModel::decode_samples(const Eigen::MatrixXd& samples, std::size_t item) const {
    if (samples.rows() != static_cast<Eigen::Index>(latent_dim()))
        throw ShapeError("decode: sample dimension does not match latent_dim");
    nn::Tape tape(params_, false);
    const std::size_t ids[] = {item_index(static_cast<std::int64_t>(item))};
    nn::Var logits = decode_logits(tape, tape.constant(samples), embed(tape, ids));
    Eigen::VectorXd p(samples.cols());
    for (Eigen::Index s = 0; s < samples.cols(); ++s) p(s) = to_probability(logits.value()(0, s));
    return p;
}

double LensModel::decode(const Eigen::VectorXd& sample, std::size_t item) const {
    return decode_samples(sample, item)(0);
}

nlohmann::json LensModel::to_json() const {
    nlohmann::json j;
    j["model"] = "lens";
    j["config"] = config_;
    j["gaps"] = {{"min", gaps_.min_gap}, {"max", gaps_.max_gap}};
    j["params"] = nn::to_json(params_);
    return j;
}

LensModel LensModel::from_json(const nlohmann::json& j) {
    if (j.value("model", std::string()) != "lens") throw InputError("checkpoint is not a LENS model");
    LensModel model(j.at("config").get<LensConfig>());
    model.gaps_.min_gap = j.at("gaps").at("min").get<double>();
    model.gaps_.max_gap = j.at("gaps").at("max").get<double>();
    nn::load_json(model.params_, j.at("params"));
    return model;
}

StepResult step_timestep(const LensModel& model, const std::optional<BeliefState>& previous,
                         const TimestepBatch& batch, const Eigen::MatrixXd& noise) {
    nn::Tape tape(model.params(), false);
    GaussianVar prior;
    if (previous) {
        if (batch.t <= previous->t) throw InputError("step_timestep: batch timestep must follow the previous belief");
        prior = model.forecast(tape, constant_gaussian(tape, previous->posterior), model.gaps()(batch.t - previous->t));
    } else {
        prior = constant_gaussian(tape, DiagonalGaussian::standard(model.latent_dim()));
    }
    auto step = traced_step(tape, model, prior, batch, noise);
    return StepResult{BeliefState{batch.student, batch.t, step.posterior.value(0, model.config().log_var_clamp)},
                      step.nll.value()(0, 0), step.kl.value()(0, 0)};
}

TracedLoss sequence_loss(nn::Tape& tape, const LensModel& model, std::span<const TimestepBatch> batches, double beta,
                         std::span<const Eigen::MatrixXd> noise) {
    if (batches.empty()) throw InputError("sequence_loss: empty sequence");
    if (noise.size() != batches.size()) throw ShapeError("sequence_loss: need one noise block per timestep");
    const int truncation = model.config().truncation_length;
    TracedLoss out;
    std::optional<GaussianVar> previous;
    int chain = 0;
    for (std::size_t i = 0; i < batches.size(); ++i) {
        GaussianVar prior;
        if (!previous) {
            prior = constant_gaussian(tape, DiagonalGaussian::standard(model.latent_dim()));
        } else {
            if (batches[i].t <= batches[i - 1].t)
                throw InputError("sequence_loss: timesteps must be strictly increasing (t=" +
                                 std::to_string(batches[i].t) + " after t=" + std::to_string(batches[i - 1].t) + ")");
            GaussianVar input = *previous;
            if (truncation == 0 || (truncation > 0 && chain >= truncation)) {
                input = GaussianVar{nn::detach(input.mean), nn::detach(input.log_var)};
                chain = 0;
            }
            prior = model.forecast(tape, input, model.gaps()(batches[i].t - batches[i - 1].t));
            ++chain;
        }
        auto step = traced_step(tape, model, prior, batches[i], noise[i]);
        nn::Var term = nn::add(step.nll, nn::scale(step.kl, beta));
        out.loss = i == 0 ? term : nn::add(out.loss, term);
        out.nll += step.nll.value()(0, 0);
        out.kl += step.kl.value()(0, 0);
        previous = step.posterior;
    }
    return out;
}

double sequence_loss(const LensModel& model, std::span<const TimestepBatch> batches, double beta,
                     std::span<const Eigen::MatrixXd> noise) {
    nn::Tape tape(model.params(), false);
    return sequence_loss(tape, model, batches, beta, noise).loss.value()(0, 0);
}

void LensFilter::reset() {
    current_t_.reset();
    prior_.reset();
    posterior_.reset();
    encodings_.clear();
}

void LensFilter::observe(const Interaction& x) {
    const auto& model = *model_;
    if (!current_t_) {
        prior_ = DiagonalGaussian::standard(model.latent_dim());
        current_t_ = x.t;
    } else if (x.t > *current_t_) {
        prior_ = model.forecast(*posterior_, model.gaps()(x.t - *current_t_));
        current_t_ = x.t;
        encodings_.clear();
    } else if (x.t < *current_t_) {
        throw InputError("LensFilter: response at t=" + std::to_string(x.t) + " after t=" + std::to_string(*current_t_));
    }
    encodings_.push_back(model.encode_response(model.item_index(x.item), x.correct));
    posterior_ = fuse(*prior_, encodings_, model.config().log_var_clamp);
}

DiagonalGaussian LensFilter::current() const {
    if (!posterior_) return DiagonalGaussian::standard(model_->latent_dim());
    return *posterior_;
}

DiagonalGaussian LensFilter::belief_at(std::int64_t t) const {
    if (!current_t_) return DiagonalGaussian::standard(model_->latent_dim());
    if (t < *current_t_) throw InputError("LensFilter: cannot predict into the past");
    if (t == *current_t_) return *posterior_;
    return model_->forecast(*posterior_, model_->gaps()(t - *current_t_));
}

Eigen::VectorXd LensFilter::sample_predictions(std::size_t item, std::int64_t t, const Eigen::MatrixXd& noise) const {
    const auto belief = belief_at(t);
    if (noise.rows() != static_cast<Eigen::Index>(belief.dim())) throw ShapeError("prediction noise must be d x S");
    const Eigen::ArrayXd sd = (0.5 * belief.log_var().array()).exp();
    Eigen::MatrixXd samples = (noise.array().colwise() * sd).matrix();
    samples.colwise() += belief.mean();
    return model_->decode_samples(samples, item);
}

double LensFilter::predict(std::size_t item, std::int64_t t, const Eigen::MatrixXd& noise) const {
    const auto p = sample_predictions(item, t, noise);
    return std::clamp(p.mean(), kProbabilityFloor, 1.0 - kProbabilityFloor);
}

double predict_next(const LensModel& model, std::span<const Interaction> history, std::size_t item, std::int64_t t,
                    const Eigen::MatrixXd& noise) {
    LensFilter filter(model);
    for (const auto& x : history) filter.observe(x);
    return filter.predict(item, t, noise);
}

std::vector<std::vector<double>> posterior_trace(const LensModel& model, std::span<const Interaction> history,
                                                 std::size_t item, std::int64_t t,
                                                 std::span<const std::size_t> lengths, const Eigen::MatrixXd& noise) {
    std::vector<std::vector<double>> out;
    out.reserve(lengths.size());
    for (auto length : lengths) {
        if (length > history.size())
            throw InputError("posterior_trace: length " + std::to_string(length) + " exceeds history of " +
                             std::to_string(history.size()));
        LensFilter filter(model);
        for (const auto& x : history.subspan(history.size() - length)) filter.observe(x);
        const auto p = filter.sample_predictions(item, t, noise);
        out.emplace_back(p.data(), p.data() + p.size());
    }
    return out;
}

void to_json(nlohmann::json& j, const EpochMetrics& m) {
    j = nlohmann::json{{"epoch", m.epoch}, {"train_loss", m.train_loss}, {"val_nll", m.val_nll}, {"val_kl", m.val_kl}};
}

}  // namespace lens
