#include "lens/baselines/elo.hpp"

#include <cmath>

#include "lens/error.hpp"

namespace lens::baselines {

namespace {

double logistic(double x) { return 1.0 / (1.0 + std::exp(-x)); }

}  // namespace

EloState::EloState(double k) : k_(k) {
    if (!(k > 0) || !std::isfinite(k)) throw InputError("Elo step size K must be positive");
}

double EloState::rating(std::int64_t student, std::int64_t skill) const {
    auto it = ratings_.find({student, skill});
    return it == ratings_.end() ? 0.0 : it->second;
}

double EloState::difficulty(std::int64_t item) const {
    auto it = difficulties_.find(item);
    return it == difficulties_.end() ? 0.0 : it->second;
}

void EloState::set_rating(std::int64_t student, std::int64_t skill, double value) { ratings_[{student, skill}] = value; }

void EloState::set_difficulty(std::int64_t item, double value) { difficulties_[item] = value; }

double EloState::predict(std::int64_t student, std::int64_t item, std::int64_t skill) const {
    return logistic(rating(student, skill) - difficulty(item));
}

void EloState::update(std::int64_t student, std::int64_t item, std::int64_t skill, int correct) {
    const double delta = k_ * (static_cast<double>(correct) - predict(student, item, skill));
    ratings_[{student, skill}] += delta;
    if (!frozen_) difficulties_[item] -= delta;
}

nlohmann::json EloState::to_json() const {
    // Sorted for stable output.
    std::map<std::int64_t, double> sorted(difficulties_.begin(), difficulties_.end());
    nlohmann::json diffs = nlohmann::json::array();
    for (const auto& [item, d] : sorted) diffs.push_back({item, d});
    return nlohmann::json{{"k", k_}, {"difficulties", diffs}};
}

EloState EloState::from_json(const nlohmann::json& j) {
    EloState state(j.at("k").get<double>());
    for (const auto& entry : j.at("difficulties"))
        state.set_difficulty(entry.at(0).get<std::int64_t>(), entry.at(1).get<double>());
    state.freeze_difficulties(true);
    return state;
}

EloPredictor::EloPredictor(const EloState& fitted) : state_(fitted) {
    state_.clear_ratings();
    state_.freeze_difficulties(true);
}

void EloPredictor::begin_student(std::int64_t) {}

double EloPredictor::predict(const Interaction& next) { return state_.predict(next.student, next.item, next.skill); }

void EloPredictor::observe(const Interaction& x) { state_.update(x.student, x.item, x.skill, x.correct); }

void to_json(nlohmann::json& j, const EloConfig& c) { j = nlohmann::json{{"k_grid", c.k_grid}}; }

void from_json(const nlohmann::json& j, EloConfig& c) {
    if (j.contains("k_grid")) j.at("k_grid").get_to(c.k_grid);
    if (c.k_grid.empty()) throw InputError("elo config: k_grid must not be empty");
    for (double k : c.k_grid)
        if (!(k > 0)) throw InputError("elo config: every K must be positive");
}

EloState elo_pass(const Dataset& data, double k) {
    EloState state(k);
    for (const auto& s : data)
        for (const auto& x : s.responses) state.update(x.student, x.item, x.skill, x.correct);
    return state;
}

EloFit elo_fit(const Dataset& train, const Dataset& validation, const EloConfig& config) {
    if (train.empty()) throw InputError("elo_fit: training set is empty");
    if (config.k_grid.empty()) throw InputError("elo_fit: empty K grid");
    EloFit fit{EloState(config.k_grid.front()), {}};
    double best_auc = -1.0;
    double best_k = config.k_grid.front();
    for (double k : config.k_grid) {
        EloState state = elo_pass(train, k);
        double score = 0.5;
        if (!validation.empty()) {
            EloPredictor predictor(state);
            score = auc(one_step_ahead(predictor, validation).records);
        }
        fit.grid.emplace_back(k, score);
        if (score > best_auc) {
            best_auc = score;
            best_k = k;
        }
    }
    fit.state = elo_pass(train, best_k);
    fit.state.freeze_difficulties(true);
    return fit;
}

}  // namespace lens::baselines
