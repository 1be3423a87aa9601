#pragma once

#include <cstdint>
#include <map>
#include <unordered_map>
#include <utility>
#include <vector>

#include "json.hpp"
#include "lens/dataset.hpp"
#include "lens/eval.hpp"

namespace lens::baselines {

/// Elo with one rating per (student, skill) and one difficulty per item.
class EloState {
public:
    explicit EloState(double k = 0.4);

    double k() const { return k_; }
    double rating(std::int64_t student, std::int64_t skill) const;
    double difficulty(std::int64_t item) const;
    void set_rating(std::int64_t student, std::int64_t skill, double value);
    void set_difficulty(std::int64_t item, double value);

    /// sigma(theta_{student, skill(item)} - d_item).
    double predict(std::int64_t student, std::int64_t item, std::int64_t skill) const;

    /// theta += K (y - p); d -= K (y - p) unless difficulties are frozen.
    void update(std::int64_t student, std::int64_t item, std::int64_t skill, int correct);

    void freeze_difficulties(bool frozen) { frozen_ = frozen; }
    bool difficulties_frozen() const { return frozen_; }
    void clear_ratings() { ratings_.clear(); }
    const std::unordered_map<std::int64_t, double>& difficulties() const { return difficulties_; }

    nlohmann::json to_json() const;
    static EloState from_json(const nlohmann::json& j);

private:
    double k_;
    bool frozen_ = false;
    std::map<std::pair<std::int64_t, std::int64_t>, double> ratings_;
    std::unordered_map<std::int64_t, double> difficulties_;
};

/// Online Elo predictor over test students: fitted difficulties are frozen
/// and ratings start at zero for every student.
class EloPredictor : public OnlinePredictor {
public:
    explicit EloPredictor(const EloState& fitted);

    void begin_student(std::int64_t student) override;
    double predict(const Interaction& next) override;
    void observe(const Interaction& x) override;

private:
    EloState state_;
};

struct EloConfig {
    std::vector<double> k_grid{0.1, 0.2, 0.4, 0.8};
};

void to_json(nlohmann::json& j, const EloConfig& c);
void from_json(const nlohmann::json& j, EloConfig& c);

struct EloFit {
    EloState state;
    std::vector<std::pair<double, double>> grid;  // (K, validation AUC)
};

/// Single online pass over `train` for each K in the grid; K is chosen by the
/// one-step-ahead AUC on `validation` (first maximum wins). The returned state
/// is refitted on `train` with the chosen K and has frozen difficulties.
EloFit elo_fit(const Dataset& train, const Dataset& validation, const EloConfig& config);

/// One online pass over a dataset with a fixed K.
EloState elo_pass(const Dataset& data, double k);

}  // namespace lens::baselines
