#pragma once

// Bayesian Knowledge Tracing with forgetting and per-class guess/slip
// ("multigs"). Each skill is an independent two-state HMM: a learn/forget
// transition between consecutive observations of the skill and a
// guess/slip emission that depends on the item's class.

#include <cstdint>
#include <map>
#include <string>
#include <unordered_map>
#include <vector>

#include "json.hpp"
#include "lens/dataset.hpp"
#include "lens/eval.hpp"

namespace lens::baselines {

struct GuessSlip {
    double guess = 0.2;
    double slip = 0.1;
};

struct BktSkillParameters {
    double init = 0.4;    // L0
    double learn = 0.2;   // T
    double forget = 0.05; // F
    std::map<std::int64_t, GuessSlip> classes;
};

/// m' = m (1 - F) + (1 - m) T
double bkt_transition(double mastery, double learn, double forget);
/// p(correct) = m (1 - s) + (1 - m) g
double bkt_correct_probability(double mastery, const GuessSlip& gs);
/// Posterior mastery after observing `correct`.
double bkt_posterior(double mastery, const GuessSlip& gs, int correct);

class BktParameters {
public:
    /// Every probability must lie in (0, 1) and guess + slip < 1.
    void set_skill(std::int64_t skill, BktSkillParameters params);
    void set_item_class(std::int64_t item, std::int64_t gs_class) { item_class_[item] = gs_class; }

    const BktSkillParameters& skill(std::int64_t skill) const;
    bool has_skill(std::int64_t skill) const { return skills_.count(skill) != 0; }
    const std::map<std::int64_t, BktSkillParameters>& skills() const { return skills_; }

    /// Guess/slip class of an item; defaults to its skill.
    std::int64_t item_class(std::int64_t item, std::int64_t skill) const;
    const GuessSlip& guess_slip(const Interaction& x) const;

    nlohmann::json to_json() const;
    static BktParameters from_json(const nlohmann::json& j);

private:
    std::map<std::int64_t, BktSkillParameters> skills_;
    std::unordered_map<std::int64_t, std::int64_t> item_class_;
};

/// Per-skill mastery beliefs of one student.
class BktBelief {
public:
    struct Entry {
        double mastery = 0.0;
        bool observed = false;
    };

    /// Predicted p(correct) for `x`; the transition is applied only if the
    /// skill has been observed before (otherwise the prior is L0).
    double predict(const BktParameters& params, const Interaction& x) const;
    void observe(const BktParameters& params, const Interaction& x);
    double mastery(const BktParameters& params, std::int64_t skill) const;

private:
    double propagated(const BktParameters& params, std::int64_t skill) const;

    std::map<std::int64_t, Entry> entries_;
};

class BktPredictor : public OnlinePredictor {
public:
    explicit BktPredictor(const BktParameters& params) : params_(&params) {}

    void begin_student(std::int64_t) override { belief_ = BktBelief(); }
    double predict(const Interaction& next) override { return belief_.predict(*params_, next); }
    void observe(const Interaction& x) override { belief_.observe(*params_, x); }

private:
    const BktParameters* params_;
    BktBelief belief_;
};

struct BktConfig {
    int restarts = 5;
    int max_iterations = 200;
    double tolerance = 1e-6;
    double max_guess_slip = 0.5 - 1e-6;
    std::uint64_t seed = 0;
};

void to_json(nlohmann::json& j, const BktConfig& c);
void from_json(const nlohmann::json& j, BktConfig& c);

struct BktFit {
    BktParameters params;
    /// Log-likelihood per EM iteration of the winning restart, per skill.
    std::map<std::int64_t, std::vector<double>> log_likelihood;
    std::vector<std::string> warnings;
};

/// Baum-Welch EM per skill. `item_class` maps items to guess/slip classes
/// (items missing from the map use their skill id). The first restart starts
/// from L0=0.4, T=0.2, F=0.05, g=0.2, s=0.1; the rest are seeded random.
BktFit bkt_em_fit(const Dataset& data, const std::unordered_map<std::int64_t, std::int64_t>& item_class,
                  const BktConfig& config);

/// Log-likelihood of the data under fixed parameters (forward algorithm).
double bkt_log_likelihood(const BktParameters& params, const Dataset& data);

}  // namespace lens::baselines
