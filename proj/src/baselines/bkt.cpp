#include "lens/baselines/bkt.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <set>

#include "lens/error.hpp"
#include "lens/random.hpp"

namespace lens::baselines {

namespace {

constexpr double kEps = 1e-6;

bool open_unit(double p) { return p > 0.0 && p < 1.0 && std::isfinite(p); }

struct Observation {
    std::int64_t gs_class = 0;
    int correct = 0;
};

using Sequences = std::vector<std::vector<Observation>>;

struct EmResult {
    BktSkillParameters params;
    std::vector<double> log_likelihood;
};

double emission(const BktSkillParameters& p, int state, const Observation& o) {
    const auto& gs = p.classes.at(o.gs_class);
    const double p_correct = state == 1 ? 1.0 - gs.slip : gs.guess;
    return o.correct == 1 ? p_correct : 1.0 - p_correct;
}

// One E-step; fills the expected counts in `next` and returns the data log-likelihood.
double em_iteration(const BktSkillParameters& p, const Sequences& sequences, BktSkillParameters& next,
                    double max_guess_slip) {
    const std::array<std::array<double, 2>, 2> a{{{1.0 - p.learn, p.learn}, {p.forget, 1.0 - p.forget}}};
    double ll = 0.0;
    double init_mass = 0.0;
    double learn_num = 0.0, learn_den = 0.0, forget_num = 0.0, forget_den = 0.0;
    std::map<std::int64_t, std::array<double, 4>> cls;  // guess num/den, slip num/den
    std::vector<std::array<double, 2>> alpha, beta;
    std::vector<double> scale;
    for (const auto& seq : sequences) {
        const std::size_t n = seq.size();
        alpha.assign(n, {0.0, 0.0});
        beta.assign(n, {1.0, 1.0});
        scale.assign(n, 0.0);
        for (std::size_t t = 0; t < n; ++t) {
            for (int j = 0; j < 2; ++j) {
                double prior;
                if (t == 0)
                    prior = j == 1 ? p.init : 1.0 - p.init;
                else
                    prior = alpha[t - 1][0] * a[0][static_cast<std::size_t>(j)] + alpha[t - 1][1] * a[1][static_cast<std::size_t>(j)];
                alpha[t][static_cast<std::size_t>(j)] = prior * emission(p, j, seq[t]);
            }
            scale[t] = alpha[t][0] + alpha[t][1];
            alpha[t][0] /= scale[t];
            alpha[t][1] /= scale[t];
            ll += std::log(scale[t]);
        }
        for (std::size_t t = n - 1; t-- > 0;) {
            const double e0 = emission(p, 0, seq[t + 1]);
            const double e1 = emission(p, 1, seq[t + 1]);
            for (std::size_t i = 0; i < 2; ++i)
                beta[t][i] = (a[i][0] * e0 * beta[t + 1][0] + a[i][1] * e1 * beta[t + 1][1]) / scale[t + 1];
        }
        for (std::size_t t = 0; t < n; ++t) {
            double g0 = alpha[t][0] * beta[t][0];
            double g1 = alpha[t][1] * beta[t][1];
            const double z = g0 + g1;
            g0 /= z;
            g1 /= z;
            if (t == 0) init_mass += g1;
            auto& c = cls[seq[t].gs_class];
            c[0] += g0 * seq[t].correct;
            c[1] += g0;
            c[2] += g1 * (1 - seq[t].correct);
            c[3] += g1;
            if (t + 1 < n) {
                const double e0 = emission(p, 0, seq[t + 1]);
                const double e1 = emission(p, 1, seq[t + 1]);
                const double norm = scale[t + 1];
                const double x01 = alpha[t][0] * a[0][1] * e1 * beta[t + 1][1] / norm;
                const double x00 = alpha[t][0] * a[0][0] * e0 * beta[t + 1][0] / norm;
                const double x10 = alpha[t][1] * a[1][0] * e0 * beta[t + 1][0] / norm;
                const double x11 = alpha[t][1] * a[1][1] * e1 * beta[t + 1][1] / norm;
                learn_num += x01;
                learn_den += x00 + x01;
                forget_num += x10;
                forget_den += x10 + x11;
            }
        }
    }
    // Each update is the maximiser of a concave one-dimensional objective
    // projected onto its box, so the clamped step is still an EM step.
    auto ratio = [](double num, double den, double fallback) { return den > 0 ? num / den : fallback; };
    next.init = std::clamp(init_mass / static_cast<double>(sequences.size()), kEps, 1.0 - kEps);
    next.learn = std::clamp(ratio(learn_num, learn_den, p.learn), kEps, 1.0 - kEps);
    next.forget = std::clamp(ratio(forget_num, forget_den, p.forget), kEps, 1.0 - kEps);
    next.classes = p.classes;
    for (const auto& [c, counts] : cls) {
        auto& gs = next.classes[c];
        gs.guess = std::clamp(ratio(counts[0], counts[1], gs.guess), kEps, max_guess_slip);
        gs.slip = std::clamp(ratio(counts[2], counts[3], gs.slip), kEps, max_guess_slip);
    }
    return ll;
}

EmResult run_em(BktSkillParameters start, const Sequences& sequences, const BktConfig& config) {
    EmResult result{start, {}};
    BktSkillParameters current = start;
    for (int iter = 0; iter < config.max_iterations; ++iter) {
        BktSkillParameters next;
        const double ll = em_iteration(current, sequences, next, config.max_guess_slip);
        result.params = current;
        result.log_likelihood.push_back(ll);
        const std::size_t k = result.log_likelihood.size();
        if (k >= 2 && result.log_likelihood[k - 1] - result.log_likelihood[k - 2] < config.tolerance) break;
        current = next;
    }
    return result;
}

}  // namespace

double bkt_transition(double mastery, double learn, double forget) {
    return mastery * (1.0 - forget) + (1.0 - mastery) * learn;
}

double bkt_correct_probability(double mastery, const GuessSlip& gs) {
    return mastery * (1.0 - gs.slip) + (1.0 - mastery) * gs.guess;
}

double bkt_posterior(double mastery, const GuessSlip& gs, int correct) {
    const double mastered = correct == 1 ? mastery * (1.0 - gs.slip) : mastery * gs.slip;
    const double unmastered = correct == 1 ? (1.0 - mastery) * gs.guess : (1.0 - mastery) * (1.0 - gs.guess);
    const double z = mastered + unmastered;
    if (!(z > 0)) throw NumericError("BKT posterior: zero evidence");
    return mastered / z;
}

void BktParameters::set_skill(std::int64_t skill, BktSkillParameters params) {
    if (!open_unit(params.init) || !open_unit(params.learn) || !open_unit(params.forget))
        throw InputError("BKT skill " + std::to_string(skill) + ": L0, T and F must lie in (0, 1)");
    for (const auto& [c, gs] : params.classes) {
        if (!open_unit(gs.guess) || !open_unit(gs.slip))
            throw InputError("BKT class " + std::to_string(c) + ": guess and slip must lie in (0, 1)");
        if (gs.guess + gs.slip >= 1.0)
            throw InputError("BKT class " + std::to_string(c) + ": guess + slip >= 1 makes responses uninformative");
    }
    skills_[skill] = std::move(params);
}

const BktSkillParameters& BktParameters::skill(std::int64_t skill) const {
    auto it = skills_.find(skill);
    if (it == skills_.end()) throw InputError("BKT: unknown skill " + std::to_string(skill));
    return it->second;
}

std::int64_t BktParameters::item_class(std::int64_t item, std::int64_t skill) const {
    auto it = item_class_.find(item);
    return it == item_class_.end() ? skill : it->second;
}

const GuessSlip& BktParameters::guess_slip(const Interaction& x) const {
    const auto& sp = skill(x.skill);
    const auto c = item_class(x.item, x.skill);
    auto it = sp.classes.find(c);
    if (it == sp.classes.end())
        throw InputError("BKT: skill " + std::to_string(x.skill) + " has no guess/slip class " + std::to_string(c));
    return it->second;
}

nlohmann::json BktParameters::to_json() const {
    nlohmann::json skills = nlohmann::json::array();
    for (const auto& [id, p] : skills_) {
        nlohmann::json classes = nlohmann::json::array();
        for (const auto& [c, gs] : p.classes) classes.push_back({{"class", c}, {"guess", gs.guess}, {"slip", gs.slip}});
        skills.push_back(
            {{"skill", id}, {"init", p.init}, {"learn", p.learn}, {"forget", p.forget}, {"classes", classes}});
    }
    std::map<std::int64_t, std::int64_t> sorted(item_class_.begin(), item_class_.end());
    nlohmann::json items = nlohmann::json::array();
    for (const auto& [item, c] : sorted) items.push_back({item, c});
    return nlohmann::json{{"skills", skills}, {"item_classes", items}};
}

BktParameters BktParameters::from_json(const nlohmann::json& j) {
    BktParameters params;
    for (const auto& s : j.at("skills")) {
        BktSkillParameters p;
        p.init = s.at("init").get<double>();
        p.learn = s.at("learn").get<double>();
        p.forget = s.at("forget").get<double>();
        for (const auto& c : s.at("classes"))
            p.classes[c.at("class").get<std::int64_t>()] = GuessSlip{c.at("guess").get<double>(), c.at("slip").get<double>()};
        params.set_skill(s.at("skill").get<std::int64_t>(), std::move(p));
    }
    if (j.contains("item_classes"))
        for (const auto& e : j.at("item_classes")) params.set_item_class(e.at(0).get<std::int64_t>(), e.at(1).get<std::int64_t>());
    return params;
}

double BktBelief::propagated(const BktParameters& params, std::int64_t skill) const {
    const auto& sp = params.skill(skill);
    auto it = entries_.find(skill);
    if (it == entries_.end() || !it->second.observed) return sp.init;
    return bkt_transition(it->second.mastery, sp.learn, sp.forget);
}

double BktBelief::predict(const BktParameters& params, const Interaction& x) const {
    return bkt_correct_probability(propagated(params, x.skill), params.guess_slip(x));
}

void BktBelief::observe(const BktParameters& params, const Interaction& x) {
    const double m = propagated(params, x.skill);
    entries_[x.skill] = Entry{bkt_posterior(m, params.guess_slip(x), x.correct), true};
}

double BktBelief::mastery(const BktParameters& params, std::int64_t skill) const {
    auto it = entries_.find(skill);
    if (it == entries_.end() || !it->second.observed) return params.skill(skill).init;
    return it->second.mastery;
}

void to_json(nlohmann::json& j, const BktConfig& c) {
    j = nlohmann::json{{"restarts", c.restarts},
                       {"max_iterations", c.max_iterations},
                       {"tolerance", c.tolerance},
                       {"max_guess_slip", c.max_guess_slip},
                       {"seed", c.seed}};
}

void from_json(const nlohmann::json& j, BktConfig& c) {
    if (j.contains("restarts")) j.at("restarts").get_to(c.restarts);
    if (j.contains("max_iterations")) j.at("max_iterations").get_to(c.max_iterations);
    if (j.contains("tolerance")) j.at("tolerance").get_to(c.tolerance);
    if (j.contains("max_guess_slip")) j.at("max_guess_slip").get_to(c.max_guess_slip);
    if (j.contains("seed")) j.at("seed").get_to(c.seed);
    if (c.restarts < 1 || c.max_iterations < 1 || !(c.tolerance > 0) || !(c.max_guess_slip > 0 && c.max_guess_slip <= 0.5))
        throw InputError("bkt config: restarts/max_iterations must be >= 1, tolerance > 0, max_guess_slip in (0, 0.5]");
}

BktFit bkt_em_fit(const Dataset& data, const std::unordered_map<std::int64_t, std::int64_t>& item_class,
                  const BktConfig& config) {
    std::map<std::int64_t, Sequences> by_skill;
    for (const auto& s : data) {
        std::map<std::int64_t, std::vector<Observation>> per_skill;
        for (const auto& x : s.responses) {
            auto it = item_class.find(x.item);
            per_skill[x.skill].push_back(Observation{it == item_class.end() ? x.skill : it->second, x.correct});
        }
        for (auto& [skill, obs] : per_skill) by_skill[skill].push_back(std::move(obs));
    }
    BktFit fit;
    for (const auto& [item, c] : item_class) fit.params.set_item_class(item, c);
    for (const auto& [skill, sequences] : by_skill) {
        if (sequences.empty()) {
            fit.warnings.push_back("skill " + std::to_string(skill) + " has no observations; skipped");
            continue;
        }
        std::set<std::int64_t> classes;
        for (const auto& seq : sequences)
            for (const auto& o : seq) classes.insert(o.gs_class);
        std::optional<EmResult> best;
        for (int r = 0; r < config.restarts; ++r) {
            BktSkillParameters start;
            auto rng = make_stream(config.seed, {kBktStream, static_cast<std::uint64_t>(skill), static_cast<std::uint64_t>(r)});
            if (r > 0) {
                start.init = 0.05 + 0.9 * uniform01(rng);
                start.learn = 0.01 + 0.49 * uniform01(rng);
                start.forget = 0.001 + 0.199 * uniform01(rng);
            }
            for (auto c : classes) {
                GuessSlip gs;
                if (r > 0) {
                    gs.guess = 0.05 + 0.4 * uniform01(rng);
                    gs.slip = 0.05 + 0.4 * uniform01(rng);
                }
                start.classes[c] = gs;
            }
            auto result = run_em(start, sequences, config);
            if (!best || result.log_likelihood.back() > best->log_likelihood.back()) best = std::move(result);
        }
        fit.params.set_skill(skill, best->params);
        fit.log_likelihood[skill] = best->log_likelihood;
    }
    return fit;
}

double bkt_log_likelihood(const BktParameters& params, const Dataset& data) {
    double ll = 0.0;
    for (const auto& s : data) {
        BktBelief belief;
        for (const auto& x : s.responses) {
            const double p = belief.predict(params, x);
            ll += std::log(x.correct == 1 ? p : 1.0 - p);
            belief.observe(params, x);
        }
    }
    return ll;
}

}  // namespace lens::baselines
