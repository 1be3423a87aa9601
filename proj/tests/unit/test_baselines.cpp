#include <cmath>
#include <vector>

#include "bkt_source.hpp"
#include "doctest.h"
#include "lens/baselines/bkt.hpp"
#include "lens/baselines/elo.hpp"
#include "lens/error.hpp"
#include "lens/eval.hpp"

using namespace lens;
using namespace lens::baselines;

TEST_CASE("elo predict examples") {
    EloState elo(0.4);
    CHECK(elo.predict(1, 7, 0) == 0.5);
    elo.set_rating(1, 0, 0.8);
    elo.set_difficulty(7, 0.8);
    CHECK(elo.predict(1, 7, 0) == 0.5);
    elo.set_rating(2, 0, 1.0);
    CHECK(elo.predict(2, 3, 0) == doctest::Approx(0.7310585786300049).epsilon(1e-15));
}

TEST_CASE("elo update examples") {
    SUBCASE("hand arithmetic") {
        EloState elo(0.4);
        elo.update(1, 7, 0, 1);
        CHECK(elo.rating(1, 0) == doctest::Approx(0.2).epsilon(1e-15));
        CHECK(elo.difficulty(7) == doctest::Approx(-0.2).epsilon(1e-15));
    }
    SUBCASE("update vanishes as p approaches y") {
        EloState elo(0.4);
        elo.set_rating(1, 0, 40.0);
        elo.update(1, 7, 0, 1);
        CHECK(std::abs(elo.rating(1, 0) - 40.0) < 1e-15);
    }
    SUBCASE("students are independent") {
        EloState elo(0.4);
        elo.update(1, 7, 0, 1);
        CHECK(elo.rating(2, 0) == 0.0);
        CHECK(elo.rating(1, 1) == 0.0);
    }
    SUBCASE("frozen difficulties do not move") {
        EloState elo(0.4);
        elo.freeze_difficulties(true);
        elo.update(1, 7, 0, 1);
        CHECK(elo.difficulty(7) == 0.0);
        CHECK(elo.rating(1, 0) > 0.0);
    }
}

TEST_CASE("elo properties") {
    auto rng = make_stream(21, {1});
    SUBCASE("shift invariance") {
        for (int c = 0; c < 100; ++c) {
            const double theta = 4 * uniform01(rng) - 2, d = 4 * uniform01(rng) - 2, shift = 10 * uniform01(rng) - 5;
            EloState a, b;
            a.set_rating(0, 0, theta);
            a.set_difficulty(0, d);
            b.set_rating(0, 0, theta + shift);
            b.set_difficulty(0, d + shift);
            CHECK(a.predict(0, 0, 0) == doctest::Approx(b.predict(0, 0, 0)).epsilon(1e-12));
        }
    }
    SUBCASE("constant-correct responses raise theta monotonically") {
        EloState elo(0.4);
        double last = elo.rating(0, 0);
        for (int k = 0; k < 50; ++k) {
            elo.update(0, k % 5, 0, 1);
            CHECK(elo.rating(0, 0) > last);
            last = elo.rating(0, 0);
        }
    }
}

TEST_CASE("elo K search picks the best validation AUC") {
    Dataset train, val;
    auto rng = make_stream(22, {1});
    for (int i = 0; i < 60; ++i) {
        StudentSequence s{i, {}};
        const double ability = 2 * uniform01(rng) - 1;
        for (int t = 0; t < 30; ++t) {
            const int item = static_cast<int>(rng() % 8);
            const double p = 1.0 / (1.0 + std::exp(-(ability - 0.3 * (item - 4))));
            s.responses.push_back(Interaction{i, t, item, item % 2, bernoulli(rng, p) ? 1 : 0});
        }
        (i < 45 ? train : val).push_back(s);
    }
    auto fit = elo_fit(train, val, EloConfig{});
    REQUIRE(fit.grid.size() == 4);
    double best = -1, best_k = 0;
    for (auto [k, a] : fit.grid)
        if (a > best) best = a, best_k = k;
    CHECK(fit.state.k() == best_k);
    CHECK(fit.state.difficulties_frozen());

    EloPredictor predictor(fit.state);
    auto result = one_step_ahead(predictor, val);
    CHECK(auc(result.records) > 0.5);
}

TEST_CASE("elo json round trip") {
    EloState elo(0.2);
    elo.update(1, 3, 0, 1);
    elo.update(1, 4, 0, 0);
    auto restored = EloState::from_json(nlohmann::json::parse(elo.to_json().dump()));
    CHECK(restored.k() == 0.2);
    CHECK(restored.difficulty(3) == elo.difficulty(3));
    CHECK(restored.difficulty(4) == elo.difficulty(4));
}

TEST_CASE("bkt forward examples") {
    CHECK(bkt_correct_probability(bkt_transition(1.0, 0.3, 0.0), {0.2, 0.1}) == doctest::Approx(0.9).epsilon(1e-15));
    CHECK(bkt_correct_probability(bkt_transition(0.0, 0.0, 0.1), {0.2, 0.1}) == doctest::Approx(0.2).epsilon(1e-15));
    const double m = bkt_transition(0.5, 0.1, 0.05);
    CHECK(m == doctest::Approx(0.525).epsilon(1e-15));
    CHECK(bkt_correct_probability(m, {0.2, 0.1}) == doctest::Approx(0.5675).epsilon(1e-15));
}

TEST_CASE("bkt observe examples") {
    CHECK(bkt_posterior(0.5, {0.2, 0.1}, 1) == doctest::Approx(0.45 / 0.55).epsilon(1e-15));
    CHECK(bkt_posterior(0.5, {0.2, 0.1}, 0) == doctest::Approx(0.05 / 0.45).epsilon(1e-15));
    CHECK(bkt_posterior(1.0, {0.2, 0.1}, 0) == 1.0);
    CHECK(bkt_posterior(1.0, {0.2, 0.1}, 1) == 1.0);
}

TEST_CASE("bkt parameter guards") {
    BktParameters p;
    BktSkillParameters degenerate;
    degenerate.classes[0] = {0.9, 0.1};
    CHECK_THROWS_AS(p.set_skill(0, degenerate), InputError);
    BktSkillParameters out_of_range;
    out_of_range.learn = 1.0;
    CHECK_THROWS_AS(p.set_skill(0, out_of_range), InputError);
    CHECK_THROWS_AS(p.skill(3), InputError);
}

TEST_CASE("bkt belief properties") {
    auto rng = make_stream(23, {1});
    for (int c = 0; c < 100; ++c) {
        BktParameters params;
        BktSkillParameters sp;
        sp.init = 0.05 + 0.9 * uniform01(rng);
        sp.learn = 0.01 + 0.5 * uniform01(rng);
        sp.forget = c % 2 == 0 ? 1e-9 : 0.3 * uniform01(rng);
        sp.classes[0] = {0.01 + 0.45 * uniform01(rng), 0.01 + 0.45 * uniform01(rng)};
        params.set_skill(0, sp);
        BktBelief belief;
        for (int k = 0; k < 40; ++k) {
            const Interaction x{0, k, k % 3, 0, bernoulli(rng, 0.5) ? 1 : 0};
            const double p = belief.predict(params, x);
            CHECK(p >= 0.0);
            CHECK(p <= 1.0);
            belief.observe(params, x);
            const double m = belief.mastery(params, 0);
            CHECK(m >= 0.0);
            CHECK(m <= 1.0);
        }
    }
    for (int c = 0; c < 1000; ++c) {
        const double m = uniform01(rng), t = uniform01(rng);
        CHECK(bkt_transition(m, t, 0.0) >= m);
    }
}

TEST_CASE("bkt predictor applies the transition after the first observation") {
    BktParameters params;
    BktSkillParameters sp{0.4, 0.2, 0.05, {{0, {0.2, 0.1}}}};
    params.set_skill(0, sp);
    BktBelief belief;
    const Interaction first{0, 0, 1, 0, 1};
    CHECK(belief.predict(params, first) == doctest::Approx(0.4 * 0.9 + 0.6 * 0.2).epsilon(1e-15));
    belief.observe(params, first);
    const double post = bkt_posterior(0.4, {0.2, 0.1}, 1);
    const double m = bkt_transition(post, 0.2, 0.05);
    CHECK(belief.predict(params, Interaction{0, 1, 2, 0, 0}) ==
          doctest::Approx(bkt_correct_probability(m, {0.2, 0.1})).epsilon(1e-14));
}

TEST_CASE("bkt em") {
    const BktSkillParameters truth{0.3, 0.15, 0.05, {{0, {0.25, 0.1}}}};
    const auto data = testing::simulate_bkt_source(truth, 2000, 50, 5);
    BktConfig config;
    config.seed = 1;
    const auto fit = bkt_em_fit(data, {}, config);

    SUBCASE("log-likelihood never decreases") {
        const auto& ll = fit.log_likelihood.at(0);
        REQUIRE(ll.size() >= 2);
        for (std::size_t i = 1; i < ll.size(); ++i) CHECK(ll[i] >= ll[i - 1] - 1e-9);
    }
    SUBCASE("recovers the generating parameters") {
        const auto& p = fit.params.skill(0);
        CHECK(std::abs(p.init - truth.init) < 0.05);
        CHECK(std::abs(p.learn - truth.learn) < 0.05);
        CHECK(std::abs(p.forget - truth.forget) < 0.05);
        CHECK(std::abs(p.classes.at(0).guess - 0.25) < 0.05);
        CHECK(std::abs(p.classes.at(0).slip - 0.1) < 0.05);
    }
    SUBCASE("deterministic for a seed") {
        const auto again = bkt_em_fit(data, {}, config);
        CHECK(again.params.to_json() == fit.params.to_json());
    }
    SUBCASE("fitted likelihood beats the starting point") {
        BktParameters start;
        start.set_skill(0, BktSkillParameters{0.4, 0.2, 0.05, {{0, {0.2, 0.1}}}});
        CHECK(bkt_log_likelihood(fit.params, data) > bkt_log_likelihood(start, data));
    }
    SUBCASE("json round trip") {
        const auto restored = BktParameters::from_json(nlohmann::json::parse(fit.params.to_json().dump()));
        CHECK(restored.to_json() == fit.params.to_json());
    }
}

TEST_CASE("bkt guess and slip stay below one half") {
    // Responses anti-correlated with practice push an unconstrained fit past the guard.
    Dataset data;
    auto rng = make_stream(24, {1});
    for (int i = 0; i < 200; ++i) {
        StudentSequence s{i, {}};
        for (int t = 0; t < 20; ++t) s.responses.push_back(Interaction{i, t, 0, 0, bernoulli(rng, t < 10 ? 0.9 : 0.1)});
        data.push_back(s);
    }
    const auto fit = bkt_em_fit(data, {}, BktConfig{});
    const auto& gs = fit.params.skill(0).classes.at(0);
    CHECK(gs.guess < 0.5);
    CHECK(gs.slip < 0.5);
}

TEST_CASE("bkt classes follow the item map") {
    const auto data = testing::simulate_bkt_source({0.3, 0.15, 0.05, {{0, {0.25, 0.1}}}}, 200, 20, 6);
    std::unordered_map<std::int64_t, std::int64_t> classes;
    for (std::int64_t item = 0; item < 5; ++item) classes[item] = 100;
    const auto fit = bkt_em_fit(data, classes, BktConfig{});
    const auto& sp = fit.params.skill(0);
    CHECK(sp.classes.count(100) == 1);
    CHECK(sp.classes.count(0) == 1);
    CHECK(fit.params.item_class(3, 0) == 100);
    CHECK(fit.params.item_class(7, 0) == 0);
}
