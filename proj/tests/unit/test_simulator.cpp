#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>

#include "doctest.h"
#include "lens/dataset.hpp"
#include "lens/error.hpp"
#include "lens/simulator.hpp"

using namespace lens;
using namespace lens::sim;

namespace {

// |observed - p| within three binomial standard errors.
bool within_3_sigma(std::size_t hits, std::size_t n, double p) {
    const double rate = static_cast<double>(hits) / static_cast<double>(n);
    return std::abs(rate - p) <= 3.0 * std::sqrt(p * (1 - p) / static_cast<double>(n));
}

}  // namespace

TEST_CASE("skill graph") {
    SimConfig config;
    auto graph = config.graph();
    CHECK(graph.skill_count() == 6);
    const auto& order = graph.topological_order();
    for (auto [a, b] : graph.edges())
        CHECK(std::find(order.begin(), order.end(), a) < std::find(order.begin(), order.end(), b));
    CHECK_THROWS_AS(SkillGraph(3, {{0, 1}, {1, 2}, {2, 0}}), InputError);
    CHECK_THROWS_AS(SkillGraph(3, {{0, 3}}), InputError);
}

TEST_CASE("initial profiles") {
    SimConfig config;
    const auto graph = config.graph();
    const std::size_t n = 10000;
    std::size_t root = 0, blocked_n = 0, blocked_hit = 0;
    for (std::size_t i = 0; i < n; ++i) {
        auto rng = make_stream(1, {i});
        const auto p = init_profile(graph, config, rng);
        root += p[0];
        if (!p[0]) {
            ++blocked_n;
            blocked_hit += p[1];
        }
    }
    CHECK(within_3_sigma(root, n, 0.2));
    CHECK(within_3_sigma(blocked_hit, blocked_n, 0.05));
}

TEST_CASE("transition examples") {
    const auto graph = SimConfig{}.graph();
    auto rng = make_stream(2, {1});
    SUBCASE("no forgetting keeps mastered skills") {
        SimConfig config;
        config.p_forget = 0.0;
        SkillProfile p(6, 1);
        for (int k = 0; k < 1000; ++k) p = transition_profile(graph, config, p, rng);
        CHECK(p == SkillProfile(6, 1));
    }
    SUBCASE("certain learning with prerequisites held") {
        SimConfig config;
        config.p_learn_ready = 1.0;
        SkillProfile p{1, 0, 0, 0, 0, 0};
        auto next = transition_profile(graph, config, p, rng);
        CHECK(next[1] == 1);
        CHECK(next[3] == 1);
    }
    SUBCASE("long-run root prevalence") {
        SimConfig config;
        const int chains = 4000, steps = 300;
        std::size_t held = 0;
        for (int c = 0; c < chains; ++c) {
            SkillProfile p(6, 0);
            for (int k = 0; k < steps; ++k) p = transition_profile(graph, config, p, rng);
            held += p[0];
        }
        const double stationary = config.p_learn_ready / (config.p_learn_ready + config.p_forget);
        CHECK(within_3_sigma(held, chains, stationary));
    }
}

TEST_CASE("answer_item rates") {
    SimConfig config;
    const auto bank = ItemBank::uniform(1000, 6);
    auto rng = make_stream(3, {1});
    const SkillProfile mastered(6, 1), unmastered(6, 0);
    const std::size_t n = 100000;
    std::size_t right_mastered = 0, right_unmastered = 0;
    for (std::size_t k = 0; k < n; ++k) {
        right_mastered += answer_item(config, bank, mastered, k % 1000, rng);
        right_unmastered += answer_item(config, bank, unmastered, k % 1000, rng);
    }
    CHECK(within_3_sigma(right_mastered, n, 0.9));
    CHECK(within_3_sigma(right_unmastered, n, 0.2));
    CHECK_THROWS_AS(answer_item(config, bank, mastered, 1000, rng), InputError);
}

TEST_CASE("item bank alignment") {
    const auto bank = ItemBank::uniform(1000, 6);
    std::vector<std::size_t> counts(6, 0);
    for (std::size_t j = 0; j < 1000; ++j) ++counts[bank.skill_of(j)];
    CHECK(counts == std::vector<std::size_t>{167, 167, 167, 167, 166, 166});
    CHECK(bank.skill_of(0) == 0);
    CHECK(bank.skill_of(999) == 5);
}

TEST_CASE("dataset generation") {
    SimConfig config;
    config.students = 200;
    config.timesteps = 30;
    config.seed = 4;
    const auto data = generate_dataset(config);
    const auto bank = ItemBank::uniform(config.item_bank_size, config.skill_count);

    SUBCASE("counts and ordering") {
        CHECK(data.interactions.size() == 200 * 30 * 5);
        CHECK(data.profiles.size() == 200 * 30);
        CHECK(std::is_sorted(data.interactions.begin(), data.interactions.end(), [](auto& a, auto& b) {
            return std::pair(a.student, a.t) < std::pair(b.student, b.t);
        }));
    }
    SUBCASE("no repeated item within a step and skill tags match the bank") {
        for (std::size_t k = 0; k < data.interactions.size(); k += 5) {
            std::set<std::int64_t> items;
            for (std::size_t j = k; j < k + 5; ++j) {
                items.insert(data.interactions[j].item);
                CHECK(data.interactions[j].skill ==
                      static_cast<std::int64_t>(bank.skill_of(static_cast<std::size_t>(data.interactions[j].item))));
            }
            CHECK(items.size() == 5);
        }
    }
    SUBCASE("single student, single step") {
        SimConfig tiny;
        tiny.students = 1;
        tiny.timesteps = 1;
        const auto d = generate_dataset(tiny);
        CHECK(d.interactions.size() == 5);
        for (const auto& x : d.interactions) CHECK(x.t == 0);
    }
    SUBCASE("same seed gives identical output") {
        std::ostringstream a, b;
        write_jsonl(a, data.interactions);
        write_jsonl(b, generate_dataset(config).interactions);
        CHECK(a.str() == b.str());
    }
    SUBCASE("different seeds differ") {
        auto other = config;
        other.seed = 5;
        CHECK(generate_dataset(other).interactions != data.interactions);
    }
}

TEST_CASE("acquisition without prerequisites happens at the unready rate") {
    SimConfig config;
    config.students = 3000;
    config.timesteps = 60;
    config.seed = 6;
    const auto graph = config.graph();
    std::size_t candidates = 0, acquired = 0;
    generate_dataset(config, [&](const SimulatedStudent& s) {
        for (std::size_t t = 0; t + 1 < s.profiles.size(); ++t) {
            const auto& now = s.profiles[t].skills;
            const auto& next = s.profiles[t + 1].skills;
            for (std::size_t k = 0; k < now.size(); ++k) {
                if (now[k] || graph.prerequisites_met(now, k)) continue;
                ++candidates;
                acquired += next[k];
            }
        }
    });
    REQUIRE(candidates > 10000);
    CHECK(within_3_sigma(acquired, candidates, config.p_learn_unready));
}

TEST_CASE("config validation") {
    SimConfig config;
    config.items_per_step = 1001;
    CHECK_THROWS_AS(config.validate(), InputError);
    SimConfig bad_p;
    bad_p.guess = 1.5;
    CHECK_THROWS_AS(bad_p.validate(), InputError);
    nlohmann::json j = SimConfig{};
    j["unknown"] = 1;
    CHECK_THROWS_AS(j.get<SimConfig>(), InputError);
}

TEST_CASE("profile records") {
    CHECK(to_jsonl(ProfileRecord{3, 7, {1, 0, 1}}) == R"({"student":3,"t":7,"skills":[1,0,1]})");
}
