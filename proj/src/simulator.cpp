#include "lens/simulator.hpp"

#include <algorithm>
#include <string>
#include <thread>

#include "lens/error.hpp"
#include "lens/model.hpp"

namespace lens::sim {

SkillGraph::SkillGraph(std::size_t skill_count, std::vector<std::pair<std::size_t, std::size_t>> edges)
    : edges_(std::move(edges)), prerequisites_(skill_count) {
    if (skill_count == 0) throw InputError("skill graph needs at least one skill");
    std::vector<std::size_t> indegree(skill_count, 0);
    std::vector<std::vector<std::size_t>> children(skill_count);
    for (const auto& [from, to] : edges_) {
        if (from >= skill_count || to >= skill_count)
            throw InputError("prerequisite edge (" + std::to_string(from) + ", " + std::to_string(to) +
                             ") references a skill outside 0.." + std::to_string(skill_count - 1));
        if (from == to) throw InputError("skill " + std::to_string(from) + " cannot be its own prerequisite");
        prerequisites_[to].push_back(from);
        children[from].push_back(to);
        ++indegree[to];
    }
    // Kahn's algorithm, smallest ready id first.
    std::vector<std::size_t> ready;
    for (std::size_t s = 0; s < skill_count; ++s)
        if (indegree[s] == 0) ready.push_back(s);
    while (!ready.empty()) {
        auto it = std::min_element(ready.begin(), ready.end());
        const std::size_t s = *it;
        ready.erase(it);
        order_.push_back(s);
        for (auto c : children[s])
            if (--indegree[c] == 0) ready.push_back(c);
    }
    if (order_.size() != skill_count) throw InputError("prerequisite graph contains a cycle");
}

bool SkillGraph::prerequisites_met(const SkillProfile& profile, std::size_t skill) const {
    for (auto p : prerequisites_.at(skill))
        if (!profile.at(p)) return false;
    return true;
}

void SimConfig::validate() const {
    if (students == 0 || timesteps == 0 || items_per_step == 0 || item_bank_size == 0 || skill_count == 0)
        throw InputError("sim config: counts must be positive");
    if (items_per_step > item_bank_size)
        throw InputError("sim config: items_per_step (" + std::to_string(items_per_step) + ") exceeds item bank size (" +
                         std::to_string(item_bank_size) + ")");
    if (item_bank_size < skill_count) throw InputError("sim config: item bank smaller than skill count");
    for (double p : {p_all_prereqs, p_missing, p_learn_ready, p_learn_unready, p_forget, slip, guess})
        if (!(p >= 0.0 && p <= 1.0)) throw InputError("sim config: probabilities must lie in [0, 1]");
    SkillGraph(skill_count, edges);
}

void to_json(nlohmann::json& j, const SimConfig& c) {
    nlohmann::json edges = nlohmann::json::array();
    for (const auto& [a, b] : c.edges) edges.push_back({a, b});
    j = nlohmann::json{{"students", c.students},
                       {"timesteps", c.timesteps},
                       {"items_per_step", c.items_per_step},
                       {"item_bank_size", c.item_bank_size},
                       {"skill_count", c.skill_count},
                       {"edges", edges},
                       {"p_all_prereqs", c.p_all_prereqs},
                       {"p_missing", c.p_missing},
                       {"p_learn_ready", c.p_learn_ready},
                       {"p_learn_unready", c.p_learn_unready},
                       {"p_forget", c.p_forget},
                       {"slip", c.slip},
                       {"guess", c.guess},
                       {"seed", c.seed}};
}

void from_json(const nlohmann::json& j, SimConfig& c) {
    static const std::vector<std::string> kKnown = {
        "students",   "timesteps",     "items_per_step",  "item_bank_size", "skill_count",
        "edges",      "p_all_prereqs", "p_missing",       "p_learn_ready",  "p_learn_unready",
        "p_forget",   "slip",          "guess",           "seed"};
    if (!j.is_object()) throw InputError("sim config must be a JSON object");
    for (const auto& [key, _] : j.items())
        if (std::find(kKnown.begin(), kKnown.end(), key) == kKnown.end())
            throw InputError("sim config: unknown key '" + key + "'");
    auto get = [&j](const char* key, auto& field) {
        if (j.contains(key)) j.at(key).get_to(field);
    };
    get("students", c.students);
    get("timesteps", c.timesteps);
    get("items_per_step", c.items_per_step);
    get("item_bank_size", c.item_bank_size);
    get("skill_count", c.skill_count);
    if (j.contains("edges")) {
        c.edges.clear();
        for (const auto& e : j.at("edges")) c.edges.emplace_back(e.at(0).get<std::size_t>(), e.at(1).get<std::size_t>());
    }
    get("p_all_prereqs", c.p_all_prereqs);
    get("p_missing", c.p_missing);
    get("p_learn_ready", c.p_learn_ready);
    get("p_learn_unready", c.p_learn_unready);
    get("p_forget", c.p_forget);
    get("slip", c.slip);
    get("guess", c.guess);
    get("seed", c.seed);
}

ItemBank ItemBank::uniform(std::size_t size, std::size_t skill_count) {
    if (skill_count == 0 || size < skill_count) throw InputError("item bank must have at least one item per skill");
    ItemBank bank;
    bank.skill_of_.reserve(size);
    const std::size_t base = size / skill_count;
    const std::size_t extra = size % skill_count;
    for (std::size_t s = 0; s < skill_count; ++s) {
        const std::size_t count = base + (s < extra ? 1 : 0);
        bank.skill_of_.insert(bank.skill_of_.end(), count, s);
    }
    return bank;
}

std::size_t ItemBank::skill_of(std::size_t item) const {
    if (item >= skill_of_.size()) throw InputError("unknown item " + std::to_string(item));
    return skill_of_[item];
}

SkillProfile init_profile(const SkillGraph& graph, const SimConfig& config, Rng& rng) {
    SkillProfile profile(graph.skill_count(), 0);
    for (auto s : graph.topological_order()) {
        const double p = graph.prerequisites_met(profile, s) ? config.p_all_prereqs : config.p_missing;
        profile[s] = bernoulli(rng, p) ? 1 : 0;
    }
    return profile;
}

SkillProfile transition_profile(const SkillGraph& graph, const SimConfig& config, const SkillProfile& profile,
                                Rng& rng) {
    SkillProfile next(profile.size(), 0);
    for (std::size_t s = 0; s < profile.size(); ++s) {
        if (profile[s]) {
            next[s] = bernoulli(rng, config.p_forget) ? 0 : 1;
        } else {
            const double p = graph.prerequisites_met(profile, s) ? config.p_learn_ready : config.p_learn_unready;
            next[s] = bernoulli(rng, p) ? 1 : 0;
        }
    }
    return next;
}

int answer_item(const SimConfig& config, const ItemBank& bank, const SkillProfile& profile, std::size_t item,
                Rng& rng) {
    const double p = profile.at(bank.skill_of(item)) ? 1.0 - config.slip : config.guess;
    return bernoulli(rng, p) ? 1 : 0;
}

std::string to_jsonl(const ProfileRecord& r) {
    std::string line = "{\"student\":" + std::to_string(r.student) + ",\"t\":" + std::to_string(r.t) + ",\"skills\":[";
    for (std::size_t s = 0; s < r.skills.size(); ++s) {
        if (s) line += ',';
        line += r.skills[s] ? '1' : '0';
    }
    line += "]}";
    return line;
}

SimulatedStudent simulate_student(const SkillGraph& graph, const ItemBank& bank, const SimConfig& config,
                                  std::int64_t student) {
    auto rng = make_stream(config.seed, {kSimulateStream, static_cast<std::uint64_t>(student)});
    SimulatedStudent out;
    out.interactions.reserve(config.timesteps * config.items_per_step);
    out.profiles.reserve(config.timesteps);
    SkillProfile profile = init_profile(graph, config, rng);
    std::vector<std::size_t> chosen;
    chosen.reserve(config.items_per_step);
    for (std::size_t t = 0; t < config.timesteps; ++t) {
        out.profiles.push_back(ProfileRecord{student, static_cast<std::int64_t>(t), profile});
        chosen.clear();
        while (chosen.size() < config.items_per_step) {
            const std::size_t item = static_cast<std::size_t>(rng() % bank.size());
            if (std::find(chosen.begin(), chosen.end(), item) == chosen.end()) chosen.push_back(item);
        }
        for (auto item : chosen) {
            out.interactions.push_back(Interaction{student, static_cast<std::int64_t>(t), static_cast<std::int64_t>(item),
                                                   static_cast<std::int64_t>(bank.skill_of(item)),
                                                   answer_item(config, bank, profile, item, rng)});
        }
        profile = transition_profile(graph, config, profile, rng);
    }
    return out;
}

void generate_dataset(const SimConfig& config, const std::function<void(const SimulatedStudent&)>& sink) {
    config.validate();
    const auto graph = config.graph();
    const auto bank = ItemBank::uniform(config.item_bank_size, config.skill_count);
    // Chunks of students are simulated in parallel and handed to the sink in id order.
    const std::size_t workers = std::max<std::size_t>(1, default_workers());
    const std::size_t chunk = 64 * workers;
    std::vector<SimulatedStudent> buffer;
    for (std::size_t start = 0; start < config.students; start += chunk) {
        const std::size_t count = std::min(chunk, config.students - start);
        buffer.assign(count, SimulatedStudent{});
        auto run = [&](std::size_t w) {
            for (std::size_t k = w; k < count; k += workers)
                buffer[k] = simulate_student(graph, bank, config, static_cast<std::int64_t>(start + k));
        };
        if (workers == 1) {
            run(0);
        } else {
            std::vector<std::thread> threads;
            for (std::size_t w = 0; w < workers; ++w) threads.emplace_back(run, w);
            for (auto& t : threads) t.join();
        }
        for (const auto& s : buffer) sink(s);
    }
}

SimulatedDataset generate_dataset(const SimConfig& config) {
    SimulatedDataset out;
    generate_dataset(config, [&out](const SimulatedStudent& s) {
        out.interactions.insert(out.interactions.end(), s.interactions.begin(), s.interactions.end());
        out.profiles.insert(out.profiles.end(), s.profiles.begin(), s.profiles.end());
    });
    return out;
}

}  // namespace lens::sim
