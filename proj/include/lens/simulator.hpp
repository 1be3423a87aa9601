#pragma once

// Dynamic cognitive-diagnostic simulator: binary skills evolving over a
// prerequisite DAG, answered through a DINA-style slip/guess response model.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <utility>
#include <vector>

#include "json.hpp"
#include "lens/dataset.hpp"
#include "lens/random.hpp"

namespace lens::sim {

using SkillProfile = std::vector<std::uint8_t>;

/// Prerequisite graph; an edge (a, b) means a is a prerequisite of b.
class SkillGraph {
public:
    /// Throws InputError on out-of-range nodes or cycles.
    SkillGraph(std::size_t skill_count, std::vector<std::pair<std::size_t, std::size_t>> edges);

    std::size_t skill_count() const { return prerequisites_.size(); }
    const std::vector<std::size_t>& prerequisites(std::size_t skill) const { return prerequisites_.at(skill); }
    const std::vector<std::size_t>& topological_order() const { return order_; }
    const std::vector<std::pair<std::size_t, std::size_t>>& edges() const { return edges_; }

    bool prerequisites_met(const SkillProfile& profile, std::size_t skill) const;

private:
    std::vector<std::pair<std::size_t, std::size_t>> edges_;
    std::vector<std::vector<std::size_t>> prerequisites_;
    std::vector<std::size_t> order_;
};

struct SimConfig {
    std::size_t students = 10000;
    std::size_t timesteps = 100;
    std::size_t items_per_step = 5;
    std::size_t item_bank_size = 1000;
    std::size_t skill_count = 6;
    std::vector<std::pair<std::size_t, std::size_t>> edges{{0, 1}, {1, 2}, {0, 3}, {3, 4}, {2, 5}, {4, 5}};
    double p_all_prereqs = 0.2;
    double p_missing = 0.05;
    double p_learn_ready = 0.10;
    double p_learn_unready = 0.01;
    double p_forget = 0.02;
    double slip = 0.10;
    double guess = 0.20;
    std::uint64_t seed = 0;

    void validate() const;
    SkillGraph graph() const { return SkillGraph(skill_count, edges); }
};

void to_json(nlohmann::json& j, const SimConfig& c);
void from_json(const nlohmann::json& j, SimConfig& c);

/// Item id -> aligned skill.
class ItemBank {
public:
    /// Contiguous blocks per skill; the first (size % skills) skills get one
    /// extra item.
    static ItemBank uniform(std::size_t size, std::size_t skill_count);

    std::size_t size() const { return skill_of_.size(); }
    std::size_t skill_of(std::size_t item) const;

private:
    std::vector<std::size_t> skill_of_;
};

/// Skills in topological order: Bernoulli(p_all_prereqs) when every
/// prerequisite is held in the profile being built, else Bernoulli(p_missing).
SkillProfile init_profile(const SkillGraph& graph, const SimConfig& config, Rng& rng);

/// Independent per-skill learn/forget step; readiness is judged on the
/// previous profile.
SkillProfile transition_profile(const SkillGraph& graph, const SimConfig& config, const SkillProfile& profile, Rng& rng);

/// 1 with probability 1 - slip if the item's skill is held, else guess.
int answer_item(const SimConfig& config, const ItemBank& bank, const SkillProfile& profile, std::size_t item, Rng& rng);

struct ProfileRecord {
    std::int64_t student = 0;
    std::int64_t t = 0;
    SkillProfile skills;
};

std::string to_jsonl(const ProfileRecord& r);

struct SimulatedStudent {
    std::vector<Interaction> interactions;
    std::vector<ProfileRecord> profiles;  // one per timestep, the profile used to answer
};

/// Deterministic in (config.seed, student).
SimulatedStudent simulate_student(const SkillGraph& graph, const ItemBank& bank, const SimConfig& config,
                                  std::int64_t student);

/// Streams students in id order to `sink`.
void generate_dataset(const SimConfig& config, const std::function<void(const SimulatedStudent&)>& sink);

struct SimulatedDataset {
    std::vector<Interaction> interactions;
    std::vector<ProfileRecord> profiles;
};

SimulatedDataset generate_dataset(const SimConfig& config);

}  // namespace lens::sim
