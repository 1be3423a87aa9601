#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "lens/baselines/bkt.hpp"
#include "lens/baselines/elo.hpp"
#include "lens/dataset.hpp"
#include "lens/eval.hpp"
#include "lens/model.hpp"
#include "lens/simulator.hpp"

namespace lens {

enum class ModelKind { lens, elo, bkt };

ModelKind parse_model_kind(const std::string& name);
std::string to_string(ModelKind kind);

/// Everything needed to reproduce a run. The root seed is pushed into every
/// component (LENS init/training/eval streams, BKT restarts, the split).
struct ExperimentConfig {
    std::uint64_t seed = 0;
    SplitFractions split{};
    LensConfig lens{};
    baselines::EloConfig elo{};
    baselines::BktConfig bkt{};
    sim::SimConfig simulator{};

    void validate() const;
};

void to_json(nlohmann::json& j, const ExperimentConfig& c);
/// Missing keys keep their defaults; "simulator" may be an object or a path
/// to a JSON file (resolved relative to `base_dir`).
ExperimentConfig parse_experiment_config(const nlohmann::json& j, const std::string& base_dir = ".");
ExperimentConfig load_experiment_config(const std::string& path);

using LogSink = std::function<void(const nlohmann::json&)>;

/// Fits a model on the train split (validation split used for LENS metrics
/// and Elo's K search). Returns the checkpoint document.
nlohmann::json train_checkpoint(ModelKind kind, const Dataset& data, const ExperimentConfig& config,
                                const LogSink& log = {}, std::size_t workers = 0);

/// Lists every item/skill in `data` the checkpointed model cannot handle.
std::vector<std::string> vocabulary_problems(const nlohmann::json& checkpoint, const Dataset& data);

/// One-step-ahead evaluation of the checkpoint on the test split.
MetricsReport evaluate_checkpoint(const nlohmann::json& checkpoint, const Dataset& data,
                                  OneStepResult* records = nullptr);

DatasetSplit split_for(const nlohmann::json& checkpoint, const Dataset& data);

}  // namespace lens
