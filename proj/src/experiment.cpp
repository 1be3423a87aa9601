#include "lens/experiment.hpp"

#include <filesystem>
#include <fstream>
#include <set>

#include "lens/error.hpp"

namespace lens {

ModelKind parse_model_kind(const std::string& name) {
    if (name == "lens") return ModelKind::lens;
    if (name == "elo") return ModelKind::elo;
    if (name == "bkt") return ModelKind::bkt;
    throw InputError("unknown model '" + name + "' (expected lens, elo or bkt)");
}

std::string to_string(ModelKind kind) {
    switch (kind) {
        case ModelKind::lens:
            return "lens";
        case ModelKind::elo:
            return "elo";
        case ModelKind::bkt:
            return "bkt";
    }
    return "lens";
}

void ExperimentConfig::validate() const {
    const double total = split.train + split.validation + split.test;
    if (split.train <= 0 || split.validation < 0 || split.test <= 0 || std::abs(total - 1.0) > 1e-9)
        throw InputError("experiment config: split fractions must be positive and sum to 1");
    lens.validate();
    simulator.validate();
}

void to_json(nlohmann::json& j, const ExperimentConfig& c) {
    j = nlohmann::json{{"seed", c.seed},
                       {"split", {{"train", c.split.train}, {"validation", c.split.validation}, {"test", c.split.test}}},
                       {"lens", c.lens},
                       {"elo", c.elo},
                       {"bkt", c.bkt},
                       {"simulator", c.simulator}};
}

ExperimentConfig parse_experiment_config(const nlohmann::json& j, const std::string& base_dir) {
    if (!j.is_object()) throw InputError("experiment config must be a JSON object");
    for (const auto& [key, _] : j.items())
        if (key != "seed" && key != "split" && key != "lens" && key != "elo" && key != "bkt" && key != "simulator")
            throw InputError("experiment config: unknown key '" + key + "'");
    ExperimentConfig c;
    try {
        if (j.contains("seed")) c.seed = j.at("seed").get<std::uint64_t>();
        if (j.contains("split")) {
            const auto& s = j.at("split");
            c.split.train = s.value("train", c.split.train);
            c.split.validation = s.value("validation", c.split.validation);
            c.split.test = s.value("test", c.split.test);
        }
        if (j.contains("lens")) c.lens = j.at("lens").get<LensConfig>();
        if (j.contains("elo")) c.elo = j.at("elo").get<baselines::EloConfig>();
        if (j.contains("bkt")) c.bkt = j.at("bkt").get<baselines::BktConfig>();
        if (j.contains("simulator")) {
            const auto& s = j.at("simulator");
            if (s.is_string()) {
                std::filesystem::path p = s.get<std::string>();
                if (p.is_relative()) p = std::filesystem::path(base_dir) / p;
                std::ifstream in(p);
                if (!in) throw InputError("cannot open simulator config " + p.string());
                c.simulator = nlohmann::json::parse(in).get<sim::SimConfig>();
            } else {
                c.simulator = s.get<sim::SimConfig>();
            }
        }
    } catch (const nlohmann::json::exception& e) {
        throw InputError(std::string("experiment config: ") + e.what());
    }
    c.lens.seed = c.seed;
    c.bkt.seed = c.seed;
    c.validate();
    return c;
}

ExperimentConfig load_experiment_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw InputError("cannot open config " + path);
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
        throw InputError("config " + path + ": " + e.what());
    }
    return parse_experiment_config(j, std::filesystem::path(path).parent_path().string());
}

namespace {

ExperimentConfig experiment_of(const nlohmann::json& checkpoint) {
    if (!checkpoint.contains("experiment")) throw InputError("checkpoint lacks an experiment section");
    return parse_experiment_config(checkpoint.at("experiment"));
}

}  // namespace

DatasetSplit split_for(const nlohmann::json& checkpoint, const Dataset& data) {
    const auto config = experiment_of(checkpoint);
    return split_by_student(data, config.split, config.seed);
}

nlohmann::json train_checkpoint(ModelKind kind, const Dataset& data, const ExperimentConfig& config,
                                const LogSink& log, std::size_t workers) {
    config.validate();
    const auto split = split_by_student(data, config.split, config.seed);
    if (split.train.empty()) throw InputError("train split is empty");
    nlohmann::json checkpoint{{"model", to_string(kind)}, {"experiment", config}, {"seed", config.seed}};
    switch (kind) {
        case ModelKind::lens: {
            LensConfig lc = config.lens;
            lc.seed = config.seed;
            LensModel model(lc);
            train(model, split.train, split.validation,
                  [&log](const EpochMetrics& m) {
                      if (log) log(nlohmann::json(m));
                  },
                  workers);
            checkpoint["lens"] = model.to_json();
            break;
        }
        case ModelKind::elo: {
            auto fit = baselines::elo_fit(split.train, split.validation, config.elo);
            for (const auto& [k, val_auc] : fit.grid)
                if (log) log(nlohmann::json{{"k", k}, {"val_auc", val_auc}});
            checkpoint["elo"] = fit.state.to_json();
            break;
        }
        case ModelKind::bkt: {
            baselines::BktConfig bc = config.bkt;
            bc.seed = config.seed;
            auto fit = baselines::bkt_em_fit(split.train, {}, bc);
            for (const auto& [skill, ll] : fit.log_likelihood)
                if (log)
                    log(nlohmann::json{{"skill", skill}, {"iterations", ll.size()}, {"log_likelihood", ll.back()}});
            for (const auto& w : fit.warnings)
                if (log) log(nlohmann::json{{"warning", w}});
            checkpoint["bkt"] = fit.params.to_json();
            break;
        }
    }
    return checkpoint;
}

std::vector<std::string> vocabulary_problems(const nlohmann::json& checkpoint, const Dataset& data) {
    std::vector<std::string> problems;
    const auto kind = parse_model_kind(checkpoint.at("model").get<std::string>());
    if (kind == ModelKind::lens) {
        const auto item_count = checkpoint.at("lens").at("config").at("item_count").get<std::int64_t>();
        std::set<std::int64_t> unknown;
        for (const auto& s : data)
            for (const auto& x : s.responses)
                if (x.item >= item_count) unknown.insert(x.item);
        for (auto item : unknown) problems.push_back("unknown item " + std::to_string(item));
    } else if (kind == ModelKind::bkt) {
        const auto params = baselines::BktParameters::from_json(checkpoint.at("bkt"));
        std::set<std::int64_t> unknown;
        for (const auto& s : data)
            for (const auto& x : s.responses)
                if (!params.has_skill(x.skill)) unknown.insert(x.skill);
        for (auto skill : unknown) problems.push_back("unknown skill " + std::to_string(skill));
    }
    return problems;
}

MetricsReport evaluate_checkpoint(const nlohmann::json& checkpoint, const Dataset& data, OneStepResult* records) {
    const auto config = experiment_of(checkpoint);
    const auto split = split_by_student(data, config.split, config.seed);
    const auto kind = parse_model_kind(checkpoint.at("model").get<std::string>());
    if (auto problems = vocabulary_problems(checkpoint, split.test); !problems.empty()) {
        std::string msg = "vocabulary mismatch:";
        for (std::size_t i = 0; i < problems.size() && i < 20; ++i) msg += " " + problems[i] + ";";
        if (problems.size() > 20) msg += " (" + std::to_string(problems.size() - 20) + " more)";
        throw InputError(msg);
    }
    OneStepResult result;
    switch (kind) {
        case ModelKind::lens: {
            const auto model = LensModel::from_json(checkpoint.at("lens"));
            LensPredictor predictor(model, model.config().eval_samples, config.seed);
            result = one_step_ahead(predictor, split.test);
            break;
        }
        case ModelKind::elo: {
            baselines::EloPredictor predictor(baselines::EloState::from_json(checkpoint.at("elo")));
            result = one_step_ahead(predictor, split.test);
            break;
        }
        case ModelKind::bkt: {
            const auto params = baselines::BktParameters::from_json(checkpoint.at("bkt"));
            baselines::BktPredictor predictor(params);
            result = one_step_ahead(predictor, split.test);
            break;
        }
    }
    auto report = summarize(to_string(kind), result);
    if (records) *records = std::move(result);
    return report;
}

}  // namespace lens
