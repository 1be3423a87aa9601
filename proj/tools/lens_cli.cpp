// Command-line front end: simulate, validate, train, evaluate, trace, profile.
//
// Exit codes: 0 success, 1 user/config error, 2 numeric failure.

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "lens/dataset.hpp"
#include "lens/error.hpp"
#include "lens/eval.hpp"
#include "lens/experiment.hpp"
#include "lens/model.hpp"
#include "lens/random.hpp"
#include "lens/simulator.hpp"

namespace {

using lens::InputError;

nlohmann::json read_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw InputError("cannot open " + path);
    try {
        return nlohmann::json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
        throw InputError(path + ": " + e.what());
    }
}

void write_text(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw InputError("cannot open " + path + " for writing");
    out << text;
}

std::vector<std::size_t> parse_lengths(const std::string& text) {
    std::vector<std::size_t> out;
    std::stringstream ss(text);
    std::string tok;
    while (std::getline(ss, tok, ',')) {
        try {
            std::size_t pos = 0;
            const long v = std::stol(tok, &pos);
            if (pos != tok.size() || v < 0) throw std::invalid_argument(tok);
            out.push_back(static_cast<std::size_t>(v));
        } catch (const std::exception&) {
            throw InputError("invalid length '" + tok + "' in --lengths");
        }
    }
    if (out.empty()) throw InputError("--lengths must list at least one value");
    return out;
}

lens::Dataset load_dataset(const std::string& path) {
    return lens::group_by_student(lens::read_jsonl(std::filesystem::path(path)));
}

struct SimulateArgs {
    std::string config;
    std::string out;
    std::string truth;
    std::optional<std::size_t> students, timesteps, items_per_step;
    std::optional<std::uint64_t> seed;
};

int cmd_simulate(const SimulateArgs& args) {
    lens::sim::SimConfig config;
    if (!args.config.empty()) {
        const auto j = read_json_file(args.config);
        // Accept either a bare simulator config or an experiment config.
        if (j.contains("simulator") || j.contains("lens"))
            config = lens::load_experiment_config(args.config).simulator;
        else
            config = j.get<lens::sim::SimConfig>();
    }
    if (args.students) config.students = *args.students;
    if (args.timesteps) config.timesteps = *args.timesteps;
    if (args.items_per_step) config.items_per_step = *args.items_per_step;
    if (args.seed) config.seed = *args.seed;
    config.validate();

    std::ofstream out(args.out, std::ios::binary);
    if (!out) throw InputError("cannot open " + args.out + " for writing");
    const std::string truth_path = args.truth.empty() ? args.out + ".truth.jsonl" : args.truth;
    std::ofstream truth(truth_path, std::ios::binary);
    if (!truth) throw InputError("cannot open " + truth_path + " for writing");

    std::size_t interactions = 0;
    std::size_t correct = 0;
    std::vector<std::size_t> first(config.skill_count, 0), last(config.skill_count, 0);
    std::string buffer;
    lens::sim::generate_dataset(config, [&](const lens::sim::SimulatedStudent& s) {
        buffer.clear();
        for (const auto& x : s.interactions) {
            buffer += lens::to_jsonl(x);
            buffer += '\n';
            correct += static_cast<std::size_t>(x.correct);
        }
        out << buffer;
        interactions += s.interactions.size();
        buffer.clear();
        for (const auto& p : s.profiles) {
            buffer += lens::sim::to_jsonl(p);
            buffer += '\n';
        }
        truth << buffer;
        for (std::size_t k = 0; k < config.skill_count; ++k) {
            first[k] += s.profiles.front().skills[k];
            last[k] += s.profiles.back().skills[k];
        }
    });
    std::cout << "students " << config.students << ", timesteps " << config.timesteps << ", interactions "
              << interactions << ", correct rate "
              << (interactions ? static_cast<double>(correct) / static_cast<double>(interactions) : 0.0) << "\n";
    std::cout << "skill  prevalence(t=0)  prevalence(t=" << config.timesteps - 1 << ")\n";
    for (std::size_t k = 0; k < config.skill_count; ++k) {
        std::cout << k << "  " << static_cast<double>(first[k]) / static_cast<double>(config.students) << "  "
                  << static_cast<double>(last[k]) / static_cast<double>(config.students) << "\n";
    }
    std::cout << "wrote " << args.out << " and " << truth_path << "\n";
    return 0;
}

int cmd_validate(const std::string& dataset) {
    const auto report = lens::validate_dataset(std::filesystem::path(dataset));
    std::cout << "lines " << report.lines << ", interactions " << report.interactions << ", students "
              << report.students << ", items " << report.items << ", skills " << report.skills << ", violations "
              << report.violation_count << "\n";
    for (const auto& v : report.violations) std::cout << "line " << v.line << ": " << v.message << "\n";
    return report.ok() ? 0 : 1;
}

int cmd_train(const std::string& dataset, const std::string& model, const std::string& config_path,
              const std::string& out, std::string log_path) {
    const auto kind = lens::parse_model_kind(model);
    const auto config = config_path.empty() ? lens::parse_experiment_config(nlohmann::json::object())
                                            : lens::load_experiment_config(config_path);
    const auto data = load_dataset(dataset);
    if (log_path.empty()) log_path = out + ".log.jsonl";
    std::ofstream log(log_path, std::ios::binary);
    if (!log) throw InputError("cannot open " + log_path + " for writing");
    const auto checkpoint = lens::train_checkpoint(kind, data, config, [&log](const nlohmann::json& line) {
        log << line.dump() << '\n';
        log.flush();
        std::cerr << line.dump() << '\n';
    });
    write_text(out, checkpoint.dump() + "\n");
    std::cout << "wrote " << out << " (" << model << "), log " << log_path << "\n";
    return 0;
}

int cmd_evaluate(const std::string& dataset, const std::string& checkpoint_path, const std::string& out) {
    const auto checkpoint = read_json_file(checkpoint_path);
    const auto data = load_dataset(dataset);
    const auto report = lens::evaluate_checkpoint(checkpoint, data);
    write_text(out, lens::to_json(report).dump(2) + "\n");
    std::cout << report.model << " AUC " << report.auc << " (" << report.n_records << " predictions, ECE "
              << report.ece << ")\n";
    return 0;
}

int cmd_trace(const std::string& checkpoint_path, const std::string& dataset, std::int64_t student,
              std::int64_t item, const std::string& lengths_text, std::size_t samples, const std::string& out) {
    const auto checkpoint = read_json_file(checkpoint_path);
    if (checkpoint.value("model", std::string()) != "lens") throw InputError("trace requires a LENS checkpoint");
    const auto model = lens::LensModel::from_json(checkpoint.at("lens"));
    const auto data = load_dataset(dataset);
    auto it = std::find_if(data.begin(), data.end(), [student](const auto& s) { return s.student == student; });
    if (it == data.end()) throw InputError("student " + std::to_string(student) + " not found in " + dataset);
    const auto lengths = parse_lengths(lengths_text);
    const auto& history = it->responses;
    const std::int64_t target_t = history.empty() ? 0 : history.back().t + 1;
    const auto seed = checkpoint.at("seed").get<std::uint64_t>();
    auto rng = lens::make_stream(seed, {lens::kEvalStream, 3, static_cast<std::uint64_t>(student)});
    const auto noise = lens::standard_normal(rng, static_cast<Eigen::Index>(model.latent_dim()),
                                             static_cast<Eigen::Index>(samples));
    const auto traces =
        lens::posterior_trace(model, history, model.item_index(item), target_t, lengths, noise);
    std::ostringstream os;
    os.precision(17);
    os << "length,sample,p\n";
    for (std::size_t l = 0; l < lengths.size(); ++l)
        for (std::size_t s = 0; s < traces[l].size(); ++s) os << lengths[l] << ',' << s << ',' << traces[l][s] << '\n';
    write_text(out, os.str());
    std::cout << "wrote " << lengths.size() * samples << " rows to " << out << "\n";
    return 0;
}

int cmd_profile(const std::string& checkpoint_path, const std::string& dataset, const std::string& lengths_text,
                std::size_t samples, const std::string& out) {
    const auto checkpoint = read_json_file(checkpoint_path);
    if (checkpoint.value("model", std::string()) != "lens") throw InputError("profile requires a LENS checkpoint");
    const auto model = lens::LensModel::from_json(checkpoint.at("lens"));
    const auto split = lens::split_for(checkpoint, load_dataset(dataset));
    const auto lengths = parse_lengths(lengths_text);
    const auto profile = lens::uncertainty_profile(model, split.test, lengths, samples,
                                                   checkpoint.at("seed").get<std::uint64_t>());
    write_text(out, lens::to_csv(profile));
    std::cout << lens::to_csv(profile);
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Dynamic LENS knowledge tracing: simulate, train, evaluate"};
    app.require_subcommand(1);

    SimulateArgs sim;
    auto* simulate = app.add_subcommand("simulate", "Generate a dynamic CDM dataset");
    simulate->add_option("--config", sim.config, "Simulator (or experiment) config JSON");
    simulate->add_option("--out", sim.out, "Output interactions JSONL")->required();
    simulate->add_option("--truth", sim.truth, "Output ground-truth profiles JSONL (default <out>.truth.jsonl)");
    simulate->add_option("--students", sim.students, "Override student count");
    simulate->add_option("--timesteps", sim.timesteps, "Override timestep count");
    simulate->add_option("--items-per-step", sim.items_per_step, "Override items per timestep");
    simulate->add_option("--seed", sim.seed, "Override simulator seed");

    std::string dataset, model = "lens", config, out, log, checkpoint, lengths = "1,5,25,50,99";
    std::int64_t student = 0, item = 0;
    std::size_t samples = 500;

    auto* validate = app.add_subcommand("validate", "Check a dataset file");
    validate->add_option("--dataset", dataset, "Interactions JSONL")->required();

    auto* train = app.add_subcommand("train", "Fit a model on the train split");
    train->add_option("--dataset", dataset, "Interactions JSONL")->required();
    train->add_option("--model", model, "lens, elo or bkt")->check(CLI::IsMember({"lens", "elo", "bkt"}));
    train->add_option("--config", config, "Experiment config JSON");
    train->add_option("--out", out, "Checkpoint path")->required();
    train->add_option("--log", log, "Training log JSONL (default <out>.log.jsonl)");

    auto* evaluate = app.add_subcommand("evaluate", "One-step-ahead evaluation on the test split");
    evaluate->add_option("--dataset", dataset, "Interactions JSONL")->required();
    evaluate->add_option("--checkpoint", checkpoint, "Checkpoint path")->required();
    evaluate->add_option("--out", out, "Metrics JSON")->required();

    auto* trace = app.add_subcommand("trace", "Posterior prediction samples for one student and item");
    trace->add_option("--checkpoint", checkpoint, "LENS checkpoint")->required();
    trace->add_option("--dataset", dataset, "Interactions JSONL")->required();
    trace->add_option("--student", student, "Student id")->required();
    trace->add_option("--item", item, "Target item id")->required();
    trace->add_option("--lengths", lengths, "Comma-separated history lengths");
    trace->add_option("--samples", samples, "Posterior samples per length")->check(CLI::PositiveNumber);
    trace->add_option("--out", out, "Output CSV (length,sample,p)")->required();

    auto* profile = app.add_subcommand("profile", "Uncertainty profile over test students");
    profile->add_option("--checkpoint", checkpoint, "LENS checkpoint")->required();
    profile->add_option("--dataset", dataset, "Interactions JSONL")->required();
    profile->add_option("--lengths", lengths, "Comma-separated history lengths");
    profile->add_option("--samples", samples, "Posterior samples per student")->check(CLI::PositiveNumber);
    profile->add_option("--out", out, "Output CSV (length,mean_p,std_p,students)")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? 0 : 1;
    }

    try {
        if (*simulate) return cmd_simulate(sim);
        if (*validate) return cmd_validate(dataset);
        if (*train) return cmd_train(dataset, model, config, out, log);
        if (*evaluate) return cmd_evaluate(dataset, checkpoint, out);
        if (*trace) return cmd_trace(checkpoint, dataset, student, item, lengths, samples, out);
        if (*profile) return cmd_profile(checkpoint, dataset, lengths, samples, out);
    } catch (const lens::NumericError& e) {
        std::cerr << "numeric failure: " << e.what() << "\n";
        return 2;
    } catch (const lens::Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const nlohmann::json::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 1;
}
