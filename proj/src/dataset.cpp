#include "lens/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <set>
#include <sstream>
#include <unordered_map>

#include "json.hpp"
#include "lens/error.hpp"
#include "lens/random.hpp"

namespace lens {

std::vector<TimestepBatch> bucket_by_timestep(std::span<const Interaction> responses) {
    std::vector<TimestepBatch> batches;
    for (const auto& x : responses) {
        if (!batches.empty()) {
            const auto& last = batches.back();
            if (x.student != last.student)
                throw InputError("bucket_by_timestep: mixed students " + std::to_string(last.student) + " and " +
                                 std::to_string(x.student));
            if (x.t < last.t)
                throw InputError("timesteps out of order for student " + std::to_string(x.student) + ": " +
                                 std::to_string(x.t) + " after " + std::to_string(last.t));
        }
        if (batches.empty() || batches.back().t != x.t) batches.push_back(TimestepBatch{x.student, x.t, {}});
        batches.back().responses.push_back(x);
    }
    return batches;
}

Dataset group_by_student(std::span<const Interaction> interactions) {
    std::map<std::int64_t, std::vector<Interaction>> by_student;
    for (const auto& x : interactions) by_student[x.student].push_back(x);
    Dataset out;
    out.reserve(by_student.size());
    for (auto& [id, responses] : by_student) out.push_back(StudentSequence{id, std::move(responses)});
    return out;
}

std::vector<Interaction> flatten(const Dataset& dataset) {
    std::vector<Interaction> out;
    out.reserve(interaction_count(dataset));
    for (const auto& s : dataset) out.insert(out.end(), s.responses.begin(), s.responses.end());
    return out;
}

std::size_t interaction_count(const Dataset& dataset) {
    std::size_t n = 0;
    for (const auto& s : dataset) n += s.responses.size();
    return n;
}

std::string to_jsonl(const Interaction& x) {
    std::string line;
    line.reserve(64);
    line += "{\"student\":";
    line += std::to_string(x.student);
    line += ",\"t\":";
    line += std::to_string(x.t);
    line += ",\"item\":";
    line += std::to_string(x.item);
    line += ",\"skill\":";
    line += std::to_string(x.skill);
    line += ",\"correct\":";
    line += std::to_string(x.correct);
    line += '}';
    return line;
}

void write_jsonl(std::ostream& out, std::span<const Interaction> interactions) {
    for (const auto& x : interactions) out << to_jsonl(x) << '\n';
}

void write_jsonl(const std::filesystem::path& path, std::span<const Interaction> interactions) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw InputError("cannot open " + path.string() + " for writing");
    write_jsonl(out, interactions);
}

namespace {

// Returns an empty string on success, otherwise a description of the problem.
std::string parse_line(const std::string& line, Interaction& x) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
        return std::string("invalid JSON: ") + e.what();
    }
    if (!j.is_object()) return "expected a JSON object";
    static const char* const kFields[] = {"student", "t", "item", "skill", "correct"};
    for (const char* f : kFields) {
        if (!j.contains(f)) return std::string("missing field '") + f + "'";
        if (!j[f].is_number_integer()) return std::string("field '") + f + "' must be an integer";
        if (j[f].get<std::int64_t>() < 0) return std::string("field '") + f + "' must be non-negative";
    }
    if (j.size() != 5) return "unexpected extra fields";
    const auto correct = j["correct"].get<std::int64_t>();
    if (correct != 0 && correct != 1) return "field 'correct' must be 0 or 1, got " + std::to_string(correct);
    x.student = j["student"].get<std::int64_t>();
    x.t = j["t"].get<std::int64_t>();
    x.item = j["item"].get<std::int64_t>();
    x.skill = j["skill"].get<std::int64_t>();
    x.correct = static_cast<int>(correct);
    return {};
}

}  // namespace

std::vector<Interaction> read_jsonl(std::istream& in) {
    std::vector<Interaction> out;
    std::string line;
    std::size_t number = 0;
    while (std::getline(in, line)) {
        ++number;
        if (line.empty()) continue;
        Interaction x;
        if (auto err = parse_line(line, x); !err.empty())
            throw InputError("line " + std::to_string(number) + ": " + err);
        out.push_back(x);
    }
    return out;
}

std::vector<Interaction> read_jsonl(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InputError("cannot open dataset " + path.string());
    return read_jsonl(in);
}

ValidationReport validate_dataset(std::istream& in, std::size_t max_reported) {
    ValidationReport report;
    std::unordered_map<std::int64_t, std::int64_t> last_t;
    std::unordered_map<std::int64_t, std::int64_t> item_skill;
    std::set<std::int64_t> skills;
    auto flag = [&](std::size_t line, std::string msg) {
        ++report.violation_count;
        if (report.violations.size() < max_reported) report.violations.push_back({line, std::move(msg)});
    };
    std::string line;
    while (std::getline(in, line)) {
        ++report.lines;
        if (line.empty()) continue;
        Interaction x;
        if (auto err = parse_line(line, x); !err.empty()) {
            flag(report.lines, "schema: " + err);
            continue;
        }
        ++report.interactions;
        if (auto it = last_t.find(x.student); it != last_t.end() && x.t < it->second)
            flag(report.lines, "monotonicity: student " + std::to_string(x.student) + " goes from t=" +
                                   std::to_string(it->second) + " to t=" + std::to_string(x.t));
        last_t[x.student] = std::max(last_t[x.student], x.t);
        if (auto [it, inserted] = item_skill.emplace(x.item, x.skill); !inserted && it->second != x.skill)
            flag(report.lines, "consistency: item " + std::to_string(x.item) + " tagged with skill " +
                                   std::to_string(x.skill) + " but earlier with " + std::to_string(it->second));
        skills.insert(x.skill);
    }
    report.students = last_t.size();
    report.items = item_skill.size();
    report.skills = skills.size();
    return report;
}

ValidationReport validate_dataset(const std::filesystem::path& path, std::size_t max_reported) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InputError("cannot open dataset " + path.string());
    return validate_dataset(in, max_reported);
}

DatasetSplit split_by_student(const Dataset& dataset, const SplitFractions& fractions, std::uint64_t seed) {
    const double total = fractions.train + fractions.validation + fractions.test;
    if (fractions.train < 0 || fractions.validation < 0 || fractions.test < 0 || std::abs(total - 1.0) > 1e-9)
        throw InputError("split fractions must be non-negative and sum to 1");
    std::vector<std::size_t> order(dataset.size());
    std::iota(order.begin(), order.end(), 0);
    auto rng = make_stream(seed, {kSplitStream});
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng() % i]);
    const auto n = dataset.size();
    const auto n_train = static_cast<std::size_t>(std::llround(fractions.train * static_cast<double>(n)));
    const auto n_val = std::min(n - n_train,
                                static_cast<std::size_t>(std::llround(fractions.validation * static_cast<double>(n))));
    DatasetSplit split;
    for (std::size_t k = 0; k < n; ++k) {
        const auto& s = dataset[order[k]];
        if (k < n_train)
            split.train.push_back(s);
        else if (k < n_train + n_val)
            split.validation.push_back(s);
        else
            split.test.push_back(s);
    }
    auto by_id = [](const StudentSequence& a, const StudentSequence& b) { return a.student < b.student; };
    std::sort(split.train.begin(), split.train.end(), by_id);
    std::sort(split.validation.begin(), split.validation.end(), by_id);
    std::sort(split.test.begin(), split.test.end(), by_id);
    return split;
}

}  // namespace lens
