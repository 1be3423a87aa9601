#include "lens/eval.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <sstream>

#include "lens/error.hpp"
#include "lens/random.hpp"

namespace lens {

OneStepResult one_step_ahead(OnlinePredictor& predictor, const Dataset& students) {
    OneStepResult result;
    for (const auto& s : students) {
        if (s.responses.size() < 2) {
            ++result.skipped_students;
            continue;
        }
        predictor.begin_student(s.student);
        for (std::size_t n = 0; n < s.responses.size(); ++n) {
            const auto& x = s.responses[n];
            if (n > 0) result.records.push_back(PredictionRecord{s.student, n + 1, predictor.predict(x), x.correct});
            predictor.observe(x);
        }
    }
    return result;
}

double auc(std::span<const double> scores, std::span<const int> labels) {
    if (scores.size() != labels.size()) throw ShapeError("auc: score and label counts differ");
    std::vector<std::size_t> order(scores.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
    double positive_rank_sum = 0.0;
    std::size_t positives = 0;
    for (std::size_t i = 0; i < order.size();) {
        std::size_t j = i;
        while (j < order.size() && scores[order[j]] == scores[order[i]]) ++j;
        const double mid_rank = 0.5 * static_cast<double>(i + 1 + j);  // average of ranks i+1..j
        for (std::size_t k = i; k < j; ++k) {
            if (labels[order[k]] == 1) {
                positive_rank_sum += mid_rank;
                ++positives;
            }
        }
        i = j;
    }
    const std::size_t negatives = scores.size() - positives;
    if (positives == 0 || negatives == 0) throw InputError("auc undefined: need both positive and negative labels");
    const double np = static_cast<double>(positives);
    return (positive_rank_sum - np * (np + 1.0) / 2.0) / (np * static_cast<double>(negatives));
}

double auc(std::span<const PredictionRecord> records) {
    std::vector<double> scores;
    std::vector<int> labels;
    scores.reserve(records.size());
    labels.reserve(records.size());
    for (const auto& r : records) {
        scores.push_back(r.probability);
        labels.push_back(r.label);
    }
    return auc(scores, labels);
}

namespace {

template <typename Key>
std::map<Key, std::pair<std::vector<double>, std::vector<int>>> group_records(
    std::span<const PredictionRecord> records, Key (*key)(const PredictionRecord&)) {
    std::map<Key, std::pair<std::vector<double>, std::vector<int>>> groups;
    for (const auto& r : records) {
        auto& g = groups[key(r)];
        g.first.push_back(r.probability);
        g.second.push_back(r.label);
    }
    return groups;
}

std::optional<double> auc_if_defined(const std::vector<double>& scores, const std::vector<int>& labels) {
    const auto pos = std::count(labels.begin(), labels.end(), 1);
    if (pos == 0 || pos == static_cast<std::ptrdiff_t>(labels.size())) return std::nullopt;
    return auc(scores, labels);
}

}  // namespace

std::vector<std::optional<double>> per_position_auc(std::span<const PredictionRecord> records) {
    auto groups = group_records<std::size_t>(records, [](const PredictionRecord& r) { return r.position; });
    std::vector<std::optional<double>> out;
    if (groups.empty()) return out;
    out.resize(groups.rbegin()->first + 1);
    for (const auto& [position, g] : groups) out[position] = auc_if_defined(g.first, g.second);
    return out;
}

std::optional<double> macro_auc(std::span<const PredictionRecord> records) {
    auto groups = group_records<std::int64_t>(records, [](const PredictionRecord& r) { return r.student; });
    double total = 0.0;
    std::size_t n = 0;
    for (const auto& [student, g] : groups) {
        if (auto a = auc_if_defined(g.first, g.second)) {
            total += *a;
            ++n;
        }
    }
    if (n == 0) return std::nullopt;
    return total / static_cast<double>(n);
}

Calibration calibration(std::span<const PredictionRecord> records, std::size_t bins) {
    if (bins == 0) throw InputError("calibration needs at least one bin");
    Calibration out;
    out.bins.resize(bins);
    std::vector<double> sum_p(bins, 0.0), sum_y(bins, 0.0);
    for (std::size_t b = 0; b < bins; ++b) {
        out.bins[b].lower = static_cast<double>(b) / static_cast<double>(bins);
        out.bins[b].upper = static_cast<double>(b + 1) / static_cast<double>(bins);
    }
    for (const auto& r : records) {
        auto b = static_cast<std::size_t>(r.probability * static_cast<double>(bins));
        b = std::min(b, bins - 1);
        sum_p[b] += r.probability;
        sum_y[b] += r.label;
        ++out.bins[b].count;
    }
    const auto total = static_cast<double>(records.size());
    for (std::size_t b = 0; b < bins; ++b) {
        auto& bin = out.bins[b];
        if (bin.count == 0) continue;
        const auto c = static_cast<double>(bin.count);
        bin.mean_probability = sum_p[b] / c;
        bin.accuracy = sum_y[b] / c;
        out.ece += (c / total) * std::abs(bin.mean_probability - bin.accuracy);
    }
    return out;
}

MetricsReport summarize(const std::string& model, const OneStepResult& result) {
    MetricsReport report;
    report.model = model;
    report.n_records = result.records.size();
    report.skipped_students = result.skipped_students;
    report.auc = auc(result.records);
    report.macro_auc = macro_auc(result.records);
    report.ece = calibration(result.records).ece;
    report.per_position_auc = per_position_auc(result.records);
    return report;
}

nlohmann::json to_json(const MetricsReport& report) {
    nlohmann::json per_position = nlohmann::json::array();
    for (const auto& a : report.per_position_auc) per_position.push_back(a ? nlohmann::json(*a) : nlohmann::json());
    return nlohmann::json{{"model", report.model},
                          {"auc", report.auc},
                          {"macro_auc", report.macro_auc ? nlohmann::json(*report.macro_auc) : nlohmann::json()},
                          {"ece", report.ece},
                          {"n_records", report.n_records},
                          {"skipped_students", report.skipped_students},
                          {"per_position_auc", per_position}};
}

LensPredictor::LensPredictor(const LensModel& model, std::size_t samples, std::uint64_t seed)
    : model_(&model), samples_(samples), seed_(seed), filter_(model) {
    if (samples == 0) throw InputError("LensPredictor needs at least one sample");
}

void LensPredictor::begin_student(std::int64_t student) {
    filter_.reset();
    rng_ = make_stream(seed_, {kEvalStream, 1, static_cast<std::uint64_t>(student)});
}

double LensPredictor::predict(const Interaction& next) {
    const auto noise = standard_normal(rng_, static_cast<Eigen::Index>(model_->latent_dim()),
                                       static_cast<Eigen::Index>(samples_));
    return filter_.predict(model_->item_index(next.item), next.t, noise);
}

void LensPredictor::observe(const Interaction& x) { filter_.observe(x); }

UncertaintyProfile uncertainty_profile(const LensModel& model, const Dataset& students,
                                       std::span<const std::size_t> lengths, std::size_t samples, std::uint64_t seed) {
    UncertaintyProfile profile(lengths.size());
    for (std::size_t l = 0; l < lengths.size(); ++l) profile[l].length = lengths[l];
    for (const auto& s : students) {
        if (s.responses.empty()) continue;
        const auto& target = s.responses.back();
        std::span<const Interaction> history(s.responses.data(), s.responses.size() - 1);
        std::vector<std::size_t> usable;
        std::vector<std::size_t> slots;
        for (std::size_t l = 0; l < lengths.size(); ++l) {
            if (lengths[l] <= history.size()) {
                usable.push_back(lengths[l]);
                slots.push_back(l);
            }
        }
        if (usable.empty()) continue;
        auto rng = make_stream(seed, {kEvalStream, 2, static_cast<std::uint64_t>(s.student)});
        const auto noise =
            standard_normal(rng, static_cast<Eigen::Index>(model.latent_dim()), static_cast<Eigen::Index>(samples));
        const auto traces = posterior_trace(model, history, model.item_index(target.item), target.t, usable, noise);
        for (std::size_t k = 0; k < traces.size(); ++k) {
            const auto& p = traces[k];
            const double mean = std::accumulate(p.begin(), p.end(), 0.0) / static_cast<double>(p.size());
            double var = 0.0;
            for (double v : p) var += (v - mean) * (v - mean);
            var /= static_cast<double>(p.size());
            auto& row = profile[slots[k]];
            row.mean_probability += mean;
            row.std_probability += std::sqrt(var);
            ++row.students;
        }
    }
    for (auto& row : profile) {
        if (row.students == 0) continue;
        row.mean_probability /= static_cast<double>(row.students);
        row.std_probability /= static_cast<double>(row.students);
    }
    return profile;
}

std::string to_csv(const UncertaintyProfile& profile) {
    std::ostringstream os;
    os.precision(17);
    os << "length,mean_p,std_p,students\n";
    for (const auto& row : profile)
        os << row.length << ',' << row.mean_probability << ',' << row.std_probability << ',' << row.students << '\n';
    return os.str();
}

}  // namespace lens
