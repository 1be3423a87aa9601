#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "lens/dataset.hpp"
#include "lens/model.hpp"

namespace lens {

/// Prediction of the N-th response (1-based, N >= 2) of a student.
struct PredictionRecord {
    std::int64_t student = 0;
    std::size_t position = 0;
    double probability = 0.5;
    int label = 0;
};

/// Anything that can predict a student's next response and then learn from it.
class OnlinePredictor {
public:
    virtual ~OnlinePredictor() = default;
    virtual void begin_student(std::int64_t student) = 0;
    virtual double predict(const Interaction& next) = 0;
    virtual void observe(const Interaction& x) = 0;
};

struct OneStepResult {
    std::vector<PredictionRecord> records;
    std::size_t skipped_students = 0;  // fewer than two responses
};

/// Predicts every response N >= 2 from responses 1..N-1, then reveals it.
OneStepResult one_step_ahead(OnlinePredictor& predictor, const Dataset& students);

/// Mann-Whitney AUC with half credit for ties. Throws InputError unless both
/// classes are present.
double auc(std::span<const double> scores, std::span<const int> labels);
double auc(std::span<const PredictionRecord> records);

/// AUC restricted to each position N (index N of the result); nullopt where a
/// position has a single class.
std::vector<std::optional<double>> per_position_auc(std::span<const PredictionRecord> records);

/// Mean of per-student AUCs over students with both classes.
std::optional<double> macro_auc(std::span<const PredictionRecord> records);

struct CalibrationBin {
    double lower = 0.0;
    double upper = 0.0;
    double mean_probability = 0.0;
    double accuracy = 0.0;
    std::size_t count = 0;
};

struct Calibration {
    std::vector<CalibrationBin> bins;
    double ece = 0.0;
};

/// Equal-width bins on p; ECE = sum (count/total) |mean p - accuracy|.
Calibration calibration(std::span<const PredictionRecord> records, std::size_t bins = 10);

struct MetricsReport {
    std::string model;
    double auc = 0.5;
    std::optional<double> macro_auc;
    double ece = 0.0;
    std::size_t n_records = 0;
    std::size_t skipped_students = 0;
    std::vector<std::optional<double>> per_position_auc;
};

MetricsReport summarize(const std::string& model, const OneStepResult& result);
nlohmann::json to_json(const MetricsReport& report);

/// Online LENS predictor: posterior-sample average with a per-student noise
/// stream derived from `seed`.
class LensPredictor : public OnlinePredictor {
public:
    LensPredictor(const LensModel& model, std::size_t samples, std::uint64_t seed);

    void begin_student(std::int64_t student) override;
    double predict(const Interaction& next) override;
    void observe(const Interaction& x) override;

private:
    const LensModel* model_;
    std::size_t samples_;
    std::uint64_t seed_;
    LensFilter filter_;
    Rng rng_;
};

struct UncertaintyRow {
    std::size_t length = 0;
    double mean_probability = 0.0;
    double std_probability = 0.0;  // mean over students of the posterior-sample std
    std::size_t students = 0;
};

using UncertaintyProfile = std::vector<UncertaintyRow>;

/// For each student the target is the final response and the history is
/// everything before it. For each L the history is cut to its L most recent
/// responses and S posterior samples are decoded. Students whose history is
/// shorter than L are skipped for that L.
UncertaintyProfile uncertainty_profile(const LensModel& model, const Dataset& students,
                                       std::span<const std::size_t> lengths, std::size_t samples, std::uint64_t seed);

std::string to_csv(const UncertaintyProfile& profile);

}  // namespace lens
