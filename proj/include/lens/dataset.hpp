#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

namespace lens {

/// One graded response: student i answered item j at timestep t.
struct Interaction {
    std::int64_t student = 0;
    std::int64_t t = 0;
    std::int64_t item = 0;
    std::int64_t skill = 0;
    int correct = 0;

    bool operator==(const Interaction&) const = default;
};

/// All responses of one student in file order (t non-decreasing).
struct StudentSequence {
    std::int64_t student = 0;
    std::vector<Interaction> responses;
};

using Dataset = std::vector<StudentSequence>;

/// Responses of one student sharing a timestep; treated as exchangeable.
struct TimestepBatch {
    std::int64_t student = 0;
    std::int64_t t = 0;
    std::vector<Interaction> responses;
};

/// Buckets consecutive responses with equal t. Throws InputError if t
/// decreases or the student id changes.
std::vector<TimestepBatch> bucket_by_timestep(std::span<const Interaction> responses);

/// Groups interactions by student (ordered by student id), keeping file order
/// within a student.
Dataset group_by_student(std::span<const Interaction> interactions);

std::vector<Interaction> flatten(const Dataset& dataset);
std::size_t interaction_count(const Dataset& dataset);

/// Exact line format: {"student":1,"t":0,"item":5,"skill":2,"correct":1}
std::string to_jsonl(const Interaction& x);
void write_jsonl(std::ostream& out, std::span<const Interaction> interactions);
void write_jsonl(const std::filesystem::path& path, std::span<const Interaction> interactions);

/// Strict parse; throws InputError naming the 1-based line number of the
/// first malformed line.
std::vector<Interaction> read_jsonl(std::istream& in);
std::vector<Interaction> read_jsonl(const std::filesystem::path& path);

struct Violation {
    std::size_t line = 0;
    std::string message;
};

struct ValidationReport {
    std::size_t lines = 0;
    std::size_t interactions = 0;
    std::size_t students = 0;
    std::size_t items = 0;
    std::size_t skills = 0;
    std::size_t violation_count = 0;
    std::vector<Violation> violations;  // first `max_reported` only

    bool ok() const { return violation_count == 0; }
};

/// Checks schema, per-student monotone t, and that every item keeps a single
/// skill tag.
ValidationReport validate_dataset(std::istream& in, std::size_t max_reported = 10);
ValidationReport validate_dataset(const std::filesystem::path& path, std::size_t max_reported = 10);

struct SplitFractions {
    double train = 0.8;
    double validation = 0.1;
    double test = 0.1;
};

struct DatasetSplit {
    Dataset train;
    Dataset validation;
    Dataset test;
};

/// Seeded split by student.
DatasetSplit split_by_student(const Dataset& dataset, const SplitFractions& fractions, std::uint64_t seed);

}  // namespace lens
